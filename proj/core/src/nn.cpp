#include "casvid/nn.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <cstring>

#include "casvid/errors.hpp"
#include "casvid/rng.hpp"

namespace casvid {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Map = Eigen::Map<RowMat>;
using ConstMap = Eigen::Map<const RowMat>;

void gemm(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate) {
    ConstMap A(a, m, k), B(b, k, n);
    Map C(c, m, n);
    if (accumulate)
        C.noalias() += A * B;
    else
        C.noalias() = A * B;
}

void gemm_tn(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate) {
    ConstMap A(a, k, m), B(b, k, n);
    Map C(c, m, n);
    if (accumulate)
        C.noalias() += A.transpose() * B;
    else
        C.noalias() = A.transpose() * B;
}

void gemm_nt(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate) {
    ConstMap A(a, m, k), B(b, n, k);
    Map C(c, m, n);
    if (accumulate)
        C.noalias() += A * B.transpose();
    else
        C.noalias() = A * B.transpose();
}

/*=============================== parameters ===============================*/

const char* to_string(ParamTag tag) {
    switch (tag) {
        case ParamTag::spatial: return "spatial";
        case ParamTag::temporal: return "temporal";
        case ParamTag::frozen: return "frozen";
    }
    return "?";
}

void Param::ensure_grad() {
    if (!grad.same_shape(value)) grad = Tensor(value.shape());
}

void ParamRegistry::add(Param* p) {
    if (p->name.empty()) throw Error("parameter registered without a name");
    if (index_.count(p->name)) throw Error("duplicate parameter name: " + p->name);
    index_[p->name] = params_.size();
    params_.push_back(p);
}

Param* ParamRegistry::find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : params_[it->second];
}

void ParamRegistry::zero_grad() {
    for (Param* p : params_) {
        p->ensure_grad();
        p->grad.zero();
    }
}

std::int64_t ParamRegistry::total_size() const {
    std::int64_t n = 0;
    for (const Param* p : params_) n += p->value.size();
    return n;
}

std::int64_t ParamRegistry::trainable_size() const {
    std::int64_t n = 0;
    for (const Param* p : params_)
        if (p->tag != ParamTag::frozen) n += p->value.size();
    return n;
}

std::map<std::string, ParamTag> ParamRegistry::tag_map() const {
    std::map<std::string, ParamTag> m;
    for (const Param* p : params_)
        if (p->tag != ParamTag::frozen) m[p->name] = p->tag;
    return m;
}

namespace {

void register_param(ParamRegistry& reg, Param& p, const std::string& name, ParamTag tag) {
    p.name = name;
    p.tag = tag;
    p.ensure_grad();
    reg.add(&p);
}

void fill_normal_scaled(Tensor& t, Rng& rng, double std_dev) {
    double* d = t.data();
    for (std::int64_t i = 0; i < t.size(); ++i) d[i] = std_dev * rng.normal();
}

}  // namespace

/*================================= Conv2d =================================*/

namespace {

// Reusable per-thread workspaces for the im2col buffers; they are fully
// overwritten on every use.
double* scratch(std::size_t which, std::size_t n) {
    thread_local std::vector<double, AlignedAllocator<double>> pools[3];
    auto& pool = pools[which];
    if (pool.size() < n) pool.resize(n);
    return pool.data();
}

}  // namespace

Conv2d::Conv2d(int in_ch_, int out_ch_, int kernel_, int stride_, int pad_)
    : in_ch(in_ch_), out_ch(out_ch_), kernel(kernel_), stride(stride_), pad(pad_) {
    w.value = Tensor({out_ch, in_ch, kernel, kernel});
    b.value = Tensor({out_ch});
}

void Conv2d::init_kaiming(Rng& rng, double gain) {
    fill_normal_scaled(w.value, rng, gain * std::sqrt(2.0 / (in_ch * kernel * kernel)));
    b.value.zero();
}

void Conv2d::init_zero() {
    w.value.zero();
    b.value.zero();
}

void Conv2d::register_params(ParamRegistry& reg, const std::string& prefix, ParamTag tag) {
    register_param(reg, w, prefix + ".weight", tag);
    register_param(reg, b, prefix + ".bias", tag);
}

std::vector<int> Conv2d::out_shape(const std::vector<int>& in) const {
    if (in.size() != 4) throw DimError("conv2d expects (N,C,H,W), got " + shape_str(in));
    if (in[1] != in_ch)
        throw DimError("conv2d channel mismatch: got " + std::to_string(in[1]) + ", want " +
                       std::to_string(in_ch));
    const int ho = (in[2] + 2 * pad - kernel) / stride + 1;
    const int wo = (in[3] + 2 * pad - kernel) / stride + 1;
    if (ho < 1 || wo < 1) throw DimError("conv2d output collapses for input " + shape_str(in));
    return {in[0], out_ch, ho, wo};
}

namespace {

// Column buffers are laid out (C*k*k, row_stride) with each sample owning a
// contiguous ho*wo slice of every row, so one GEMM covers the whole batch.
void im2col_into(const double* x, int C, int H, int W, int k, int stride, int pad, int ho, int wo,
                 double* cols, std::int64_t row_stride) {
    for (int c = 0; c < C; ++c) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                double* row = cols + ((static_cast<std::int64_t>(c) * k + ky) * k + kx) * row_stride;
                for (int oy = 0; oy < ho; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= H) {
                        std::memset(row + oy * wo, 0, sizeof(double) * static_cast<std::size_t>(wo));
                        continue;
                    }
                    const double* src = x + (static_cast<std::int64_t>(c) * H + iy) * W;
                    const int x0 = std::max(0, (pad - kx + stride - 1) / stride);
                    const int x1 = std::min(wo, (W - 1 + pad - kx) / stride + 1);
                    double* out = row + oy * wo;
                    for (int ox = 0; ox < x0; ++ox) out[ox] = 0.0;
                    for (int ox = x0; ox < x1; ++ox) out[ox] = src[ox * stride - pad + kx];
                    for (int ox = x1; ox < wo; ++ox) out[ox] = 0.0;
                }
            }
        }
    }
}

void col2im_add_from(const double* cols, std::int64_t row_stride, int C, int H, int W, int k,
                     int stride, int pad, int ho, int wo, double* x) {
    for (int c = 0; c < C; ++c) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const double* row =
                    cols + ((static_cast<std::int64_t>(c) * k + ky) * k + kx) * row_stride;
                for (int oy = 0; oy < ho; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= H) continue;
                    double* dst = x + (static_cast<std::int64_t>(c) * H + iy) * W;
                    const int x0 = std::max(0, (pad - kx + stride - 1) / stride);
                    const int x1 = std::min(wo, (W - 1 + pad - kx) / stride + 1);
                    for (int ox = x0; ox < x1; ++ox) dst[ox * stride - pad + kx] += row[oy * wo + ox];
                }
            }
        }
    }
}

}  // namespace

Tensor Conv2d::forward(const Tensor& x, bool training) {
    const auto oshape = out_shape(x.shape());
    const int N = x.dim(0), H = x.dim(2), W = x.dim(3);
    const int ho = oshape[2], wo = oshape[3];
    const int ow = ho * wo;
    const int ck2 = in_ch * kernel * kernel;
    if (training) x_ = x;

    // one GEMM across the whole batch, tall orientation:
    // Yt (N*ow, out_ch) = cols^T (N*ow, ck2) * W^T (ck2, out_ch)
    const std::int64_t now = static_cast<std::int64_t>(N) * ow;
    double* cols = scratch(0, static_cast<std::size_t>(ck2) * now);
    const std::int64_t in_stride = static_cast<std::int64_t>(in_ch) * H * W;
    for (int n = 0; n < N; ++n)
        im2col_into(x.data() + n * in_stride, in_ch, H, W, kernel, stride, pad, ho, wo,
                    cols + static_cast<std::int64_t>(n) * ow, now);
    double* yt = scratch(1, static_cast<std::size_t>(now) * out_ch);
    {
        ConstMap A(cols, ck2, now);
        ConstMap B(w.value.data(), out_ch, ck2);
        Map C(yt, now, out_ch);
        C.noalias() = A.transpose() * B.transpose();
    }

    Tensor y(oshape);
    const std::int64_t out_stride = static_cast<std::int64_t>(out_ch) * ow;
    for (int n = 0; n < N; ++n) {
        double* yn = y.data() + n * out_stride;
        const double* src = yt + static_cast<std::int64_t>(n) * ow * out_ch;
        for (int i = 0; i < ow; ++i)
            for (int o = 0; o < out_ch; ++o)
                yn[static_cast<std::int64_t>(o) * ow + i] =
                    src[static_cast<std::int64_t>(i) * out_ch + o] + b.value[o];
    }
    return y;
}

Tensor Conv2d::backward(const Tensor& dy) {
    const int N = x_.dim(0), H = x_.dim(2), W = x_.dim(3);
    const int ho = dy.dim(2), wo = dy.dim(3);
    const int ow = ho * wo;
    const int ck2 = in_ch * kernel * kernel;
    w.ensure_grad();
    b.ensure_grad();

    const std::int64_t in_stride = static_cast<std::int64_t>(in_ch) * H * W;
    const std::int64_t out_stride = static_cast<std::int64_t>(out_ch) * ow;

    // repack dy as (out_ch, N*ow) and rebuild batched cols
    const std::int64_t now = static_cast<std::int64_t>(N) * ow;
    double* dyt = scratch(2, static_cast<std::size_t>(out_ch) * now);
    for (int n = 0; n < N; ++n) {
        const double* dyn = dy.data() + n * out_stride;
        for (int o = 0; o < out_ch; ++o) {
            const double* row = dyn + static_cast<std::int64_t>(o) * ow;
            double* dst = dyt + static_cast<std::int64_t>(o) * now + static_cast<std::int64_t>(n) * ow;
            double s = 0.0;
            for (int i = 0; i < ow; ++i) {
                dst[i] = row[i];
                s += row[i];
            }
            b.grad[o] += s;
        }
    }
    double* cols = scratch(0, static_cast<std::size_t>(ck2) * now);
    for (int n = 0; n < N; ++n)
        im2col_into(x_.data() + n * in_stride, in_ch, H, W, kernel, stride, pad, ho, wo,
                    cols + static_cast<std::int64_t>(n) * ow, now);

    gemm_nt(dyt, cols, w.grad.data(), out_ch, now, ck2, true);

    double* dcols = scratch(1, static_cast<std::size_t>(ck2) * now);
    gemm_tn(w.value.data(), dyt, dcols, ck2, out_ch, now, false);
    Tensor dx(x_.shape());
    for (int n = 0; n < N; ++n)
        col2im_add_from(dcols + static_cast<std::int64_t>(n) * ow, now, in_ch, H, W, kernel, stride,
                        pad, ho, wo, dx.data() + n * in_stride);
    return dx;
}

/*============================== TemporalConv ==============================*/

TemporalConv::TemporalConv(int channels_, int kernel_) : channels(channels_), kernel(kernel_) {
    if (kernel % 2 == 0) throw ConfigError("temporal kernel must be odd");
    w.value = Tensor({kernel, channels, channels});
    b.value = Tensor({channels});
}

void TemporalConv::init_delta() {
    w.value.zero();
    const int mid = kernel / 2;
    for (int c = 0; c < channels; ++c)
        w.value[(static_cast<std::int64_t>(mid) * channels + c) * channels + c] = 1.0;
    b.value.zero();
}

void TemporalConv::register_params(ParamRegistry& reg, const std::string& prefix, ParamTag tag) {
    register_param(reg, w, prefix + ".weight", tag);
    register_param(reg, b, prefix + ".bias", tag);
}

Tensor TemporalConv::forward(const Tensor& x, int B, int F, bool training) {
    if (x.rank() != 4 || x.dim(0) != B * F || x.dim(1) != channels)
        throw DimError("temporal conv input mismatch: " + shape_str(x.shape()));
    if (training) {
        x_ = x;
        B_ = B;
        F_ = F;
    }
    const int hw = x.dim(2) * x.dim(3);
    const int off = kernel / 2;
    const std::int64_t frame_stride = static_cast<std::int64_t>(channels) * hw;

    Tensor y(x.shape());
    for (int n = 0; n < B * F; ++n) {
        double* yn = y.data() + n * frame_stride;
        for (int c = 0; c < channels; ++c) {
            const double bias = b.value[c];
            double* row = yn + static_cast<std::int64_t>(c) * hw;
            for (int i = 0; i < hw; ++i) row[i] = bias;
        }
    }
    for (int bi = 0; bi < B; ++bi) {
        for (int f = 0; f < F; ++f) {
            double* yn = y.data() + (static_cast<std::int64_t>(bi) * F + f) * frame_stride;
            for (int tau = 0; tau < kernel; ++tau) {
                const int fi = f + tau - off;
                if (fi < 0 || fi >= F) continue;
                const double* xn = x.data() + (static_cast<std::int64_t>(bi) * F + fi) * frame_stride;
                gemm(w.value.data() + static_cast<std::int64_t>(tau) * channels * channels, xn, yn,
                     channels, channels, hw, true);
            }
        }
    }
    return y;
}

Tensor TemporalConv::backward(const Tensor& dy) {
    w.ensure_grad();
    b.ensure_grad();
    const int hw = x_.dim(2) * x_.dim(3);
    const int off = kernel / 2;
    const std::int64_t frame_stride = static_cast<std::int64_t>(channels) * hw;

    Tensor dx(x_.shape());
    for (int n = 0; n < B_ * F_; ++n) {
        const double* dyn = dy.data() + n * frame_stride;
        for (int c = 0; c < channels; ++c) {
            double s = 0.0;
            const double* row = dyn + static_cast<std::int64_t>(c) * hw;
            for (int i = 0; i < hw; ++i) s += row[i];
            b.grad[c] += s;
        }
    }
    for (int bi = 0; bi < B_; ++bi) {
        for (int f = 0; f < F_; ++f) {
            const double* dyn = dy.data() + (static_cast<std::int64_t>(bi) * F_ + f) * frame_stride;
            for (int tau = 0; tau < kernel; ++tau) {
                const int fi = f + tau - off;
                if (fi < 0 || fi >= F_) continue;
                const std::int64_t src = (static_cast<std::int64_t>(bi) * F_ + fi) * frame_stride;
                gemm_nt(dyn, x_.data() + src,
                        w.grad.data() + static_cast<std::int64_t>(tau) * channels * channels,
                        channels, hw, channels, true);
                gemm_tn(w.value.data() + static_cast<std::int64_t>(tau) * channels * channels, dyn,
                        dx.data() + src, channels, channels, hw, true);
            }
        }
    }
    return dx;
}

/*================================= Linear =================================*/

Linear::Linear(int in_dim_, int out_dim_) : in_dim(in_dim_), out_dim(out_dim_) {
    w.value = Tensor({out_dim, in_dim});
    b.value = Tensor({out_dim});
}

void Linear::init_kaiming(Rng& rng, double gain) {
    fill_normal_scaled(w.value, rng, gain * std::sqrt(2.0 / in_dim));
    b.value.zero();
}

void Linear::init_zero() {
    w.value.zero();
    b.value.zero();
}

void Linear::register_params(ParamRegistry& reg, const std::string& prefix, ParamTag tag) {
    register_param(reg, w, prefix + ".weight", tag);
    register_param(reg, b, prefix + ".bias", tag);
}

Tensor Linear::forward(const Tensor& x, bool training) {
    if (x.rank() != 2 || x.dim(1) != in_dim)
        throw DimError("linear input mismatch: " + shape_str(x.shape()));
    if (training) x_ = x;
    const int N = x.dim(0);
    Tensor y({N, out_dim});
    gemm_nt(x.data(), w.value.data(), y.data(), N, in_dim, out_dim, false);
    for (int n = 0; n < N; ++n)
        for (int o = 0; o < out_dim; ++o) y[static_cast<std::int64_t>(n) * out_dim + o] += b.value[o];
    return y;
}

Tensor Linear::backward(const Tensor& dy) {
    w.ensure_grad();
    b.ensure_grad();
    const int N = x_.dim(0);
    gemm_tn(dy.data(), x_.data(), w.grad.data(), out_dim, N, in_dim, true);
    for (int n = 0; n < N; ++n)
        for (int o = 0; o < out_dim; ++o) b.grad[o] += dy[static_cast<std::int64_t>(n) * out_dim + o];
    Tensor dx({N, in_dim});
    gemm(dy.data(), w.value.data(), dx.data(), N, out_dim, in_dim, false);
    return dx;
}

/*================================ GroupNorm ================================*/

GroupNorm::GroupNorm(int groups_, int channels_, double eps_)
    : groups(groups_), channels(channels_), eps(eps_) {
    if (channels % groups != 0)
        throw ConfigError("group norm: channels " + std::to_string(channels) +
                          " not divisible by groups " + std::to_string(groups));
    gamma.value = Tensor::full({channels}, 1.0);
    beta.value = Tensor({channels});
}

void GroupNorm::register_params(ParamRegistry& reg, const std::string& prefix, ParamTag tag) {
    register_param(reg, gamma, prefix + ".gamma", tag);
    register_param(reg, beta, prefix + ".beta", tag);
}

Tensor GroupNorm::forward(const Tensor& x, bool training) {
    if (x.rank() != 4 || x.dim(1) != channels)
        throw DimError("group norm input mismatch: " + shape_str(x.shape()));
    const int N = x.dim(0), HW = x.dim(2) * x.dim(3);
    const int cpg = channels / groups;
    const std::int64_t gsize = static_cast<std::int64_t>(cpg) * HW;

    if (training) {
        xhat_ = Tensor(x.shape());
        inv_std_ = Tensor({N, groups});
    }
    Tensor y(x.shape());
    for (int n = 0; n < N; ++n) {
        for (int g = 0; g < groups; ++g) {
            const double* xs = x.data() + (static_cast<std::int64_t>(n) * channels + g * cpg) * HW;
            double mu = 0.0;
            for (std::int64_t i = 0; i < gsize; ++i) mu += xs[i];
            mu /= static_cast<double>(gsize);
            double var = 0.0;
            for (std::int64_t i = 0; i < gsize; ++i) {
                const double d = xs[i] - mu;
                var += d * d;
            }
            var /= static_cast<double>(gsize);
            const double istd = 1.0 / std::sqrt(var + eps);
            if (training) inv_std_[static_cast<std::int64_t>(n) * groups + g] = istd;
            double* xh =
                training ? xhat_.data() + (static_cast<std::int64_t>(n) * channels + g * cpg) * HW
                         : nullptr;
            double* yo = y.data() + (static_cast<std::int64_t>(n) * channels + g * cpg) * HW;
            for (int c = 0; c < cpg; ++c) {
                const double ga = gamma.value[g * cpg + c], be = beta.value[g * cpg + c];
                for (int i = 0; i < HW; ++i) {
                    const double v = (xs[static_cast<std::int64_t>(c) * HW + i] - mu) * istd;
                    if (xh) xh[static_cast<std::int64_t>(c) * HW + i] = v;
                    yo[static_cast<std::int64_t>(c) * HW + i] = ga * v + be;
                }
            }
        }
    }
    return y;
}

Tensor GroupNorm::backward(const Tensor& dy) {
    gamma.ensure_grad();
    beta.ensure_grad();
    const int N = dy.dim(0), HW = dy.dim(2) * dy.dim(3);
    const int cpg = channels / groups;
    const std::int64_t gsize = static_cast<std::int64_t>(cpg) * HW;

    Tensor dx(dy.shape());
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < channels; ++c) {
            const double* dyr = dy.data() + (static_cast<std::int64_t>(n) * channels + c) * HW;
            const double* xhr = xhat_.data() + (static_cast<std::int64_t>(n) * channels + c) * HW;
            double dg = 0.0, db = 0.0;
            for (int i = 0; i < HW; ++i) {
                dg += dyr[i] * xhr[i];
                db += dyr[i];
            }
            gamma.grad[c] += dg;
            beta.grad[c] += db;
        }
        for (int g = 0; g < groups; ++g) {
            // dxhat = dy * gamma; dx = istd * (dxhat - mean(dxhat) - xhat * mean(dxhat*xhat))
            const std::int64_t base = (static_cast<std::int64_t>(n) * channels + g * cpg) * HW;
            const double istd = inv_std_[static_cast<std::int64_t>(n) * groups + g];
            double m1 = 0.0, m2 = 0.0;
            for (int c = 0; c < cpg; ++c) {
                const double ga = gamma.value[g * cpg + c];
                const double* dyr = dy.data() + base + static_cast<std::int64_t>(c) * HW;
                const double* xhr = xhat_.data() + base + static_cast<std::int64_t>(c) * HW;
                for (int i = 0; i < HW; ++i) {
                    const double dxh = dyr[i] * ga;
                    m1 += dxh;
                    m2 += dxh * xhr[i];
                }
            }
            m1 /= static_cast<double>(gsize);
            m2 /= static_cast<double>(gsize);
            for (int c = 0; c < cpg; ++c) {
                const double ga = gamma.value[g * cpg + c];
                const double* dyr = dy.data() + base + static_cast<std::int64_t>(c) * HW;
                const double* xhr = xhat_.data() + base + static_cast<std::int64_t>(c) * HW;
                double* dxr = dx.data() + base + static_cast<std::int64_t>(c) * HW;
                for (int i = 0; i < HW; ++i)
                    dxr[i] = istd * (dyr[i] * ga - m1 - xhr[i] * m2);
            }
        }
    }
    return dx;
}

/*================================== SiLU ==================================*/

Tensor silu(const Tensor& x) {
    Tensor y = x;
    Eigen::Map<Eigen::ArrayXd> a(y.data(), y.size());
    a = a / (1.0 + (-a).exp());
    return y;
}

Tensor SiLU::forward(const Tensor& x, bool training) {
    if (training) x_ = x;
    return silu(x);
}

Tensor SiLU::backward(const Tensor& dy) {
    Tensor dx = dy;
    Eigen::Map<Eigen::ArrayXd> d(dx.data(), dx.size());
    Eigen::Map<const Eigen::ArrayXd> x(x_.data(), x_.size());
    const auto s = 1.0 / (1.0 + (-x).exp());
    d *= s * (1.0 + x * (1.0 - s));
    return dx;
}

/*================================ Embedding ================================*/

Embedding::Embedding(int rows_, int dim_) : rows(rows_), dim(dim_) {
    table.value = Tensor({rows, dim});
}

void Embedding::init_normal(Rng& rng, double std_dev) { fill_normal_scaled(table.value, rng, std_dev); }

void Embedding::register_params(ParamRegistry& reg, const std::string& prefix, ParamTag tag) {
    register_param(reg, table, prefix + ".weight", tag);
}

Tensor Embedding::forward(const std::vector<int>& ids, bool training) {
    if (training) ids_ = ids;
    Tensor out({static_cast<int>(ids.size()), dim});
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || ids[i] >= rows)
            throw DimError("embedding id " + std::to_string(ids[i]) + " out of range");
        std::memcpy(out.data() + static_cast<std::int64_t>(i) * dim,
                    table.value.data() + static_cast<std::int64_t>(ids[i]) * dim,
                    sizeof(double) * static_cast<std::size_t>(dim));
    }
    return out;
}

void Embedding::backward(const Tensor& dy) {
    table.ensure_grad();
    for (std::size_t i = 0; i < ids_.size(); ++i) {
        double* g = table.grad.data() + static_cast<std::int64_t>(ids_[i]) * dim;
        const double* d = dy.data() + static_cast<std::int64_t>(i) * dim;
        for (int j = 0; j < dim; ++j) g[j] += d[j];
    }
}

/*============================= attention core =============================*/

namespace {

// Row-wise softmax of an (m, n) buffer in place.
void softmax_rows(double* s, int m, int n) {
    for (int i = 0; i < m; ++i) {
        double* row = s + static_cast<std::int64_t>(i) * n;
        double mx = row[0];
        for (int j = 1; j < n; ++j) mx = std::max(mx, row[j]);
        for (int j = 0; j < n; ++j) row[j] -= mx;
    }
    Eigen::Map<Eigen::ArrayXd> all(s, static_cast<std::int64_t>(m) * n);
    all = all.exp();
    for (int i = 0; i < m; ++i) {
        double* row = s + static_cast<std::int64_t>(i) * n;
        double z = 0.0;
        for (int j = 0; j < n; ++j) z += row[j];
        const double inv = 1.0 / z;
        for (int j = 0; j < n; ++j) row[j] *= inv;
    }
}

// dS given P = softmax(S) and dP, rows of length n; overwrites dp.
void softmax_rows_backward(const double* p, double* dp, int m, int n) {
    for (int i = 0; i < m; ++i) {
        const double* pr = p + static_cast<std::int64_t>(i) * n;
        double* dr = dp + static_cast<std::int64_t>(i) * n;
        double acc = 0.0;
        for (int j = 0; j < n; ++j) acc += pr[j] * dr[j];
        for (int j = 0; j < n; ++j) dr[j] = pr[j] * (dr[j] - acc);
    }
}

}  // namespace

/*============================= CrossAttention =============================*/

CrossAttention::CrossAttention(int channels_, int ctx_dim_, int heads_, int norm_groups)
    : norm(norm_groups, channels_), channels(channels_), ctx_dim(ctx_dim_), heads(heads_) {
    if (channels % heads != 0) throw ConfigError("attention channels not divisible by heads");
    wq.value = Tensor({channels, channels});
    wk.value = Tensor({channels, ctx_dim});
    wv.value = Tensor({channels, ctx_dim});
    wo.value = Tensor({channels, channels});
    bo.value = Tensor({channels});
}

void CrossAttention::init(Rng& rng) {
    fill_normal_scaled(wq.value, rng, std::sqrt(1.0 / channels));
    fill_normal_scaled(wk.value, rng, std::sqrt(1.0 / ctx_dim));
    fill_normal_scaled(wv.value, rng, std::sqrt(1.0 / ctx_dim));
    // Small but nonzero so conditioning influences the output from step 0.
    fill_normal_scaled(wo.value, rng, 0.2 * std::sqrt(1.0 / channels));
    bo.value.zero();
}

void CrossAttention::register_params(ParamRegistry& reg, const std::string& prefix, ParamTag tag) {
    norm.register_params(reg, prefix + ".norm", tag);
    register_param(reg, wq, prefix + ".to_q.weight", tag);
    register_param(reg, wk, prefix + ".to_k.weight", tag);
    register_param(reg, wv, prefix + ".to_v.weight", tag);
    register_param(reg, wo, prefix + ".to_out.weight", tag);
    register_param(reg, bo, prefix + ".to_out.bias", tag);
}

Tensor CrossAttention::forward(const Tensor& x, int B, int F, const std::vector<Tensor>& ctx,
                               bool training) {
    if (x.dim(0) != B * F || x.dim(1) != channels)
        throw DimError("cross attention input mismatch: " + shape_str(x.shape()));
    if (static_cast<int>(ctx.size()) != B)
        throw DimError("cross attention expects one context per clip");
    const int N = B * F, HW = x.dim(2) * x.dim(3);
    const int dh = channels / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    const std::int64_t cs = static_cast<std::int64_t>(channels) * HW;

    Tensor xn = norm.forward(x, training);
    Tensor q({N, channels, HW});
    for (int n = 0; n < N; ++n)
        gemm(wq.value.data(), xn.data() + n * cs, q.data() + n * cs, channels, channels, HW, false);

    std::vector<Tensor> k(static_cast<std::size_t>(B)), v(static_cast<std::size_t>(B));
    for (int bi = 0; bi < B; ++bi) {
        const Tensor& cb = ctx[static_cast<std::size_t>(bi)];
        if (cb.rank() != 2 || cb.dim(1) != ctx_dim)
            throw DimError("context must be (K," + std::to_string(ctx_dim) + "), got " +
                           shape_str(cb.shape()));
        const int K = cb.dim(0);
        k[static_cast<std::size_t>(bi)] = Tensor({channels, K});
        v[static_cast<std::size_t>(bi)] = Tensor({channels, K});
        gemm_nt(wk.value.data(), cb.data(), k[static_cast<std::size_t>(bi)].data(), channels,
                ctx_dim, K, false);
        gemm_nt(wv.value.data(), cb.data(), v[static_cast<std::size_t>(bi)].data(), channels,
                ctx_dim, K, false);
    }

    std::vector<Tensor> attn(static_cast<std::size_t>(N));
    Tensor o({N, channels, HW});
    for (int n = 0; n < N; ++n) {
        const int bi = n / F;
        const Tensor& kb = k[static_cast<std::size_t>(bi)];
        const Tensor& vb = v[static_cast<std::size_t>(bi)];
        const int K = kb.dim(1);
        Tensor& p = attn[static_cast<std::size_t>(n)];
        p = Tensor({heads, HW, K});
        for (int h = 0; h < heads; ++h) {
            const double* qh = q.data() + n * cs + static_cast<std::int64_t>(h) * dh * HW;
            const double* kh = kb.data() + static_cast<std::int64_t>(h) * dh * K;
            double* ph = p.data() + static_cast<std::int64_t>(h) * HW * K;
            gemm_tn(qh, kh, ph, HW, dh, K, false);
            for (std::int64_t i = 0; i < static_cast<std::int64_t>(HW) * K; ++i) ph[i] *= scale;
            softmax_rows(ph, HW, K);
            // O_h (dh, HW) = V_h (dh, K) * P^T (K, HW)
            gemm_nt(vb.data() + static_cast<std::int64_t>(h) * dh * K, ph,
                    o.data() + n * cs + static_cast<std::int64_t>(h) * dh * HW, dh, K, HW, false);
        }
    }

    Tensor y = x;
    Tensor proj({channels, HW});
    for (int n = 0; n < N; ++n) {
        double* yn = y.data() + n * cs;
        gemm(wo.value.data(), o.data() + n * cs, proj.data(), channels, channels, HW, false);
        const double* pr = proj.data();
        for (int c = 0; c < channels; ++c) {
            const double bias = bo.value[c];
            double* row = yn + static_cast<std::int64_t>(c) * HW;
            const double* prow = pr + static_cast<std::int64_t>(c) * HW;
            for (int i = 0; i < HW; ++i) row[i] += prow[i] + bias;
        }
    }

    if (training) {
        x_ = x;
        B_ = B;
        F_ = F;
        ctx_ = ctx;
        xn_ = std::move(xn);
        q_ = std::move(q);
        k_ = std::move(k);
        v_ = std::move(v);
        attn_ = std::move(attn);
        o_ = std::move(o);
    }
    return y;
}

Tensor CrossAttention::backward(const Tensor& dy, std::vector<Tensor>& dctx) {
    wq.ensure_grad();
    wk.ensure_grad();
    wv.ensure_grad();
    wo.ensure_grad();
    bo.ensure_grad();
    const int N = B_ * F_, HW = x_.dim(2) * x_.dim(3);
    const int dh = channels / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    const std::int64_t cs = static_cast<std::int64_t>(channels) * HW;

    if (dctx.size() != k_.size()) dctx.assign(k_.size(), Tensor());

    Tensor dxn({N, channels, HW});
    dxn.zero();
    Tensor dq({channels, HW});
    std::vector<Tensor> dk(k_.size()), dv(v_.size());
    for (std::size_t bi = 0; bi < k_.size(); ++bi) {
        dk[bi] = Tensor(k_[bi].shape());
        dv[bi] = Tensor(v_[bi].shape());
    }

    for (int n = 0; n < N; ++n) {
        const int bi = n / F_;
        const Tensor& kb = k_[static_cast<std::size_t>(bi)];
        const Tensor& vb = v_[static_cast<std::size_t>(bi)];
        const int K = kb.dim(1);
        const double* dyn = dy.data() + n * cs;

        // through the output projection
        for (int c = 0; c < channels; ++c) {
            double s = 0.0;
            const double* row = dyn + static_cast<std::int64_t>(c) * HW;
            for (int i = 0; i < HW; ++i) s += row[i];
            bo.grad[c] += s;
        }
        gemm_nt(dyn, o_.data() + n * cs, wo.grad.data(), channels, HW, channels, true);
        Tensor do_({channels, HW});
        gemm_tn(wo.value.data(), dyn, do_.data(), channels, channels, HW, false);

        const Tensor& p = attn_[static_cast<std::size_t>(n)];
        Tensor dp({HW, K});
        for (int h = 0; h < heads; ++h) {
            const double* doh = do_.data() + static_cast<std::int64_t>(h) * dh * HW;
            const double* ph = p.data() + static_cast<std::int64_t>(h) * HW * K;
            // dV_h += dO_h * P ; dP = dO_h^T * V_h
            gemm(doh, ph, dv[static_cast<std::size_t>(bi)].data() + static_cast<std::int64_t>(h) * dh * K,
                 dh, HW, K, true);
            gemm_tn(doh, vb.data() + static_cast<std::int64_t>(h) * dh * K, dp.data(), HW, dh, K,
                    false);
            softmax_rows_backward(ph, dp.data(), HW, K);
            double* dpd = dp.data();
            for (std::int64_t i = 0; i < static_cast<std::int64_t>(HW) * K; ++i) dpd[i] *= scale;
            // dQ_h = K_h * dS^T ; dK_h += Q_h * dS
            gemm_nt(kb.data() + static_cast<std::int64_t>(h) * dh * K, dp.data(),
                    dq.data() + static_cast<std::int64_t>(h) * dh * HW, dh, K, HW, false);
            gemm(q_.data() + n * cs + static_cast<std::int64_t>(h) * dh * HW, dp.data(),
                 dk[static_cast<std::size_t>(bi)].data() + static_cast<std::int64_t>(h) * dh * K, dh,
                 HW, K, true);
        }
        gemm_nt(dq.data(), xn_.data() + n * cs, wq.grad.data(), channels, HW, channels, true);
        gemm_tn(wq.value.data(), dq.data(), dxn.data() + n * cs, channels, channels, HW, false);
    }

    // K = Wk ctx^T and V = Wv ctx^T, so dWk += dK ctx, dctx += dK^T Wk (+ V path).
    for (std::size_t bi = 0; bi < k_.size(); ++bi) {
        const Tensor& cb = ctx_[bi];
        const int K = k_[bi].dim(1);
        if (dctx[bi].size() == 0) dctx[bi] = Tensor({K, ctx_dim});
        gemm(dk[bi].data(), cb.data(), wk.grad.data(), channels, K, ctx_dim, true);
        gemm(dv[bi].data(), cb.data(), wv.grad.data(), channels, K, ctx_dim, true);
        gemm_tn(dk[bi].data(), wk.value.data(), dctx[bi].data(), K, channels, ctx_dim, true);
        gemm_tn(dv[bi].data(), wv.value.data(), dctx[bi].data(), K, channels, ctx_dim, true);
    }

    Tensor dx = norm.backward(dxn.reshaped(x_.shape()));
    dx += dy;  // residual branch
    return dx;
}

/*=========================== TemporalAttention ============================*/

TemporalAttention::TemporalAttention(int channels_, int heads_, int norm_groups)
    : norm(norm_groups, channels_), channels(channels_), heads(heads_) {
    if (channels % heads != 0) throw ConfigError("attention channels not divisible by heads");
    wq.value = Tensor({channels, channels});
    wk.value = Tensor({channels, channels});
    wv.value = Tensor({channels, channels});
    wo.value = Tensor({channels, channels});
    bo.value = Tensor({channels});
}

void TemporalAttention::init(Rng& rng) {
    fill_normal_scaled(wq.value, rng, std::sqrt(1.0 / channels));
    fill_normal_scaled(wk.value, rng, std::sqrt(1.0 / channels));
    fill_normal_scaled(wv.value, rng, std::sqrt(1.0 / channels));
    wo.value.zero();  // identity at init
    bo.value.zero();
}

void TemporalAttention::register_params(ParamRegistry& reg, const std::string& prefix,
                                        ParamTag tag) {
    norm.register_params(reg, prefix + ".norm", tag);
    register_param(reg, wq, prefix + ".to_q.weight", tag);
    register_param(reg, wk, prefix + ".to_k.weight", tag);
    register_param(reg, wv, prefix + ".to_v.weight", tag);
    register_param(reg, wo, prefix + ".to_out.weight", tag);
    register_param(reg, bo, prefix + ".to_out.bias", tag);
}

Tensor TemporalAttention::forward(const Tensor& x, int B, int F, bool training) {
    if (x.dim(0) != B * F || x.dim(1) != channels)
        throw DimError("temporal attention input mismatch: " + shape_str(x.shape()));
    const int N = B * F, HW = x.dim(2) * x.dim(3);
    const int dh = channels / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    const std::int64_t cs = static_cast<std::int64_t>(channels) * HW;

    Tensor xn = norm.forward(x, training);
    Tensor q({N, channels, HW}), k({N, channels, HW}), v({N, channels, HW});
    for (int n = 0; n < N; ++n) {
        gemm(wq.value.data(), xn.data() + n * cs, q.data() + n * cs, channels, channels, HW, false);
        gemm(wk.value.data(), xn.data() + n * cs, k.data() + n * cs, channels, channels, HW, false);
        gemm(wv.value.data(), xn.data() + n * cs, v.data() + n * cs, channels, channels, HW, false);
    }

    // scores laid out (B, heads, F, F, HW): every inner op is a contiguous
    // pass over the HW pixels
    Tensor attn({B, heads, F, F, HW});
    Tensor o({N, channels, HW});
    std::vector<double> mx(static_cast<std::size_t>(HW)), zs(static_cast<std::size_t>(HW));
    auto row = [&](const Tensor& t, int bi, int f, int h, int d) {
        return t.data() + (static_cast<std::int64_t>(bi) * F + f) * cs +
               (static_cast<std::int64_t>(h) * dh + d) * HW;
    };
    for (int bi = 0; bi < B; ++bi) {
        for (int h = 0; h < heads; ++h) {
            double* sb = attn.data() +
                         ((static_cast<std::int64_t>(bi) * heads + h) * F) * F * HW;
            for (int f1 = 0; f1 < F; ++f1) {
                for (int f2 = 0; f2 < F; ++f2) {
                    double* srow = sb + (static_cast<std::int64_t>(f1) * F + f2) * HW;
                    std::memset(srow, 0, sizeof(double) * static_cast<std::size_t>(HW));
                    for (int d = 0; d < dh; ++d) {
                        const double* qr = row(q, bi, f1, h, d);
                        const double* kr = row(k, bi, f2, h, d);
                        for (int p = 0; p < HW; ++p) srow[p] += qr[p] * kr[p];
                    }
                    for (int p = 0; p < HW; ++p) srow[p] *= scale;
                }
                // softmax over f2, per pixel
                double* s0 = sb + static_cast<std::int64_t>(f1) * F * HW;
                std::memcpy(mx.data(), s0, sizeof(double) * static_cast<std::size_t>(HW));
                for (int f2 = 1; f2 < F; ++f2) {
                    const double* srow = s0 + static_cast<std::int64_t>(f2) * HW;
                    for (int p = 0; p < HW; ++p) mx[static_cast<std::size_t>(p)] = std::max(mx[static_cast<std::size_t>(p)], srow[p]);
                }
                std::memset(zs.data(), 0, sizeof(double) * zs.size());
                for (int f2 = 0; f2 < F; ++f2) {
                    double* srow = s0 + static_cast<std::int64_t>(f2) * HW;
                    Eigen::Map<Eigen::ArrayXd> a(srow, HW);
                    Eigen::Map<const Eigen::ArrayXd> m(mx.data(), HW);
                    a = (a - m).exp();
                    for (int p = 0; p < HW; ++p) zs[static_cast<std::size_t>(p)] += srow[p];
                }
                for (int f2 = 0; f2 < F; ++f2) {
                    double* srow = s0 + static_cast<std::int64_t>(f2) * HW;
                    for (int p = 0; p < HW; ++p) srow[p] /= zs[static_cast<std::size_t>(p)];
                }
                // O[f1] = sum_f2 P[f1][f2] * V[f2]
                for (int d = 0; d < dh; ++d) {
                    double* orow = o.data() + (static_cast<std::int64_t>(bi) * F + f1) * cs +
                                   (static_cast<std::int64_t>(h) * dh + d) * HW;
                    std::memset(orow, 0, sizeof(double) * static_cast<std::size_t>(HW));
                    for (int f2 = 0; f2 < F; ++f2) {
                        const double* prow = s0 + static_cast<std::int64_t>(f2) * HW;
                        const double* vr = row(v, bi, f2, h, d);
                        for (int p = 0; p < HW; ++p) orow[p] += prow[p] * vr[p];
                    }
                }
            }
        }
    }

    Tensor y = x;
    Tensor proj({channels, HW});
    for (int n = 0; n < N; ++n) {
        gemm(wo.value.data(), o.data() + n * cs, proj.data(), channels, channels, HW, false);
        double* yn = y.data() + n * cs;
        const double* pr = proj.data();
        for (int c = 0; c < channels; ++c) {
            const double bias = bo.value[c];
            for (int i = 0; i < HW; ++i)
                yn[static_cast<std::int64_t>(c) * HW + i] += pr[static_cast<std::int64_t>(c) * HW + i] + bias;
        }
    }

    if (training) {
        x_ = x;
        B_ = B;
        F_ = F;
        xn_ = std::move(xn);
        q_ = std::move(q);
        k_ = std::move(k);
        v_ = std::move(v);
        attn_ = std::move(attn);
        o_ = std::move(o);
    }
    return y;
}

Tensor TemporalAttention::backward(const Tensor& dy) {
    wq.ensure_grad();
    wk.ensure_grad();
    wv.ensure_grad();
    wo.ensure_grad();
    bo.ensure_grad();
    const int N = B_ * F_, HW = x_.dim(2) * x_.dim(3);
    const int F = F_;
    const int dh = channels / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    const std::int64_t cs = static_cast<std::int64_t>(channels) * HW;

    Tensor do_({N, channels, HW});
    for (int n = 0; n < N; ++n) {
        const double* dyn = dy.data() + n * cs;
        for (int c = 0; c < channels; ++c) {
            double sum = 0.0;
            const double* crow = dyn + static_cast<std::int64_t>(c) * HW;
            for (int i = 0; i < HW; ++i) sum += crow[i];
            bo.grad[c] += sum;
        }
        gemm_nt(dyn, o_.data() + n * cs, wo.grad.data(), channels, HW, channels, true);
        gemm_tn(wo.value.data(), dyn, do_.data() + n * cs, channels, channels, HW, false);
    }

    Tensor dq({N, channels, HW}), dkt({N, channels, HW}), dvt({N, channels, HW});
    Tensor dp({F, F, HW});
    std::vector<double> acc(static_cast<std::size_t>(HW));
    auto row = [&](const Tensor& t, int bi, int f, int h, int d) {
        return t.data() + (static_cast<std::int64_t>(bi) * F + f) * cs +
               (static_cast<std::int64_t>(h) * dh + d) * HW;
    };
    auto wrow = [&](Tensor& t, int bi, int f, int h, int d) {
        return t.data() + (static_cast<std::int64_t>(bi) * F + f) * cs +
               (static_cast<std::int64_t>(h) * dh + d) * HW;
    };
    for (int bi = 0; bi < B_; ++bi) {
        for (int h = 0; h < heads; ++h) {
            const double* pb = attn_.data() +
                               ((static_cast<std::int64_t>(bi) * heads + h) * F) * F * HW;
            // dP = dO . V ; dV += P^T . dO
            for (int f1 = 0; f1 < F; ++f1) {
                for (int f2 = 0; f2 < F; ++f2) {
                    double* dprow = dp.data() + (static_cast<std::int64_t>(f1) * F + f2) * HW;
                    std::memset(dprow, 0, sizeof(double) * static_cast<std::size_t>(HW));
                    for (int d = 0; d < dh; ++d) {
                        const double* dor = row(do_, bi, f1, h, d);
                        const double* vr = row(v_, bi, f2, h, d);
                        for (int p = 0; p < HW; ++p) dprow[p] += dor[p] * vr[p];
                    }
                }
            }
            for (int f2 = 0; f2 < F; ++f2)
                for (int d = 0; d < dh; ++d) {
                    double* dvr = wrow(dvt, bi, f2, h, d);
                    for (int f1 = 0; f1 < F; ++f1) {
                        const double* prow = pb + (static_cast<std::int64_t>(f1) * F + f2) * HW;
                        const double* dor = row(do_, bi, f1, h, d);
                        for (int p = 0; p < HW; ++p) dvr[p] += prow[p] * dor[p];
                    }
                }
            // softmax backward over f2, then the scale factor
            for (int f1 = 0; f1 < F; ++f1) {
                std::memset(acc.data(), 0, sizeof(double) * acc.size());
                const double* p0 = pb + static_cast<std::int64_t>(f1) * F * HW;
                double* dp0 = dp.data() + static_cast<std::int64_t>(f1) * F * HW;
                for (int f2 = 0; f2 < F; ++f2) {
                    const double* prow = p0 + static_cast<std::int64_t>(f2) * HW;
                    const double* dprow = dp0 + static_cast<std::int64_t>(f2) * HW;
                    for (int p = 0; p < HW; ++p) acc[static_cast<std::size_t>(p)] += prow[p] * dprow[p];
                }
                for (int f2 = 0; f2 < F; ++f2) {
                    const double* prow = p0 + static_cast<std::int64_t>(f2) * HW;
                    double* dprow = dp0 + static_cast<std::int64_t>(f2) * HW;
                    for (int p = 0; p < HW; ++p)
                        dprow[p] = scale * prow[p] * (dprow[p] - acc[static_cast<std::size_t>(p)]);
                }
            }
            // dQ = dS . K ; dK += dS^T . Q
            for (int f1 = 0; f1 < F; ++f1)
                for (int d = 0; d < dh; ++d) {
                    double* dqr = wrow(dq, bi, f1, h, d);
                    for (int f2 = 0; f2 < F; ++f2) {
                        const double* dprow = dp.data() + (static_cast<std::int64_t>(f1) * F + f2) * HW;
                        const double* kr = row(k_, bi, f2, h, d);
                        for (int p = 0; p < HW; ++p) dqr[p] += dprow[p] * kr[p];
                    }
                }
            for (int f2 = 0; f2 < F; ++f2)
                for (int d = 0; d < dh; ++d) {
                    double* dkr = wrow(dkt, bi, f2, h, d);
                    for (int f1 = 0; f1 < F; ++f1) {
                        const double* dprow = dp.data() + (static_cast<std::int64_t>(f1) * F + f2) * HW;
                        const double* qr = row(q_, bi, f1, h, d);
                        for (int p = 0; p < HW; ++p) dkr[p] += dprow[p] * qr[p];
                    }
                }
        }
    }

    Tensor dxn({N, channels, HW});
    for (int n = 0; n < N; ++n) {
        gemm_nt(dq.data() + n * cs, xn_.data() + n * cs, wq.grad.data(), channels, HW, channels, true);
        gemm_nt(dkt.data() + n * cs, xn_.data() + n * cs, wk.grad.data(), channels, HW, channels, true);
        gemm_nt(dvt.data() + n * cs, xn_.data() + n * cs, wv.grad.data(), channels, HW, channels, true);
        gemm_tn(wq.value.data(), dq.data() + n * cs, dxn.data() + n * cs, channels, channels, HW, false);
        gemm_tn(wk.value.data(), dkt.data() + n * cs, dxn.data() + n * cs, channels, channels, HW, true);
        gemm_tn(wv.value.data(), dvt.data() + n * cs, dxn.data() + n * cs, channels, channels, HW, true);
    }
    Tensor dx = norm.backward(dxn.reshaped(x_.shape()));
    dx += dy;
    return dx;
}

/*================================ pooling =================================*/

Tensor Upsample2x::forward(const Tensor& x, bool training) {
    if (training) in_shape_ = x.shape();
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    Tensor y({N, C, 2 * H, 2 * W});
    for (int nc = 0; nc < N * C; ++nc) {
        const double* src = x.data() + static_cast<std::int64_t>(nc) * H * W;
        double* dst = y.data() + static_cast<std::int64_t>(nc) * 4 * H * W;
        for (int i = 0; i < H; ++i) {
            for (int j = 0; j < W; ++j) {
                const double v = src[i * W + j];
                dst[(2 * i) * 2 * W + 2 * j] = v;
                dst[(2 * i) * 2 * W + 2 * j + 1] = v;
                dst[(2 * i + 1) * 2 * W + 2 * j] = v;
                dst[(2 * i + 1) * 2 * W + 2 * j + 1] = v;
            }
        }
    }
    return y;
}

Tensor Upsample2x::backward(const Tensor& dy) {
    const int N = in_shape_[0], C = in_shape_[1], H = in_shape_[2], W = in_shape_[3];
    Tensor dx(in_shape_);
    for (int nc = 0; nc < N * C; ++nc) {
        const double* src = dy.data() + static_cast<std::int64_t>(nc) * 4 * H * W;
        double* dst = dx.data() + static_cast<std::int64_t>(nc) * H * W;
        for (int i = 0; i < H; ++i)
            for (int j = 0; j < W; ++j)
                dst[i * W + j] = src[(2 * i) * 2 * W + 2 * j] + src[(2 * i) * 2 * W + 2 * j + 1] +
                                 src[(2 * i + 1) * 2 * W + 2 * j] +
                                 src[(2 * i + 1) * 2 * W + 2 * j + 1];
    }
    return dx;
}

Tensor AdaptiveAvgPool2d::forward(const Tensor& x, bool training) {
    if (training) in_shape_ = x.shape();
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    Tensor y({N, C, out_h, out_w});
    for (int nc = 0; nc < N * C; ++nc) {
        const double* src = x.data() + static_cast<std::int64_t>(nc) * H * W;
        double* dst = y.data() + static_cast<std::int64_t>(nc) * out_h * out_w;
        for (int i = 0; i < out_h; ++i) {
            const int y0 = (i * H) / out_h, y1 = ((i + 1) * H + out_h - 1) / out_h;
            for (int j = 0; j < out_w; ++j) {
                const int x0 = (j * W) / out_w, x1 = ((j + 1) * W + out_w - 1) / out_w;
                double acc = 0.0;
                for (int yy = y0; yy < y1; ++yy)
                    for (int xx = x0; xx < x1; ++xx) acc += src[yy * W + xx];
                dst[i * out_w + j] = acc / ((y1 - y0) * (x1 - x0));
            }
        }
    }
    return y;
}

Tensor AdaptiveAvgPool2d::backward(const Tensor& dy) {
    const int N = in_shape_[0], C = in_shape_[1], H = in_shape_[2], W = in_shape_[3];
    Tensor dx(in_shape_);
    for (int nc = 0; nc < N * C; ++nc) {
        const double* src = dy.data() + static_cast<std::int64_t>(nc) * out_h * out_w;
        double* dst = dx.data() + static_cast<std::int64_t>(nc) * H * W;
        for (int i = 0; i < out_h; ++i) {
            const int y0 = (i * H) / out_h, y1 = ((i + 1) * H + out_h - 1) / out_h;
            for (int j = 0; j < out_w; ++j) {
                const int x0 = (j * W) / out_w, x1 = ((j + 1) * W + out_w - 1) / out_w;
                const double g = src[i * out_w + j] / ((y1 - y0) * (x1 - x0));
                for (int yy = y0; yy < y1; ++yy)
                    for (int xx = x0; xx < x1; ++xx) dst[yy * W + xx] += g;
            }
        }
    }
    return dx;
}

/*================================ helpers =================================*/

Tensor sinusoidal_embedding(int t, int dim) {
    if (dim % 2 != 0) throw ConfigError("sinusoidal embedding dim must be even");
    const int half = dim / 2;
    Tensor out({dim});
    for (int i = 0; i < half; ++i) {
        const double freq =
            half > 1 ? std::exp(-std::log(10000.0) * i / static_cast<double>(half - 1)) : 1.0;
        out[i] = std::sin(t * freq);
        out[half + i] = std::cos(t * freq);
    }
    return out;
}

}  // namespace casvid
