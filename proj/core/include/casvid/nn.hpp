#pragma once

#include <map>
#include <string>
#include <vector>

#include "casvid/tensor.hpp"

namespace casvid {

class Rng;

/*=============================== parameters ===============================*/

// Every trainable parameter is either spatial or temporal; frozen parameters
// are checkpointed but never optimized or tagged.
enum class ParamTag { spatial, temporal, frozen };

const char* to_string(ParamTag tag);

struct Param {
    std::string name;
    Tensor value;
    Tensor grad;
    ParamTag tag = ParamTag::spatial;

    void ensure_grad();
};

class ParamRegistry {
public:
    // Pointers must outlive the registry; duplicate names fail fast.
    void add(Param* p);
    const std::vector<Param*>& params() const { return params_; }
    Param* find(const std::string& name) const;

    void zero_grad();
    std::int64_t total_size() const;
    std::int64_t trainable_size() const;

    // name -> tag for trainable params only; spatial and temporal partition
    // the trainable set by construction.
    std::map<std::string, ParamTag> tag_map() const;

private:
    std::vector<Param*> params_;
    std::map<std::string, std::size_t> index_;
};

/*================================= layers =================================*/

// Layers cache whatever forward state backward needs; one backward per
// forward. backward() accumulates into param grads and returns dL/dx.

class Conv2d {
public:
    Conv2d() = default;
    Conv2d(int in_ch, int out_ch, int kernel, int stride, int pad);

    void init_kaiming(Rng& rng, double gain = 1.0);
    void init_zero();
    void register_params(ParamRegistry& reg, const std::string& prefix, ParamTag tag);

    std::vector<int> out_shape(const std::vector<int>& in_shape) const;
    // In inference mode (training=false) forward performs no member
    // writes, so concurrent calls on shared weights are safe.
    Tensor forward(const Tensor& x, bool training = true);  // (N,C,H,W) -> (N,Co,Ho,Wo)
    Tensor backward(const Tensor& dy);

    Param w;  // (out, in, k, k)
    Param b;  // (out)
    int in_ch = 0, out_ch = 0, kernel = 0, stride = 1, pad = 0;

private:
    Tensor x_;
};

// Channel-mixing convolution across the frame axis with zero padding,
// applied per spatial position; delta-init makes it the identity.
// Spatio-temporal activations are passed as (B*F, C, H, W) with B and F
// given explicitly.
class TemporalConv {
public:
    TemporalConv() = default;
    TemporalConv(int channels, int kernel);

    void init_delta();
    void register_params(ParamRegistry& reg, const std::string& prefix, ParamTag tag);

    Tensor forward(const Tensor& x, int B, int F, bool training = true);
    Tensor backward(const Tensor& dy);

    Param w;  // (kernel, C, C)
    Param b;  // (C)
    int channels = 0, kernel = 3;

private:
    Tensor x_;
    int B_ = 0, F_ = 0;
};

class Linear {
public:
    Linear() = default;
    Linear(int in_dim, int out_dim);

    void init_kaiming(Rng& rng, double gain = 1.0);
    void init_zero();
    void register_params(ParamRegistry& reg, const std::string& prefix, ParamTag tag);

    Tensor forward(const Tensor& x, bool training = true);  // (N,in) -> (N,out)
    Tensor backward(const Tensor& dy);

    Param w;  // (out, in)
    Param b;  // (out)
    int in_dim = 0, out_dim = 0;

private:
    Tensor x_;
};

class GroupNorm {
public:
    GroupNorm() = default;
    GroupNorm(int groups, int channels, double eps = 1e-5);

    void register_params(ParamRegistry& reg, const std::string& prefix, ParamTag tag);

    Tensor forward(const Tensor& x, bool training = true);  // (N,C,H,W)
    Tensor backward(const Tensor& dy);

    Param gamma;  // (C)
    Param beta;   // (C)
    int groups = 1, channels = 0;
    double eps = 1e-5;

private:
    Tensor xhat_;
    Tensor inv_std_;  // (N, groups)
};

class SiLU {
public:
    Tensor forward(const Tensor& x, bool training = true);
    Tensor backward(const Tensor& dy);

private:
    Tensor x_;
};

class Embedding {
public:
    Embedding() = default;
    Embedding(int rows, int dim);

    void init_normal(Rng& rng, double std_dev);
    void register_params(ParamRegistry& reg, const std::string& prefix, ParamTag tag);

    Tensor forward(const std::vector<int>& ids, bool training = true);  // -> (K, dim)
    void backward(const Tensor& dy);

    Param table;  // (rows, dim)
    int rows = 0, dim = 0;

private:
    std::vector<int> ids_;
};

// Query tokens are the H*W positions of each frame; keys/values come from a
// per-clip context sequence (one (K_b, ctx_dim) tensor per clip, ragged K_b
// allowed). Residual connection around the projected output.
class CrossAttention {
public:
    CrossAttention() = default;
    CrossAttention(int channels, int ctx_dim, int heads, int norm_groups);

    void init(Rng& rng);
    void register_params(ParamRegistry& reg, const std::string& prefix, ParamTag tag);

    // x (B*F, C, H, W); frame n belongs to clip n / F.
    Tensor forward(const Tensor& x, int B, int F, const std::vector<Tensor>& ctx,
                   bool training = true);
    // Returns dL/dx; dL/dctx is accumulated into dctx (allocated to match ctx).
    Tensor backward(const Tensor& dy, std::vector<Tensor>& dctx);

    GroupNorm norm;
    Param wq, wk, wv, wo;  // (C,C), (C,D), (C,D), (C,C)
    Param bo;              // (C)
    int channels = 0, ctx_dim = 0, heads = 1;

private:
    Tensor x_, xn_, q_, o_;
    std::vector<Tensor> ctx_;    // per clip, (K_b, ctx_dim)
    std::vector<Tensor> k_, v_;  // per clip, (C, K_b)
    std::vector<Tensor> attn_;   // per frame, (heads, H*W, K_b)
    int B_ = 0, F_ = 0;
};

// Self-attention over the frame axis, applied independently per spatial
// position. Output projection is zero-init so the block starts as identity.
class TemporalAttention {
public:
    TemporalAttention() = default;
    TemporalAttention(int channels, int heads, int norm_groups);

    void init(Rng& rng);
    void register_params(ParamRegistry& reg, const std::string& prefix, ParamTag tag);

    Tensor forward(const Tensor& x, int B, int F, bool training = true);  // x (B*F, C, H, W)
    Tensor backward(const Tensor& dy);

    GroupNorm norm;
    Param wq, wk, wv, wo;  // all (C,C)
    Param bo;              // (C)
    int channels = 0, heads = 1;

private:
    Tensor x_, xn_, q_, k_, v_, attn_, o_;
    int B_ = 0, F_ = 0;
};

class Upsample2x {
public:
    Tensor forward(const Tensor& x, bool training = true);  // nearest, (N,C,H,W) -> (N,C,2H,2W)
    Tensor backward(const Tensor& dy);

private:
    std::vector<int> in_shape_;
};

class AdaptiveAvgPool2d {
public:
    AdaptiveAvgPool2d() = default;
    AdaptiveAvgPool2d(int out_h, int out_w) : out_h(out_h), out_w(out_w) {}

    Tensor forward(const Tensor& x, bool training = true);  // (N,C,H,W) -> (N,C,out_h,out_w)
    Tensor backward(const Tensor& dy);

    int out_h = 1, out_w = 1;

private:
    std::vector<int> in_shape_;
};

/*================================ helpers =================================*/

// Fixed sinusoidal embedding of a discrete timestep.
Tensor sinusoidal_embedding(int t, int dim);

Tensor silu(const Tensor& x);

// GEMM helpers over row-major buffers: C(MxN) = A(MxK) * B(KxN), optionally
// accumulating into C.
void gemm(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate);
void gemm_tn(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate);
void gemm_nt(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate);

}  // namespace casvid
