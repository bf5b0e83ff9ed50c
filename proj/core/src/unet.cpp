#include "casvid/unet.hpp"

#include <algorithm>
#include <cmath>

#include "casvid/errors.hpp"
#include "casvid/rng.hpp"

namespace casvid {

void UNetSpec::validate() const {
    if (channel_mults.empty()) throw ConfigError("unet needs at least one level");
    if (res_blocks < 1) throw ConfigError("unet res_blocks must be >= 1");
    if (time_dim % 2 != 0) throw ConfigError("unet time_dim must be even");
    if (temporal_kernel % 2 == 0) throw ConfigError("unet temporal kernel must be odd");
    for (std::size_t i = 0; i < channel_mults.size(); ++i) {
        const int ch = base_channels * channel_mults[i];
        if (ch % norm_groups != 0)
            throw ConfigError("unet channels at level " + std::to_string(i) +
                              " not divisible by norm_groups");
        if (ch % heads != 0)
            throw ConfigError("unet channels at level " + std::to_string(i) +
                              " not divisible by heads");
        // conditioning is wired into every spatial level
        if (std::find(attention_levels.begin(), attention_levels.end(), static_cast<int>(i)) ==
            attention_levels.end())
            throw ConfigError("attention_levels must include every level (missing " +
                              std::to_string(i) + ")");
    }
    if (fps_set.empty()) throw ConfigError("unet fps_set must not be empty");
}

/*================================ ResBlock =================================*/

ResBlock::ResBlock(int in_ch_, int out_ch_, int time_dim, int norm_groups)
    : in_ch(in_ch_), out_ch(out_ch_) {
    n1_ = GroupNorm(norm_groups, in_ch);
    n2_ = GroupNorm(norm_groups, out_ch);
    c1_ = Conv2d(in_ch, out_ch, 3, 1, 1);
    c2_ = Conv2d(out_ch, out_ch, 3, 1, 1);
    emb_proj_ = Linear(time_dim, out_ch);
    has_skip_ = in_ch != out_ch;
    if (has_skip_) skip_ = Conv2d(in_ch, out_ch, 1, 1, 0);
}

void ResBlock::init(Rng& rng) {
    c1_.init_kaiming(rng);
    c2_.init_kaiming(rng, 0.3);
    emb_proj_.init_kaiming(rng, 0.3);
    if (has_skip_) skip_.init_kaiming(rng);
}

void ResBlock::register_params(ParamRegistry& reg, const std::string& prefix, ParamTag tag) {
    n1_.register_params(reg, prefix + ".norm1", tag);
    c1_.register_params(reg, prefix + ".conv1", tag);
    emb_proj_.register_params(reg, prefix + ".emb_proj", tag);
    n2_.register_params(reg, prefix + ".norm2", tag);
    c2_.register_params(reg, prefix + ".conv2", tag);
    if (has_skip_) skip_.register_params(reg, prefix + ".skip", tag);
}

Tensor ResBlock::forward(const Tensor& x, const Tensor& temb, int B, int F, bool training) {
    if (training) {
        x_ = x;
        B_ = B;
        F_ = F;
    }
    Tensor h = c1_.forward(a1_.forward(n1_.forward(x, training), training), training);
    // per-clip, per-channel bias from the time embedding
    Tensor proj = emb_proj_.forward(aemb_.forward(temb, training), training);  // (B, out_ch)
    const int HW = h.dim(2) * h.dim(3);
    for (int n = 0; n < B * F; ++n) {
        const int bi = n / F;
        double* hp = h.data() + static_cast<std::int64_t>(n) * out_ch * HW;
        for (int c = 0; c < out_ch; ++c) {
            const double add = proj[static_cast<std::int64_t>(bi) * out_ch + c];
            double* row = hp + static_cast<std::int64_t>(c) * HW;
            for (int i = 0; i < HW; ++i) row[i] += add;
        }
    }
    h = c2_.forward(a2_.forward(n2_.forward(h, training), training), training);
    if (has_skip_) {
        Tensor s = skip_.forward(x, training);
        h += s;
    } else {
        h += x;
    }
    return h;
}

Tensor ResBlock::backward(const Tensor& dy, Tensor& dtemb) {
    Tensor dh = n2_.backward(a2_.backward(c2_.backward(dy)));

    // bias add: gradient reduces over frames and space per (clip, channel)
    const int HW = dh.dim(2) * dh.dim(3);
    Tensor dproj({B_, out_ch});
    for (int n = 0; n < B_ * F_; ++n) {
        const int bi = n / F_;
        const double* dp = dh.data() + static_cast<std::int64_t>(n) * out_ch * HW;
        for (int c = 0; c < out_ch; ++c) {
            double s = 0.0;
            const double* row = dp + static_cast<std::int64_t>(c) * HW;
            for (int i = 0; i < HW; ++i) s += row[i];
            dproj[static_cast<std::int64_t>(bi) * out_ch + c] += s;
        }
    }
    dtemb += aemb_.backward(emb_proj_.backward(dproj));

    Tensor dx = n1_.backward(a1_.backward(c1_.backward(dh)));
    if (has_skip_)
        dx += skip_.backward(dy);
    else
        dx += dy;
    return dx;
}

/*================================ UNetBlock ================================*/

UNetBlock::UNetBlock(int in_ch, int out_ch, const UNetSpec& spec)
    : res(in_ch, out_ch, spec.time_dim, spec.norm_groups),
      tconv(out_ch, spec.temporal_kernel),
      xattn(out_ch, spec.cond_dim, spec.heads, spec.norm_groups),
      tattn(out_ch, spec.heads, spec.norm_groups) {}

void UNetBlock::init(Rng& rng) {
    res.init(rng);
    tconv.init_delta();
    xattn.init(rng);
    tattn.init(rng);
}

void UNetBlock::register_params(ParamRegistry& reg, const std::string& prefix) {
    res.register_params(reg, prefix + ".res", ParamTag::spatial);
    tconv.register_params(reg, prefix + ".tconv", ParamTag::temporal);
    xattn.register_params(reg, prefix + ".xattn", ParamTag::spatial);
    tattn.register_params(reg, prefix + ".tattn", ParamTag::temporal);
}

Tensor UNetBlock::forward(const Tensor& x, const Tensor& temb, int B, int F,
                          const std::vector<Tensor>& ctx, bool temporal, bool training) {
    if (training) temporal_active_ = temporal && F > 1;
    const bool t_on = temporal && F > 1;
    Tensor h = res.forward(x, temb, B, F, training);
    if (t_on) h = tconv.forward(h, B, F, training);
    h = xattn.forward(h, B, F, ctx, training);
    if (t_on) h = tattn.forward(h, B, F, training);
    return h;
}

Tensor UNetBlock::backward(const Tensor& dy, Tensor& dtemb, std::vector<Tensor>& dctx) {
    Tensor d = dy;
    if (temporal_active_) d = tattn.backward(d);
    d = xattn.backward(d, dctx);
    if (temporal_active_) d = tconv.backward(d);
    return res.backward(d, dtemb);
}

/*================================== UNet ==================================*/

UNet3D::UNet3D(const UNetSpec& s) : spec(s) {
    spec.validate();
    const int levels = static_cast<int>(spec.channel_mults.size());

    conv_in_ = Conv2d(spec.in_channels, spec.base_channels, 3, 1, 1);
    fps_emb_ = Embedding(static_cast<int>(spec.fps_set.size()), spec.time_dim);
    time_mlp1_ = Linear(spec.time_dim, spec.time_dim);
    time_mlp2_ = Linear(spec.time_dim, spec.time_dim);

    // One skip per level (the level's block-group output); the up path
    // consumes exactly one per level and the upsample conv reduces channels
    // at the lower-resolution side.
    std::vector<int> skip_ch;

    int ch = spec.base_channels;
    down_.resize(static_cast<std::size_t>(levels));
    for (int i = 0; i < levels; ++i) {
        const int out_ch = spec.base_channels * spec.channel_mults[static_cast<std::size_t>(i)];
        for (int j = 0; j < spec.res_blocks; ++j) {
            down_[static_cast<std::size_t>(i)].blocks.emplace_back(ch, out_ch, spec);
            ch = out_ch;
        }
        skip_ch.push_back(ch);
        if (i + 1 < levels) {
            down_[static_cast<std::size_t>(i)].down = Conv2d(ch, ch, 3, 2, 1);
            down_[static_cast<std::size_t>(i)].has_down = true;
        }
    }

    mid_ = UNetBlock(ch, ch, spec);

    up_.resize(static_cast<std::size_t>(levels));
    for (int i = levels - 1; i >= 0; --i) {
        UpLevel& lvl = up_[static_cast<std::size_t>(levels - 1 - i)];
        const int out_ch = spec.base_channels * spec.channel_mults[static_cast<std::size_t>(i)];
        for (int j = 0; j < spec.res_blocks; ++j) {
            const int sc = j == 0 ? skip_ch.back() : 0;
            if (j == 0) {
                skip_ch.pop_back();
                lvl.skip_channels.push_back(sc);
            }
            lvl.blocks.emplace_back(ch + sc, out_ch, spec);
            ch = out_ch;
        }
        if (i > 0) {
            const int next_ch =
                spec.base_channels * spec.channel_mults[static_cast<std::size_t>(i - 1)];
            lvl.up_conv = Conv2d(ch, next_ch, 3, 1, 1);
            lvl.has_up = true;
            ch = next_ch;
        }
    }

    out_norm_ = GroupNorm(spec.norm_groups, ch);
    conv_out_ = Conv2d(ch, spec.in_channels, 3, 1, 1);
}

void UNet3D::init(Rng& rng) {
    conv_in_.init_kaiming(rng);
    fps_emb_.init_normal(rng, 0.02);
    time_mlp1_.init_kaiming(rng);
    time_mlp2_.init_kaiming(rng);
    for (auto& lvl : down_) {
        for (auto& b : lvl.blocks) b.init(rng);
        if (lvl.has_down) lvl.down.init_kaiming(rng);
    }
    mid_.init(rng);
    for (auto& lvl : up_) {
        for (auto& b : lvl.blocks) b.init(rng);
        if (lvl.has_up) lvl.up_conv.init_kaiming(rng);
    }
    // small but nonzero so an untrained model still responds to conditioning
    conv_out_.init_kaiming(rng, 0.1);
}

void UNet3D::register_params(ParamRegistry& reg, const std::string& prefix) {
    conv_in_.register_params(reg, prefix + ".conv_in", ParamTag::spatial);
    fps_emb_.register_params(reg, prefix + ".fps_emb", ParamTag::spatial);
    time_mlp1_.register_params(reg, prefix + ".time_mlp1", ParamTag::spatial);
    time_mlp2_.register_params(reg, prefix + ".time_mlp2", ParamTag::spatial);
    for (std::size_t i = 0; i < down_.size(); ++i) {
        for (std::size_t j = 0; j < down_[i].blocks.size(); ++j)
            down_[i].blocks[j].register_params(
                reg, prefix + ".down" + std::to_string(i) + ".block" + std::to_string(j));
        if (down_[i].has_down)
            down_[i].down.register_params(reg, prefix + ".down" + std::to_string(i) + ".downsample",
                                          ParamTag::spatial);
    }
    mid_.register_params(reg, prefix + ".mid");
    for (std::size_t i = 0; i < up_.size(); ++i) {
        for (std::size_t j = 0; j < up_[i].blocks.size(); ++j)
            up_[i].blocks[j].register_params(
                reg, prefix + ".up" + std::to_string(i) + ".block" + std::to_string(j));
        if (up_[i].has_up)
            up_[i].up_conv.register_params(reg, prefix + ".up" + std::to_string(i) + ".upsample",
                                           ParamTag::spatial);
    }
    out_norm_.register_params(reg, prefix + ".out_norm", ParamTag::spatial);
    conv_out_.register_params(reg, prefix + ".conv_out", ParamTag::spatial);
}

int UNet3D::fps_index(int fps) const {
    for (std::size_t i = 0; i < spec.fps_set.size(); ++i)
        if (spec.fps_set[i] == fps) return static_cast<int>(i);
    throw ConfigError("fps " + std::to_string(fps) + " not in the declared fps set");
}

Tensor UNet3D::timestep_fps_embedding(int t, int fps, bool training) {
    if (t < 1) throw DimError("timestep must be >= 1");
    Tensor emb = sinusoidal_embedding(t, spec.time_dim);
    Tensor frow = fps_emb_.forward({fps_index(fps)}, training);
    for (int j = 0; j < spec.time_dim; ++j) emb[j] += frow[j];
    return emb;
}

namespace {

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    const int N = a.dim(0), H = a.dim(2), W = a.dim(3);
    if (b.dim(0) != N || b.dim(2) != H || b.dim(3) != W)
        throw DimError("concat shape mismatch: " + shape_str(a.shape()) + " vs " +
                       shape_str(b.shape()));
    Tensor out({N, a.dim(1) + b.dim(1), H, W});
    const std::int64_t hw = static_cast<std::int64_t>(H) * W;
    for (int n = 0; n < N; ++n) {
        std::copy(a.data() + n * a.dim(1) * hw, a.data() + (n + 1) * a.dim(1) * hw,
                  out.data() + static_cast<std::int64_t>(n) * (a.dim(1) + b.dim(1)) * hw);
        std::copy(b.data() + n * b.dim(1) * hw, b.data() + (n + 1) * b.dim(1) * hw,
                  out.data() + static_cast<std::int64_t>(n) * (a.dim(1) + b.dim(1)) * hw +
                      a.dim(1) * hw);
    }
    return out;
}

std::pair<Tensor, Tensor> split_channels(const Tensor& d, int c_first) {
    const int N = d.dim(0), C = d.dim(1), H = d.dim(2), W = d.dim(3);
    Tensor a({N, c_first, H, W}), b({N, C - c_first, H, W});
    const std::int64_t hw = static_cast<std::int64_t>(H) * W;
    for (int n = 0; n < N; ++n) {
        std::copy(d.data() + static_cast<std::int64_t>(n) * C * hw,
                  d.data() + static_cast<std::int64_t>(n) * C * hw + c_first * hw,
                  a.data() + static_cast<std::int64_t>(n) * c_first * hw);
        std::copy(d.data() + static_cast<std::int64_t>(n) * C * hw + c_first * hw,
                  d.data() + static_cast<std::int64_t>(n + 1) * C * hw,
                  b.data() + static_cast<std::int64_t>(n) * (C - c_first) * hw);
    }
    return {std::move(a), std::move(b)};
}

}  // namespace

Tensor UNet3D::forward(const Tensor& z, const std::vector<int>& ts, const UNetCond& cond,
                       bool temporal, bool training) {
    if (z.rank() != 5) throw DimError("unet expects (B,F,c,h,w), got " + shape_str(z.shape()));
    const int B = z.dim(0), F = z.dim(1);
    if (static_cast<int>(ts.size()) != B || static_cast<int>(cond.ctx.size()) != B ||
        static_cast<int>(cond.fps.size()) != B)
        throw UsageError("unet conditioning must provide ts/ctx/fps per clip");
    if (z.dim(2) != spec.in_channels)
        throw DimError("unet latent channels mismatch: " + shape_str(z.shape()));

    if (training) {
        B_ = B;
        F_ = F;
        temporal_active_ = temporal && F > 1;
    }

    // time + fps embedding -> shared MLP; one batched embedding lookup so
    // the cached ids match the whole batch for backward.
    std::vector<int> fps_ids(static_cast<std::size_t>(B));
    for (int b = 0; b < B; ++b) fps_ids[static_cast<std::size_t>(b)] = fps_index(cond.fps[static_cast<std::size_t>(b)]);
    Tensor temb0 = fps_emb_.forward(fps_ids, training);  // (B, time_dim)
    for (int b = 0; b < B; ++b) {
        const int t = ts[static_cast<std::size_t>(b)];
        if (t < 1) throw DimError("timestep must be >= 1");
        Tensor e = sinusoidal_embedding(t, spec.time_dim);
        double* row = temb0.data() + static_cast<std::int64_t>(b) * spec.time_dim;
        for (int j = 0; j < spec.time_dim; ++j) row[j] += e[j];
    }
    Tensor temb = time_mlp2_.forward(time_act_.forward(time_mlp1_.forward(temb0, training), training),
                                     training);

    Tensor h = conv_in_.forward(z.reshaped({B * F, spec.in_channels, z.dim(3), z.dim(4)}), training);
    std::vector<Tensor> skips;

    std::vector<int> split_sizes;
    for (auto& lvl : down_) {
        for (auto& blk : lvl.blocks) h = blk.forward(h, temb, B, F, cond.ctx, temporal, training);
        skips.push_back(h);
        if (lvl.has_down) h = lvl.down.forward(h, training);
    }

    h = mid_.forward(h, temb, B, F, cond.ctx, temporal, training);

    for (auto& lvl : up_) {
        for (std::size_t j = 0; j < lvl.blocks.size(); ++j) {
            if (j == 0) {
                Tensor skip = std::move(skips.back());
                skips.pop_back();
                split_sizes.push_back(h.dim(1));
                h = concat_channels(h, skip);
            }
            h = lvl.blocks[j].forward(h, temb, B, F, cond.ctx, temporal, training);
        }
        if (lvl.has_up) {
            h = lvl.up.forward(h, training);
            h = lvl.up_conv.forward(h, training);
        }
    }
    if (training) split_sizes_ = std::move(split_sizes);

    h = conv_out_.forward(out_act_.forward(out_norm_.forward(h, training), training), training);
    return h.reshaped(z.shape());
}

Tensor UNet3D::backward(const Tensor& dv, std::vector<Tensor>* dctx) {
    const int B = B_, F = F_;
    std::vector<Tensor> dctx_local;
    std::vector<Tensor>& dc = dctx ? *dctx : dctx_local;

    Tensor d = dv.reshaped({B * F, spec.in_channels, dv.dim(3), dv.dim(4)});
    d = out_norm_.backward(out_act_.backward(conv_out_.backward(d)));

    Tensor dtemb({B, spec.time_dim});
    std::vector<Tensor> dskips;
    std::size_t split_idx = split_sizes_.size();

    for (std::size_t i = up_.size(); i-- > 0;) {
        UpLevel& lvl = up_[i];
        if (lvl.has_up) {
            d = lvl.up_conv.backward(d);
            d = lvl.up.backward(d);
        }
        for (std::size_t j = lvl.blocks.size(); j-- > 0;) {
            d = lvl.blocks[j].backward(d, dtemb, dc);
            if (j == 0) {
                auto [dmain, dskip] = split_channels(d, split_sizes_[--split_idx]);
                d = std::move(dmain);
                dskips.push_back(std::move(dskip));
            }
        }
    }

    d = mid_.backward(d, dtemb, dc);

    // dskips was filled in forward-push order (up levels run in reverse),
    // so the down path consumes it from the back.
    for (std::size_t i = down_.size(); i-- > 0;) {
        Level& lvl = down_[i];
        if (lvl.has_down) d = lvl.down.backward(d);
        d += dskips.back();
        dskips.pop_back();
        for (std::size_t j = lvl.blocks.size(); j-- > 0;)
            d = lvl.blocks[j].backward(d, dtemb, dc);
    }
    d = conv_in_.backward(d);

    // time embedding path; fps ids were cached batch-wide during forward
    Tensor dtemb0 = time_mlp1_.backward(time_act_.backward(time_mlp2_.backward(dtemb)));
    fps_emb_.backward(dtemb0);

    return d.reshaped({B, F, spec.in_channels, d.dim(2), d.dim(3)});
}

std::map<std::string, ParamTag> tag_parameters(const ParamRegistry& reg) {
    std::map<std::string, ParamTag> tags;
    std::int64_t tagged = 0;
    for (const Param* p : reg.params()) {
        if (p->tag == ParamTag::frozen) continue;
        if (p->tag != ParamTag::spatial && p->tag != ParamTag::temporal)
            throw Error("untagged trainable parameter: " + p->name);
        tags[p->name] = p->tag;
        tagged += p->value.size();
    }
    if (tagged != reg.trainable_size()) throw Error("tag map does not cover all trainable parameters");
    return tags;
}

}  // namespace casvid
