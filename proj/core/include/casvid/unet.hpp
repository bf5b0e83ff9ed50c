#pragma once

#include <map>
#include <string>
#include <vector>

#include "casvid/nn.hpp"

namespace casvid {

class Rng;

struct UNetSpec {
    int in_channels = 4;
    int base_channels = 32;
    std::vector<int> channel_mults = {1, 2};
    std::vector<int> attention_levels = {0, 1};  // must cover every level
    int res_blocks = 1;
    int heads = 4;
    int temporal_kernel = 3;
    int norm_groups = 8;
    int cond_dim = 256;  // cross-attention context width D
    int time_dim = 128;
    std::vector<int> fps_set = {1, 2, 4};

    void validate() const;
};

// Per-clip conditioning for a batched forward pass.
struct UNetCond {
    std::vector<Tensor> ctx;  // one (K_b, D) sequence per clip
    std::vector<int> fps;     // one fps per clip
};

/*============================== building blocks ===========================*/

class ResBlock {
public:
    ResBlock() = default;
    ResBlock(int in_ch, int out_ch, int time_dim, int norm_groups);

    void init(Rng& rng);
    void register_params(ParamRegistry& reg, const std::string& prefix, ParamTag tag);

    // x (B*F, in_ch, H, W); temb (B, time_dim), broadcast over frames.
    Tensor forward(const Tensor& x, const Tensor& temb, int B, int F, bool training = true);
    Tensor backward(const Tensor& dy, Tensor& dtemb);

    int in_ch = 0, out_ch = 0;

private:
    GroupNorm n1_, n2_;
    SiLU a1_, a2_, aemb_;
    Conv2d c1_, c2_, skip_;
    Linear emb_proj_;
    bool has_skip_ = false;
    int B_ = 0, F_ = 0;
    Tensor x_;
};

// ResBlock followed by the factorized temporal pair and conditioned
// attention: res -> temporal conv -> cross-attention -> temporal attention.
// Temporal members are skipped when F == 1 or temporal mixing is disabled.
class UNetBlock {
public:
    UNetBlock() = default;
    UNetBlock(int in_ch, int out_ch, const UNetSpec& spec);

    void init(Rng& rng);
    void register_params(ParamRegistry& reg, const std::string& prefix);

    Tensor forward(const Tensor& x, const Tensor& temb, int B, int F,
                   const std::vector<Tensor>& ctx, bool temporal, bool training);
    Tensor backward(const Tensor& dy, Tensor& dtemb, std::vector<Tensor>& dctx);

    ResBlock res;
    TemporalConv tconv;
    CrossAttention xattn;
    TemporalAttention tattn;

private:
    bool temporal_active_ = false;
};

/*================================== UNet ==================================*/

// v-prediction denoiser over latent clips. Input (B, F, c, h, w); output has
// the same shape. Conditioning enters via cross-attention and the
// timestep/fps embedding added inside residual blocks.
class UNet3D {
public:
    UNet3D() = default;
    explicit UNet3D(const UNetSpec& spec);

    void init(Rng& rng);
    void register_params(ParamRegistry& reg, const std::string& prefix);

    // ts: one timestep per clip, each in [1, T_embed_max]; cond.ctx/fps sized B.
    Tensor forward(const Tensor& z, const std::vector<int>& ts, const UNetCond& cond,
                   bool temporal = true, bool training = true);
    // Returns dL/dz; accumulates dL/dctx per clip when dctx is non-null.
    Tensor backward(const Tensor& dv, std::vector<Tensor>* dctx = nullptr);

    // Sinusoidal timestep embedding plus the learned fps embedding (summed).
    Tensor timestep_fps_embedding(int t, int fps, bool training = false);

    int fps_index(int fps) const;  // ConfigError on unknown fps

    UNetSpec spec;

private:
    struct Level {
        std::vector<UNetBlock> blocks;
        Conv2d down;  // stride-2, between levels
        bool has_down = false;
    };
    struct UpLevel {
        std::vector<UNetBlock> blocks;
        std::vector<int> skip_channels;
        Upsample2x up;
        Conv2d up_conv;
        bool has_up = false;
    };

    Conv2d conv_in_;
    Embedding fps_emb_;
    Linear time_mlp1_, time_mlp2_;
    SiLU time_act_;
    std::vector<Level> down_;
    UNetBlock mid_;
    std::vector<UpLevel> up_;
    GroupNorm out_norm_;
    SiLU out_act_;
    Conv2d conv_out_;

    // training-forward state for backward
    int B_ = 0, F_ = 0;
    bool temporal_active_ = true;
    std::vector<int> split_sizes_;
};

// Verifies the spatial/temporal partition of a registry's trainable
// parameters and returns the tag map; any untagged parameter fails fast.
std::map<std::string, ParamTag> tag_parameters(const ParamRegistry& reg);

}  // namespace casvid
