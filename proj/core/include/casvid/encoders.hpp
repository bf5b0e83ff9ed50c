#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "casvid/nn.hpp"
#include "casvid/video.hpp"

namespace casvid {

class Rng;

/*=========================== conditioning bundle ==========================*/

// Everything the denoiser cross-attends to or absorbs. Base-stage bundles
// carry semantic + detail and no text; refinement bundles carry text only.
// The named constructors enforce that separation.
struct ConditioningBundle {
    std::optional<Tensor> semantic;      // (D), fused high-level condition
    std::optional<LatentVideo> detail;   // F = 1
    std::optional<Tensor> text;          // (K, D)
    int fps = 1;

    static ConditioningBundle for_base(Tensor semantic, LatentVideo detail, int fps);
    static ConditioningBundle for_refine(Tensor text, int fps);

    void require_stage(const std::string& stage) const;  // "base" | "refine"
};

Tensor fuse_semantic(const Tensor& a, const Tensor& b);  // elementwise sum

/*============================= global encoder =============================*/

struct ConvSpec {
    int in = 0, out = 0, kernel = 1, stride = 1, pad = 0;
};

// Declared layer plan plus the expected (h, w, c) after each named block,
// asserted on every forward.
struct GlobalEncoderSpec {
    std::vector<ConvSpec> stem;      // stride-1 convs, SiLU after each
    int pool_h = 0, pool_w = 0;      // adaptive average pool target
    std::vector<ConvSpec> stages;    // SiLU after each
    ConvSpec output;                 // no activation
    int out_dim = 0;                 // D
    int in_h = 0, in_w = 0;          // expected input spatial size
    std::vector<std::array<int, 3>> expected_sizes;  // (h, w, c) per block row

    void validate() const;

    static GlobalEncoderSpec paper_scale();
    static GlobalEncoderSpec toy_scale();
};

class GlobalEncoder {
public:
    GlobalEncoder() = default;
    explicit GlobalEncoder(const GlobalEncoderSpec& spec);

    void init(Rng& rng);
    void register_params(ParamRegistry& reg, const std::string& prefix, ParamTag tag);

    // (N, c, h, w) latent -> (N, D); records the per-block shape chain.
    Tensor forward(const Tensor& x, bool training = true);
    Tensor backward(const Tensor& dy);

    // (h, w, c) after stem, pool, each stage, output — from the last forward.
    const std::vector<std::array<int, 3>>& shape_chain() const { return chain_; }

    GlobalEncoderSpec spec;

private:
    std::vector<Conv2d> convs_;  // stem + stages + output (in order)
    std::vector<SiLU> acts_;     // one per conv except the output conv
    AdaptiveAvgPool2d pool_;
    std::size_t pool_after_ = 0;  // pool applied after this many convs
    std::vector<std::array<int, 3>> chain_;
};

/*======================= frozen semantic encoder ==========================*/

// Stand-in for a frozen pretrained image encoder: a fixed-seed convolutional
// net producing a D-vector. Never trained; any image -> vector encoder with
// the same contract can replace it.
class SemanticEncoder {
public:
    SemanticEncoder() = default;
    SemanticEncoder(int out_dim, std::uint64_t seed);

    void register_params(ParamRegistry& reg, const std::string& prefix);  // frozen tag

    Tensor encode(const Tensor& image) const;  // (1,3,H,W) -> (D)
    Tensor encode_image(const VideoTensor& image) const;

    int out_dim() const { return out_dim_; }

private:
    int out_dim_ = 0;
    Conv2d c1_, c2_, c3_;
    AdaptiveAvgPool2d pool_{4, 4};
    Linear head_;
};

/*============================== text encoder ==============================*/

// Learned token embeddings over the caption vocabulary plus fixed sinusoidal
// position encoding. Token ids are vocabulary line numbers; one extra row
// serves as the learned null token for empty captions.
class TextEncoder {
public:
    TextEncoder() = default;
    TextEncoder(std::vector<std::string> vocab, int dim, int max_len = 16);

    void init(Rng& rng);
    void register_params(ParamRegistry& reg, const std::string& prefix, ParamTag tag);

    std::vector<int> tokenize(const std::string& caption) const;  // DataError on OOV
    Tensor encode_tokens(const std::vector<int>& ids, bool training = false);
    Tensor encode(const std::string& caption, bool training = false);
    void backward(const Tensor& dy);

    // Batched variants sharing one embedding pass, for training.
    std::vector<Tensor> encode_batch(const std::vector<std::vector<int>>& ids, bool training);
    void backward_batch(const std::vector<Tensor>& dys);

    int null_token() const { return static_cast<int>(vocab_.size()); }
    const std::vector<std::string>& vocab() const { return vocab_; }
    int dim() const { return dim_; }
    int max_len() const { return max_len_; }

private:
    std::vector<std::string> vocab_;
    int dim_ = 0, max_len_ = 16;
    Embedding emb_;
};

std::vector<std::string> load_vocabulary(const std::string& path);

}  // namespace casvid
