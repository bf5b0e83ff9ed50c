#include "casvid/encoders.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "casvid/errors.hpp"
#include "casvid/rng.hpp"

namespace casvid {

/*=========================== conditioning bundle ==========================*/

ConditioningBundle ConditioningBundle::for_base(Tensor semantic, LatentVideo detail, int fps) {
    if (detail.frames() != 1) throw UsageError("detail latent must have exactly one frame");
    ConditioningBundle b;
    b.semantic = std::move(semantic);
    b.detail = std::move(detail);
    b.fps = fps;
    return b;
}

ConditioningBundle ConditioningBundle::for_refine(Tensor text, int fps) {
    ConditioningBundle b;
    b.text = std::move(text);
    b.fps = fps;
    return b;
}

void ConditioningBundle::require_stage(const std::string& stage) const {
    if (stage == "base") {
        if (!semantic || !detail || text)
            throw UsageError("base-stage bundle must carry semantic + detail and no text");
    } else if (stage == "refine") {
        if (!text || semantic || detail)
            throw UsageError("refine-stage bundle must carry text and no image condition");
    } else {
        throw UsageError("unknown stage for conditioning bundle: " + stage);
    }
}

Tensor fuse_semantic(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "fuse_semantic");
    return a + b;
}

/*============================= global encoder =============================*/

void GlobalEncoderSpec::validate() const {
    if (stem.empty() || stages.empty()) throw ConfigError("global encoder spec is empty");
    if (out_dim != output.out) throw ConfigError("global encoder out_dim must match output conv");
    if (expected_sizes.size() != 2 + stages.size() / 2 + 1)
        throw ConfigError("global encoder expected_sizes must cover stem, pool, stages, output");
}

GlobalEncoderSpec GlobalEncoderSpec::paper_scale() {
    GlobalEncoderSpec s;
    s.in_h = 32;
    s.in_w = 48;
    // Stem kernel 5 needs pad 2 (and the second conv pad 1) to keep 32x48.
    s.stem = {{4, 64, 5, 1, 2}, {64, 64, 3, 1, 1}};
    s.pool_h = 32;
    s.pool_w = 32;
    s.stages = {
        {64, 256, 3, 2, 1},  {256, 256, 3, 1, 1},  // -> 16x16x256
        {256, 512, 3, 2, 1}, {512, 512, 3, 1, 1},  // -> 8x8x512
        {512, 512, 3, 2, 1}, {512, 512, 3, 1, 1},  // -> 4x4x512
        {512, 512, 3, 2, 1}, {512, 1024, 3, 1, 1},  // -> 2x2x1024
    };
    // Declared output is 1x1, which forces pad 0 on the final 2x2/stride-2 conv.
    s.output = {1024, 1024, 2, 2, 0};
    s.out_dim = 1024;
    s.expected_sizes = {
        {32, 48, 64}, {32, 32, 64},  {16, 16, 256}, {8, 8, 512},
        {4, 4, 512},  {2, 2, 1024},  {1, 1, 1024},
    };
    return s;
}

GlobalEncoderSpec GlobalEncoderSpec::toy_scale() {
    GlobalEncoderSpec s;
    s.in_h = 16;
    s.in_w = 16;
    s.stem = {{4, 32, 5, 1, 2}, {32, 32, 3, 1, 1}};
    s.pool_h = 16;
    s.pool_w = 16;
    s.stages = {
        {32, 64, 3, 2, 1},   {64, 64, 3, 1, 1},    // -> 8x8x64
        {64, 128, 3, 2, 1},  {128, 128, 3, 1, 1},  // -> 4x4x128
        {128, 256, 3, 2, 1}, {256, 256, 3, 1, 1},  // -> 2x2x256
    };
    s.output = {256, 256, 2, 2, 0};
    s.out_dim = 256;
    s.expected_sizes = {
        {16, 16, 32}, {16, 16, 32}, {8, 8, 64}, {4, 4, 128}, {2, 2, 256}, {1, 1, 256},
    };
    return s;
}

GlobalEncoder::GlobalEncoder(const GlobalEncoderSpec& s) : spec(s) {
    spec.validate();
    for (const auto& c : spec.stem) convs_.emplace_back(c.in, c.out, c.kernel, c.stride, c.pad);
    pool_after_ = convs_.size();
    pool_ = AdaptiveAvgPool2d(spec.pool_h, spec.pool_w);
    for (const auto& c : spec.stages) convs_.emplace_back(c.in, c.out, c.kernel, c.stride, c.pad);
    convs_.emplace_back(spec.output.in, spec.output.out, spec.output.kernel, spec.output.stride,
                        spec.output.pad);
    acts_.resize(convs_.size() - 1);
}

void GlobalEncoder::init(Rng& rng) {
    for (auto& c : convs_) c.init_kaiming(rng);
}

void GlobalEncoder::register_params(ParamRegistry& reg, const std::string& prefix, ParamTag tag) {
    for (std::size_t i = 0; i < convs_.size(); ++i)
        convs_[i].register_params(reg, prefix + ".conv" + std::to_string(i), tag);
}

Tensor GlobalEncoder::forward(const Tensor& x, bool training) {
    if (x.rank() != 4)
        throw DimError("global encoder expects (N,c,h,w), got " + shape_str(x.shape()));
    if (x.dim(1) != spec.stem[0].in)
        throw DimError("global encoder stem takes " + std::to_string(spec.stem[0].in) +
                       " channels (stem conv " + std::to_string(spec.stem[0].in) + "->" +
                       std::to_string(spec.stem[0].out) + "), got " + std::to_string(x.dim(1)));

    chain_.clear();
    auto note = [&](const Tensor& t) {
        chain_.push_back({t.dim(2), t.dim(3), t.dim(1)});
    };

    Tensor h = x;
    for (std::size_t i = 0; i < convs_.size(); ++i) {
        if (i == pool_after_) {
            note(h);  // after stem
            h = pool_.forward(h, training);
            note(h);  // after pool
        }
        const bool last = i + 1 == convs_.size();
        h = convs_[i].forward(h, training);
        if (!last) h = acts_[i].forward(h, training);
        // record after every second stage conv and after the output conv
        const bool stage_boundary = i >= pool_after_ && !last && (i - pool_after_) % 2 == 1;
        if (stage_boundary || last) note(h);
    }

    if (chain_.size() != spec.expected_sizes.size())
        throw DimError("global encoder recorded " + std::to_string(chain_.size()) +
                       " blocks, spec declares " + std::to_string(spec.expected_sizes.size()));
    for (std::size_t i = 0; i < chain_.size(); ++i) {
        if (chain_[i] != spec.expected_sizes[i]) {
            std::ostringstream os;
            os << "global encoder shape chain mismatch at block " << i << ": got " << chain_[i][0]
               << "x" << chain_[i][1] << "x" << chain_[i][2] << ", declared "
               << spec.expected_sizes[i][0] << "x" << spec.expected_sizes[i][1] << "x"
               << spec.expected_sizes[i][2];
            throw DimError(os.str());
        }
    }

    return h.reshaped({h.dim(0), spec.out_dim});
}

Tensor GlobalEncoder::backward(const Tensor& dy) {
    Tensor d = dy.reshaped({dy.dim(0), spec.out_dim, 1, 1});
    for (std::size_t i = convs_.size(); i-- > 0;) {
        if (i + 1 != convs_.size()) d = acts_[i].backward(d);
        d = convs_[i].backward(d);
        if (i == pool_after_) d = pool_.backward(d);
    }
    return d;
}

/*======================= frozen semantic encoder ==========================*/

SemanticEncoder::SemanticEncoder(int out_dim, std::uint64_t seed) : out_dim_(out_dim) {
    c1_ = Conv2d(3, 16, 5, 2, 2);
    c2_ = Conv2d(16, 32, 3, 2, 1);
    c3_ = Conv2d(32, 64, 3, 2, 1);
    head_ = Linear(64 * 4 * 4, out_dim);
    Rng rng(seed);
    c1_.init_kaiming(rng);
    c2_.init_kaiming(rng);
    c3_.init_kaiming(rng);
    head_.init_kaiming(rng);
}

void SemanticEncoder::register_params(ParamRegistry& reg, const std::string& prefix) {
    c1_.register_params(reg, prefix + ".conv0", ParamTag::frozen);
    c2_.register_params(reg, prefix + ".conv1", ParamTag::frozen);
    c3_.register_params(reg, prefix + ".conv2", ParamTag::frozen);
    head_.register_params(reg, prefix + ".head", ParamTag::frozen);
}

Tensor SemanticEncoder::encode(const Tensor& image) const {
    if (image.rank() != 4 || image.dim(0) != 1 || image.dim(1) != 3)
        throw DimError("semantic encoder expects (1,3,H,W), got " + shape_str(image.shape()));
    auto& self = const_cast<SemanticEncoder&>(*this);  // inference mode writes nothing
    Tensor h = silu(self.c1_.forward(image, false));
    h = silu(self.c2_.forward(h, false));
    h = silu(self.c3_.forward(h, false));
    h = self.pool_.forward(h, false);
    h = h.reshaped({1, 64 * 4 * 4});
    Tensor v = self.head_.forward(h, false);
    return v.reshaped({out_dim_});
}

Tensor SemanticEncoder::encode_image(const VideoTensor& image) const {
    if (image.frames() != 1) throw UsageError("semantic encoder takes a single frame");
    return encode(image.data);
}

/*============================== text encoder ==============================*/

TextEncoder::TextEncoder(std::vector<std::string> vocab, int dim, int max_len)
    : vocab_(std::move(vocab)), dim_(dim), max_len_(max_len) {
    emb_ = Embedding(static_cast<int>(vocab_.size()) + 1, dim_);  // +1 null token
}

void TextEncoder::init(Rng& rng) { emb_.init_normal(rng, 0.02); }

void TextEncoder::register_params(ParamRegistry& reg, const std::string& prefix, ParamTag tag) {
    emb_.register_params(reg, prefix + ".embedding", tag);
}

std::vector<int> TextEncoder::tokenize(const std::string& caption) const {
    std::istringstream is(caption);
    std::vector<int> ids;
    std::string w;
    while (is >> w) {
        auto it = std::find(vocab_.begin(), vocab_.end(), w);
        if (it == vocab_.end()) throw DataError("token not in vocabulary: '" + w + "'");
        ids.push_back(static_cast<int>(it - vocab_.begin()));
    }
    if (ids.empty()) ids.push_back(null_token());
    if (static_cast<int>(ids.size()) > max_len_)
        throw DataError("caption longer than " + std::to_string(max_len_) + " tokens");
    return ids;
}

Tensor TextEncoder::encode_tokens(const std::vector<int>& ids, bool training) {
    Tensor e = emb_.forward(ids, training);
    for (int k = 0; k < e.dim(0); ++k) {
        Tensor pos = sinusoidal_embedding(k, dim_);
        for (int j = 0; j < dim_; ++j) e[static_cast<std::int64_t>(k) * dim_ + j] += pos[j];
    }
    return e;
}

Tensor TextEncoder::encode(const std::string& caption, bool training) {
    return encode_tokens(tokenize(caption), training);
}

void TextEncoder::backward(const Tensor& dy) { emb_.backward(dy); }

std::vector<Tensor> TextEncoder::encode_batch(const std::vector<std::vector<int>>& ids,
                                              bool training) {
    std::vector<int> flat;
    for (const auto& v : ids) flat.insert(flat.end(), v.begin(), v.end());
    Tensor rows = emb_.forward(flat, training);
    std::vector<Tensor> out;
    std::int64_t off = 0;
    for (const auto& v : ids) {
        const int K = static_cast<int>(v.size());
        Tensor e({K, dim_});
        std::copy(rows.data() + off * dim_, rows.data() + (off + K) * dim_, e.data());
        for (int k = 0; k < K; ++k) {
            Tensor pos = sinusoidal_embedding(k, dim_);
            for (int j = 0; j < dim_; ++j) e[static_cast<std::int64_t>(k) * dim_ + j] += pos[j];
        }
        out.push_back(std::move(e));
        off += K;
    }
    return out;
}

void TextEncoder::backward_batch(const std::vector<Tensor>& dys) {
    int total = 0;
    for (const auto& d : dys) total += d.dim(0);
    Tensor flat({total, dim_});
    std::int64_t off = 0;
    for (const auto& d : dys) {
        std::copy(d.data(), d.data() + d.size(), flat.data() + off * dim_);
        off += d.dim(0);
    }
    emb_.backward(flat);
}

std::vector<std::string> load_vocabulary(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open vocabulary: " + path);
    std::vector<std::string> vocab;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) vocab.push_back(line);
    return vocab;
}

}  // namespace casvid
