#include "casvid/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

#include "casvid/errors.hpp"

namespace casvid {

namespace {

constexpr const char* kMagic = "CASVIDCKPT1";

bool valid_stage(const std::string& s) {
    return s == "autoencoder" || s == "base" || s == "refine";
}

}  // namespace

const TensorEntry* Checkpoint::find(const std::string& name) const {
    for (const auto& e : entries)
        if (e.name == name) return &e;
    return nullptr;
}

Tensor Checkpoint::tensor(const std::string& name) const {
    const TensorEntry* e = find(name);
    if (!e) throw CheckpointError("checkpoint has no tensor named " + name);
    Tensor t(e->shape);
    const float* src = payload.data() + e->offset / sizeof(float);
    for (std::int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<double>(src[i]);
    return t;
}

void Checkpoint::add_tensor(const std::string& name, const Tensor& t) {
    if (find(name)) throw CheckpointError("duplicate tensor name in checkpoint: " + name);
    TensorEntry e;
    e.name = name;
    e.shape = t.shape();
    e.offset = payload.size() * sizeof(float);
    e.nbytes = static_cast<std::uint64_t>(t.size()) * sizeof(float);
    entries.push_back(std::move(e));
    const std::size_t base = payload.size();
    payload.resize(base + static_cast<std::size_t>(t.size()));
    for (std::int64_t i = 0; i < t.size(); ++i)
        payload[base + static_cast<std::size_t>(i)] = static_cast<float>(t[i]);
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    if (!valid_stage(ckpt.stage)) throw CheckpointError("invalid stage tag: " + ckpt.stage);
    nlohmann::json header;
    header["format_version"] = ckpt.format_version;
    header["stage"] = ckpt.stage;
    header["config"] = nlohmann::json::parse(ckpt.config_json);
    header["seeds"] = nlohmann::json::parse(ckpt.seeds_json);
    nlohmann::json dir = nlohmann::json::array();
    for (const auto& e : ckpt.entries) {
        dir.push_back({{"name", e.name},
                       {"dtype", "f32"},
                       {"shape", e.shape},
                       {"offset", e.offset},
                       {"nbytes", e.nbytes}});
    }
    header["tensors"] = std::move(dir);
    const std::string text = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw CheckpointError("cannot open checkpoint for writing: " + path);
    out << kMagic << "\n" << text.size() << "\n" << text;
    out.write(reinterpret_cast<const char*>(ckpt.payload.data()),
              static_cast<std::streamsize>(ckpt.payload.size() * sizeof(float)));
    if (!out) throw CheckpointError("short write to checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint: " + path);
    std::string magic;
    std::getline(in, magic);
    if (magic != kMagic) throw CheckpointError("corrupt checkpoint header (bad magic): " + path);
    std::string len_line;
    std::getline(in, len_line);
    std::size_t header_len = 0;
    try {
        header_len = static_cast<std::size_t>(std::stoull(len_line));
    } catch (const std::exception&) {
        throw CheckpointError("corrupt checkpoint header (bad length): " + path);
    }
    std::string text(header_len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(header_len));
    if (static_cast<std::size_t>(in.gcount()) != header_len)
        throw CheckpointError("corrupt checkpoint header (truncated): " + path);

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(text);
    } catch (const std::exception& e) {
        throw CheckpointError(std::string("corrupt checkpoint header (bad json): ") + e.what());
    }

    Checkpoint ckpt;
    try {
        ckpt.format_version = header.at("format_version").get<int>();
        ckpt.stage = header.at("stage").get<std::string>();
        ckpt.config_json = header.at("config").dump();
        ckpt.seeds_json = header.at("seeds").dump();
        for (const auto& j : header.at("tensors")) {
            TensorEntry e;
            e.name = j.at("name").get<std::string>();
            if (j.at("dtype").get<std::string>() != "f32")
                throw CheckpointError("unsupported tensor dtype for " + e.name);
            e.shape = j.at("shape").get<std::vector<int>>();
            e.offset = j.at("offset").get<std::uint64_t>();
            e.nbytes = j.at("nbytes").get<std::uint64_t>();
            ckpt.entries.push_back(std::move(e));
        }
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("corrupt checkpoint header: ") + e.what());
    }
    if (!valid_stage(ckpt.stage)) throw CheckpointError("invalid stage tag: " + ckpt.stage);

    // Directory invariants: increasing, non-overlapping, sizes consistent.
    std::uint64_t expect = 0;
    for (const auto& e : ckpt.entries) {
        if (e.offset != expect)
            throw CheckpointError("tensor directory offsets not contiguous at " + e.name);
        if (e.nbytes != static_cast<std::uint64_t>(shape_numel(e.shape)) * sizeof(float))
            throw CheckpointError("tensor size mismatch for " + e.name);
        expect = e.offset + e.nbytes;
    }

    ckpt.payload.resize(expect / sizeof(float));
    in.read(reinterpret_cast<char*>(ckpt.payload.data()), static_cast<std::streamsize>(expect));
    if (static_cast<std::uint64_t>(in.gcount()) != expect)
        throw CheckpointError("payload length mismatch in " + path);
    return ckpt;
}

Checkpoint checkpoint_from_registry(const ParamRegistry& reg, const std::string& stage,
                                    const std::string& config_json,
                                    const std::string& seeds_json) {
    Checkpoint ckpt;
    ckpt.stage = stage;
    ckpt.config_json = config_json;
    ckpt.seeds_json = seeds_json;
    for (const Param* p : reg.params()) ckpt.add_tensor(p->name, p->value);
    return ckpt;
}

namespace {

void load_param(const Checkpoint& ckpt, Param* p) {
    const TensorEntry* e = ckpt.find(p->name);
    if (!e) throw CheckpointError("checkpoint missing tensor " + p->name);
    if (e->shape != p->value.shape())
        throw CheckpointError("shape mismatch for tensor " + p->name + ": checkpoint " +
                              shape_str(e->shape) + " vs model " + shape_str(p->value.shape()));
    const float* src = ckpt.payload.data() + e->offset / sizeof(float);
    for (std::int64_t i = 0; i < p->value.size(); ++i)
        p->value[i] = static_cast<double>(src[i]);
}

}  // namespace

void load_registry(const Checkpoint& ckpt, ParamRegistry& reg) {
    for (Param* p : reg.params()) load_param(ckpt, p);
}

void load_registry_prefix(const Checkpoint& ckpt, ParamRegistry& reg, const std::string& prefix) {
    for (Param* p : reg.params())
        if (p->name.rfind(prefix, 0) == 0) load_param(ckpt, p);
}

void require_stage(const Checkpoint& ckpt, const std::string& stage) {
    if (ckpt.stage != stage)
        throw CheckpointError("checkpoint stage is '" + ckpt.stage + "', expected '" + stage + "'");
}

}  // namespace casvid
