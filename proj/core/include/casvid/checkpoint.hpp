#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "casvid/nn.hpp"
#include "casvid/tensor.hpp"

namespace casvid {

// Single-file container: text header (format version, stage tag, config
// snapshot, seed lineage, tensor directory) followed by a raw payload of
// contiguous little-endian float32 tensor data in directory order.
struct TensorEntry {
    std::string name;
    std::vector<int> shape;
    std::uint64_t offset = 0;  // bytes into the payload
    std::uint64_t nbytes = 0;
};

struct Checkpoint {
    int format_version = 1;
    std::string stage;  // autoencoder | base | refine
    std::string config_json = "{}";
    std::string seeds_json = "{}";
    std::vector<TensorEntry> entries;
    std::vector<float> payload;

    const TensorEntry* find(const std::string& name) const;
    bool has(const std::string& name) const { return find(name) != nullptr; }
    Tensor tensor(const std::string& name) const;
    void add_tensor(const std::string& name, const Tensor& t);
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

Checkpoint checkpoint_from_registry(const ParamRegistry& reg, const std::string& stage,
                                    const std::string& config_json, const std::string& seeds_json);

// Loads every registry parameter by name; missing tensors or shape
// mismatches raise CheckpointError naming the tensor.
void load_registry(const Checkpoint& ckpt, ParamRegistry& reg);

// Loads only parameters whose name starts with `prefix` (used to initialize
// one stage from another); every such parameter must be present.
void load_registry_prefix(const Checkpoint& ckpt, ParamRegistry& reg, const std::string& prefix);

void require_stage(const Checkpoint& ckpt, const std::string& stage);

}  // namespace casvid
