#pragma once

#include <map>
#include <string>
#include <vector>

#include "casvid/nn.hpp"

namespace casvid {

struct AdamWConfig {
    double lr = 8e-5;
    double beta1 = 0.9;
    double beta2 = 0.99;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

struct ParamGroup {
    std::string name;  // "spatial" | "temporal"
    double lr = 0.0;
    std::vector<Param*> params;

    std::int64_t size() const;
};

// Two groups: spatial at lr * gamma, temporal at lr. Every trainable
// parameter of the registry lands in exactly one group; a tag map entry
// without a registry parameter (or vice versa) fails fast.
// gamma may be 0 here; range validation for configured runs happens at the
// config layer.
std::vector<ParamGroup> build_param_groups(ParamRegistry& reg,
                                           const std::map<std::string, ParamTag>& tags, double lr,
                                           double gamma_spatial);

class AdamW {
public:
    AdamW(std::vector<ParamGroup> groups, AdamWConfig cfg);

    void step();
    void zero_grad();
    const std::vector<ParamGroup>& groups() const { return groups_; }

private:
    std::vector<ParamGroup> groups_;
    AdamWConfig cfg_;
    std::vector<std::vector<Tensor>> m_, v_;  // per group, per param
    std::int64_t t_ = 0;
};

}  // namespace casvid
