#include "casvid/optimizer.hpp"

#include <cmath>

#include "casvid/errors.hpp"

namespace casvid {

std::int64_t ParamGroup::size() const {
    std::int64_t n = 0;
    for (const Param* p : params) n += p->value.size();
    return n;
}

std::vector<ParamGroup> build_param_groups(ParamRegistry& reg,
                                           const std::map<std::string, ParamTag>& tags, double lr,
                                           double gamma_spatial) {
    if (gamma_spatial < 0.0) throw ConfigError("gamma must be >= 0");
    ParamGroup spatial{"spatial", lr * gamma_spatial, {}};
    ParamGroup temporal{"temporal", lr, {}};
    for (Param* p : reg.params()) {
        if (p->tag == ParamTag::frozen) continue;
        auto it = tags.find(p->name);
        if (it == tags.end()) throw Error("parameter in no group: " + p->name);
        (it->second == ParamTag::temporal ? temporal : spatial).params.push_back(p);
    }
    for (const auto& [name, tag] : tags) {
        (void)tag;
        if (!reg.find(name)) throw Error("tag map names unknown parameter: " + name);
    }
    return {spatial, temporal};
}

AdamW::AdamW(std::vector<ParamGroup> groups, AdamWConfig cfg)
    : groups_(std::move(groups)), cfg_(cfg) {
    m_.resize(groups_.size());
    v_.resize(groups_.size());
    for (std::size_t g = 0; g < groups_.size(); ++g) {
        m_[g].reserve(groups_[g].params.size());
        v_[g].reserve(groups_[g].params.size());
        for (const Param* p : groups_[g].params) {
            m_[g].emplace_back(p->value.shape());
            v_[g].emplace_back(p->value.shape());
        }
    }
}

void AdamW::zero_grad() {
    for (auto& g : groups_)
        for (Param* p : g.params) {
            p->ensure_grad();
            p->grad.zero();
        }
}

void AdamW::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t g = 0; g < groups_.size(); ++g) {
        const double lr = groups_[g].lr;
        if (lr == 0.0) continue;  // frozen group: leave weights and moments untouched
        for (std::size_t i = 0; i < groups_[g].params.size(); ++i) {
            Param* p = groups_[g].params[i];
            double* w = p->value.data();
            const double* grad = p->grad.data();
            double* m = m_[g][i].data();
            double* v = v_[g][i].data();
            for (std::int64_t j = 0; j < p->value.size(); ++j) {
                m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * grad[j];
                v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * grad[j] * grad[j];
                const double mhat = m[j] / bc1;
                const double vhat = v[j] / bc2;
                w[j] -= lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * w[j]);
            }
        }
    }
}

}  // namespace casvid
