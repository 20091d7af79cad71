#pragma once

#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "r2upp/tensor.hpp"

namespace r2upp {

// A named tensor with a gradient accumulator and Adam state. Non-trainable
// entries (batchnorm running statistics) carry no optimizer state and are
// skipped by updates and parameter counts, but are checkpointed.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;
    Tensor adam_m;
    Tensor adam_v;
    int64_t step = 0;
    bool trainable = true;
};

// Ordered collection of parameters; creation order is the canonical order
// for checkpoints and optimizer sweeps.
class ParamStore {
public:
    Parameter& create(const std::string& name, int n, int c, int h, int w, bool trainable = true) {
        if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
        auto p = std::make_unique<Parameter>();
        p->name = name;
        p->value = Tensor(n, c, h, w);
        p->grad = Tensor(n, c, h, w);
        if (trainable) {
            p->adam_m = Tensor(n, c, h, w);
            p->adam_v = Tensor(n, c, h, w);
        }
        p->trainable = trainable;
        Parameter* raw = p.get();
        order_.push_back(std::move(p));
        index_[name] = raw;
        return *raw;
    }

    Parameter& get(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
        return *it->second;
    }
    const Parameter& get(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
        return *it->second;
    }
    bool has(const std::string& name) const { return index_.count(name) != 0; }

    const std::vector<std::unique_ptr<Parameter>>& all() const { return order_; }
    std::vector<std::unique_ptr<Parameter>>& all() { return order_; }

    void zero_grad() {
        for (auto& p : order_) p->grad.fill(0.0);
    }

    size_t trainable_scalar_count() const {
        size_t total = 0;
        for (const auto& p : order_)
            if (p->trainable) total += p->value.numel();
        return total;
    }

private:
    std::vector<std::unique_ptr<Parameter>> order_;
    std::unordered_map<std::string, Parameter*> index_;
};

// Fan-in-scaled uniform init for conv weights: U(-b, b), b = sqrt(1/fan_in).
void init_conv_weight(Tensor& w, int fan_in, Rng& rng);

}  // namespace r2upp
