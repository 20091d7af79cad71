#pragma once

#include <string>
#include <unordered_map>

#include "r2upp/autograd.hpp"
#include "r2upp/params.hpp"

namespace r2upp {

enum class BlockKind { Plain, Rrcl };

// Fully determines a block's parameter set: same spec, same shapes.
struct BlockSpec {
    BlockKind kind = BlockKind::Rrcl;
    int in_channels = 1;
    int out_channels = 1;
    // number of convolution applications per recurrent unit; t=1 is a single
    // feed-forward convolution, t>=2 adds a shared recurrent weight applied
    // t-1 times (parameter count is constant across t>=2)
    int t = 2;
};

// Shared per-forward state: resolves parameter names to tape leaves exactly
// once so weight sharing accumulates gradients at a single node.
struct FwdCtx {
    ParamStore& store;
    bool train = true;
    std::unordered_map<const Parameter*, autograd::Var> cache;

    autograd::Var pvar(const std::string& name) {
        Parameter& p = store.get(name);
        auto it = cache.find(&p);
        if (it != cache.end()) return it->second;
        autograd::Var v = autograd::param(p);
        cache.emplace(&p, v);
        return v;
    }

    autograd::Var bn(const std::string& prefix, const autograd::Var& x) {
        Parameter& rm = store.get(prefix + "/rm");
        Parameter& rv = store.get(prefix + "/rv");
        if (train)
            return autograd::batchnorm_train(x, pvar(prefix + "/g"), pvar(prefix + "/b"), rm, rv);
        return autograd::batchnorm_infer(x, pvar(prefix + "/g"), pvar(prefix + "/b"), rm, rv);
    }
};

namespace blocks {

void register_block_params(ParamStore& store, const std::string& prefix, const BlockSpec& spec,
                           Rng& rng);

// Parameters for a single recurrent unit (prefix/wf, prefix/wr for t>=2,
// prefix/bn); exposed so the unit can be driven standalone.
void register_unit_params(ParamStore& store, const std::string& prefix, int channels, int t,
                          Rng& rng);

// Recurrent convolution unit, unrolled with shared weights.
autograd::Var rcl_unit(FwdCtx& ctx, const std::string& prefix, int t, const autograd::Var& x);

// Dispatches on spec.kind: recurrent-residual block or plain two-conv block.
autograd::Var apply_block(FwdCtx& ctx, const std::string& prefix, const BlockSpec& spec,
                          const autograd::Var& x);

// Exact trainable scalar count (conv weights, biases, batchnorm affine).
size_t block_param_count(const BlockSpec& spec);

}  // namespace blocks
}  // namespace r2upp
