#include "r2upp/blocks.hpp"

#include <cmath>

namespace r2upp {

void init_conv_weight(Tensor& w, int fan_in, Rng& rng) {
    const double bound = std::sqrt(1.0 / fan_in);
    for (double& v : w.data) v = rng.uniform(-bound, bound);
}

namespace blocks {

namespace {

void register_conv(ParamStore& store, const std::string& prefix, int out_c, int in_c, int k,
                   Rng& rng) {
    Parameter& w = store.create(prefix + "/w", out_c, in_c, k, k);
    init_conv_weight(w.value, in_c * k * k, rng);
    store.create(prefix + "/b", 1, out_c, 1, 1);  // zero-initialized bias
}

void register_bn(ParamStore& store, const std::string& prefix, int c) {
    store.create(prefix + "/g", 1, c, 1, 1).value.fill(1.0);
    store.create(prefix + "/b", 1, c, 1, 1);
    store.create(prefix + "/rm", 1, c, 1, 1, /*trainable=*/false);
    store.create(prefix + "/rv", 1, c, 1, 1, /*trainable=*/false).value.fill(1.0);
}

void register_unit(ParamStore& store, const std::string& prefix, int c, int t, Rng& rng) {
    register_conv(store, prefix + "/wf", c, c, 3, rng);
    if (t >= 2) register_conv(store, prefix + "/wr", c, c, 3, rng);
    register_bn(store, prefix + "/bn", c);
}

autograd::Var conv_bn_relu(FwdCtx& ctx, const std::string& conv, const std::string& bn,
                           const autograd::Var& x) {
    autograd::Var y =
        autograd::conv2d(x, ctx.pvar(conv + "/w"), ctx.pvar(conv + "/b"), 1, 1);
    return autograd::relu(ctx.bn(bn, y));
}

}  // namespace

void register_unit_params(ParamStore& store, const std::string& prefix, int channels, int t,
                          Rng& rng) {
    register_unit(store, prefix, channels, t, rng);
}

void register_block_params(ParamStore& store, const std::string& prefix, const BlockSpec& spec,
                           Rng& rng) {
    if (spec.in_channels < 1 || spec.out_channels < 1)
        throw ConfigError("block " + prefix + ": channels must be >= 1");
    if (spec.kind == BlockKind::Plain) {
        register_conv(store, prefix + "/conv1", spec.out_channels, spec.in_channels, 3, rng);
        register_bn(store, prefix + "/bn1", spec.out_channels);
        register_conv(store, prefix + "/conv2", spec.out_channels, spec.out_channels, 3, rng);
        register_bn(store, prefix + "/bn2", spec.out_channels);
        return;
    }
    if (spec.t < 1) throw ConfigError("block " + prefix + ": t must be >= 1");
    register_conv(store, prefix + "/entry", spec.out_channels, spec.in_channels, 1, rng);
    register_unit(store, prefix + "/unit1", spec.out_channels, spec.t, rng);
    register_unit(store, prefix + "/unit2", spec.out_channels, spec.t, rng);
}

autograd::Var rcl_unit(FwdCtx& ctx, const std::string& prefix, int t, const autograd::Var& x) {
    if (t < 1) throw ConfigError("rcl_unit " + prefix + ": t must be >= 1");
    autograd::Var wf = ctx.pvar(prefix + "/wf/w");
    autograd::Var wf_b = ctx.pvar(prefix + "/wf/b");
    // the feed-forward term is identical at every step; compute it once
    autograd::Var feed = autograd::conv2d(x, wf, wf_b, 1, 1);
    autograd::Var o = autograd::relu(ctx.bn(prefix + "/bn", feed));
    if (t >= 2) {
        autograd::Var wr = ctx.pvar(prefix + "/wr/w");
        autograd::Var wr_b = ctx.pvar(prefix + "/wr/b");
        for (int s = 1; s < t; ++s) {
            autograd::Var rec = autograd::conv2d(o, wr, wr_b, 1, 1);
            o = autograd::relu(ctx.bn(prefix + "/bn", autograd::add(feed, rec)));
        }
    }
    return o;
}

autograd::Var apply_block(FwdCtx& ctx, const std::string& prefix, const BlockSpec& spec,
                          const autograd::Var& x) {
    if (spec.kind == BlockKind::Plain) {
        autograd::Var y = conv_bn_relu(ctx, prefix + "/conv1", prefix + "/bn1", x);
        return conv_bn_relu(ctx, prefix + "/conv2", prefix + "/bn2", y);
    }
    // project to out_channels so the residual addition is always shape-valid
    autograd::Var xp =
        autograd::conv2d(x, ctx.pvar(prefix + "/entry/w"), ctx.pvar(prefix + "/entry/b"), 1, 0);
    autograd::Var y = rcl_unit(ctx, prefix + "/unit1", spec.t, xp);
    y = rcl_unit(ctx, prefix + "/unit2", spec.t, y);
    return autograd::add(xp, y);
}

size_t block_param_count(const BlockSpec& spec) {
    const size_t in = spec.in_channels, out = spec.out_channels;
    if (spec.kind == BlockKind::Plain) {
        // two 3x3 convs with bias + two batchnorm affine pairs
        return (9 * in * out + out) + (9 * out * out + out) + 2 * (2 * out);
    }
    // 1x1 entry conv + per unit: feed conv, recurrent conv (t>=2 only,
    // shared across unfolding steps), batchnorm affine pair
    size_t unit = (9 * out * out + out) + 2 * out;
    if (spec.t >= 2) unit += 9 * out * out + out;
    return (in * out + out) + 2 * unit;
}

}  // namespace blocks
}  // namespace r2upp
