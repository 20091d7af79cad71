#include "r2upp/graph.hpp"

#include <algorithm>
#include <cmath>

namespace r2upp {

std::string node_name(const NodeId& id) {
    return "X(" + std::to_string(id.m) + "," + std::to_string(id.n) + ")";
}

void ArchitectureConfig::validate() const {
    if (depth < 1 || depth > 8) throw ConfigError("depth must be in 1..8");
    if (static_cast<int>(filters.size()) != depth + 1)
        throw ConfigError("filters must list depth+1 entries, got " +
                          std::to_string(filters.size()));
    for (int f : filters)
        if (f < 1) throw ConfigError("filters must be strictly positive");
    if (t < 1) throw ConfigError("t must be >= 1");
    if (num_classes < 1) throw ConfigError("num_classes must be >= 1");
    if (in_channels < 1) throw ConfigError("in_channels must be >= 1");
}

const PlanNode& GraphPlan::node(const NodeId& id) const {
    for (const PlanNode& n : nodes)
        if (n.id == id) return n;
    throw ConfigError("plan has no node " + node_name(id));
}

namespace {

bool node_exists(SkipStyle style, int depth, int m, int n) {
    if (m + n > depth || m < 0 || n < 0) return false;
    if (style == SkipStyle::Dense) return true;
    return n == 0 || n == depth - m;
}

int block_in_channels(const ArchitectureConfig& cfg, const GraphPlan& plan, const NodeId& id) {
    if (id.n == 0) return id.m == 0 ? cfg.in_channels : cfg.filters[id.m - 1];
    // up-sampled edges are retargeted to filters[m], so every concatenated
    // input carries filters[m] channels
    return static_cast<int>(plan.node(id).inputs.size()) * cfg.filters[id.m];
}

std::string up_name(const NodeId& to) {
    return "up" + std::to_string(to.m) + "_" + std::to_string(to.n);
}

std::string block_name(const NodeId& id) {
    return "X" + std::to_string(id.m) + "_" + std::to_string(id.n);
}

BlockSpec block_spec_for(const ArchitectureConfig& cfg, const GraphPlan& plan, const NodeId& id) {
    BlockSpec spec;
    spec.kind = cfg.block_kind;
    spec.t = cfg.t;
    spec.in_channels = block_in_channels(cfg, plan, id);
    spec.out_channels = cfg.filters[id.m];
    return spec;
}

}  // namespace

GraphPlan build_plan(const ArchitectureConfig& config) {
    config.validate();
    GraphPlan plan;
    plan.depth = config.depth;
    plan.style = config.skip_style;
    const int D = config.depth;
    for (int n = 0; n <= D; ++n) {
        for (int m = 0; m + n <= D; ++m) {
            if (!node_exists(config.skip_style, D, m, n)) continue;
            PlanNode node;
            node.id = {m, n};
            if (n == 0) {
                if (m == 0)
                    node.inputs.push_back({Edge::Kind::Input, {}});
                else
                    node.inputs.push_back({Edge::Kind::DownSampled, {m - 1, 0}});
            } else {
                for (int k = 0; k < n; ++k)
                    if (node_exists(config.skip_style, D, m, k))
                        node.inputs.push_back({Edge::Kind::SameLevel, {m, k}});
                node.inputs.push_back({Edge::Kind::UpSampled, {m + 1, n - 1}});
            }
            plan.nodes.push_back(std::move(node));
        }
    }
    if (config.skip_style == SkipStyle::Dense)
        for (int q = 1; q <= D; ++q) plan.heads.push_back(q);
    else
        plan.heads.push_back(D);
    return plan;
}

GraphPlan prune(const GraphPlan& plan, int q) {
    if (q < 1 || q > plan.depth)
        throw ConfigError("prune: depth " + std::to_string(q) + " out of range 1.." +
                          std::to_string(plan.depth));
    GraphPlan sub;
    sub.depth = plan.depth;
    sub.style = plan.style;
    for (const PlanNode& n : plan.nodes)
        if (n.id.m + n.id.n <= q) sub.nodes.push_back(n);
    sub.heads = {q};
    return sub;
}

std::string dump_plan(const GraphPlan& plan) {
    std::string out;
    for (const PlanNode& n : plan.nodes) {
        out += node_name(n.id) + " <- [";
        for (size_t i = 0; i < n.inputs.size(); ++i) {
            const Edge& e = n.inputs[i];
            if (i) out += ", ";
            switch (e.kind) {
                case Edge::Kind::Input: out += "input"; break;
                case Edge::Kind::SameLevel: out += node_name(e.from); break;
                case Edge::Kind::UpSampled: out += "up(" + node_name(e.from) + ")"; break;
                case Edge::Kind::DownSampled: out += "pool(" + node_name(e.from) + ")"; break;
            }
        }
        out += "]\n";
    }
    return out;
}

Model build_model(const ArchitectureConfig& config, uint64_t seed) {
    Model model;
    model.arch = config;
    model.plan = build_plan(config);
    Rng rng(seed);
    for (const PlanNode& node : model.plan.nodes) {
        for (const Edge& e : node.inputs) {
            if (e.kind != Edge::Kind::UpSampled) continue;
            Parameter& w = model.store.create(up_name(node.id) + "/w", config.filters[node.id.m + 1],
                                              config.filters[node.id.m], 2, 2);
            init_conv_weight(w.value, config.filters[node.id.m + 1], rng);
        }
        blocks::register_block_params(model.store, block_name(node.id),
                                      block_spec_for(config, model.plan, node.id), rng);
    }
    for (int q : model.plan.heads) {
        const std::string prefix = "head" + std::to_string(q);
        Parameter& w = model.store.create(prefix + "/w", config.num_classes, config.filters[0], 1, 1);
        init_conv_weight(w.value, config.filters[0], rng);
        model.store.create(prefix + "/b", 1, config.num_classes, 1, 1);
    }
    return model;
}

ForwardResult forward(const GraphPlan& plan, const ArchitectureConfig& arch, ParamStore& store,
                      const Tensor& input, bool train, bool input_needs_grad) {
    const int div = 1 << plan.depth;
    if (input.h() % div != 0 || input.w() % div != 0)
        throw ShapeError("forward: input " + shape_str(input) + " spatial dims not divisible by " +
                         std::to_string(div));
    if (input.c() != arch.in_channels)
        throw ShapeError("forward: input channels do not match configuration");

    FwdCtx ctx{store, train};
    ForwardResult result;
    autograd::Var in_var = autograd::input(input, input_needs_grad);
    for (const PlanNode& node : plan.nodes) {
        std::vector<autograd::Var> feeds;
        for (const Edge& e : node.inputs) {
            switch (e.kind) {
                case Edge::Kind::Input:
                    feeds.push_back(in_var);
                    break;
                case Edge::Kind::SameLevel:
                    feeds.push_back(result.activations.at(e.from));
                    break;
                case Edge::Kind::DownSampled:
                    feeds.push_back(autograd::maxpool_2x2(result.activations.at(e.from)));
                    break;
                case Edge::Kind::UpSampled:
                    feeds.push_back(autograd::upsample_2x(result.activations.at(e.from),
                                                          ctx.pvar(up_name(node.id) + "/w")));
                    break;
            }
        }
        autograd::Var x = feeds.size() == 1 ? feeds[0] : autograd::concat_channels(feeds);
        result.activations[node.id] =
            blocks::apply_block(ctx, block_name(node.id), block_spec_for(arch, plan, node.id), x);
    }
    for (int q : plan.heads) {
        const std::string prefix = "head" + std::to_string(q);
        autograd::Var logits = autograd::conv2d(result.activations.at({0, q}),
                                                ctx.pvar(prefix + "/w"), ctx.pvar(prefix + "/b"),
                                                1, 0);
        result.heads.push_back(autograd::sigmoid(logits));
        result.head_depths.push_back(q);
    }
    return result;
}

Tensor ensemble(const std::vector<Tensor>& head_outputs) {
    if (head_outputs.empty()) throw ShapeError("ensemble: empty head list");
    Tensor out = head_outputs[0];
    for (size_t i = 1; i < head_outputs.size(); ++i) {
        if (!out.same_shape(head_outputs[i]))
            throw ShapeError("ensemble: head shape mismatch");
        for (size_t j = 0; j < out.data.size(); ++j) out.data[j] += head_outputs[i].data[j];
    }
    const double inv = 1.0 / static_cast<double>(head_outputs.size());
    for (double& v : out.data) v *= inv;
    return out;
}

size_t count_parameters(const ArchitectureConfig& config) {
    size_t total = 0;
    for (const auto& [name, count] : parameter_table(config)) total += count;
    return total;
}

std::vector<std::pair<std::string, size_t>> parameter_table(const ArchitectureConfig& config) {
    GraphPlan plan = build_plan(config);
    std::vector<std::pair<std::string, size_t>> table;
    for (const PlanNode& node : plan.nodes) {
        for (const Edge& e : node.inputs)
            if (e.kind == Edge::Kind::UpSampled)
                table.emplace_back(up_name(node.id),
                                   static_cast<size_t>(4) * config.filters[node.id.m + 1] *
                                       config.filters[node.id.m]);
        table.emplace_back(block_name(node.id),
                           blocks::block_param_count(block_spec_for(config, plan, node.id)));
    }
    for (int q : plan.heads)
        table.emplace_back("head" + std::to_string(q),
                           static_cast<size_t>(config.filters[0]) * config.num_classes +
                               config.num_classes);
    return table;
}

}  // namespace r2upp
