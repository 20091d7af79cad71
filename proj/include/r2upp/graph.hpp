#pragma once

#include <map>
#include <string>
#include <vector>

#include "r2upp/blocks.hpp"

namespace r2upp {

// Grid coordinate of a convolution node: m = down-sampling level (0 = top),
// n = position along the skip pathway.
struct NodeId {
    int m = 0;
    int n = 0;
    auto operator<=>(const NodeId&) const = default;
};

std::string node_name(const NodeId& id);

enum class SkipStyle { Dense, Simple };

struct ArchitectureConfig {
    int depth = 4;
    std::vector<int> filters = {32, 64, 128, 256, 512};
    BlockKind block_kind = BlockKind::Rrcl;
    int t = 2;
    int num_classes = 1;
    bool deep_supervision = true;
    SkipStyle skip_style = SkipStyle::Dense;
    int in_channels = 1;

    void validate() const;
};

struct Edge {
    enum class Kind { Input, SameLevel, UpSampled, DownSampled };
    Kind kind;
    NodeId from;  // unused for Input
};

struct PlanNode {
    NodeId id;
    std::vector<Edge> inputs;
};

struct GraphPlan {
    int depth = 0;
    SkipStyle style = SkipStyle::Dense;
    std::vector<PlanNode> nodes;  // topologically ordered
    std::vector<int> heads;      // supervised output depths q (head at X(0,q))

    const PlanNode& node(const NodeId& id) const;
};

GraphPlan build_plan(const ArchitectureConfig& config);

// Sub-network of nodes {(m,n): m+n <= q} with a single head at X(0,q).
GraphPlan prune(const GraphPlan& plan, int q);

// Plain-text adjacency listing, one node per line, stable ordering.
std::string dump_plan(const GraphPlan& plan);

// A built network: configuration, plan and parameter store. Parameter names
// are keyed by grid coordinate, so a pruned plan evaluated against the same
// store reuses the full model's weights.
struct Model {
    ArchitectureConfig arch;
    GraphPlan plan;
    ParamStore store;
};

Model build_model(const ArchitectureConfig& config, uint64_t seed);

struct ForwardResult {
    std::map<NodeId, autograd::Var> activations;
    // head probability maps ordered by depth q (ascending); simple style has
    // exactly one head at q = depth
    std::vector<autograd::Var> heads;
    std::vector<int> head_depths;
};

ForwardResult forward(const GraphPlan& plan, const ArchitectureConfig& arch, ParamStore& store,
                      const Tensor& input, bool train, bool input_needs_grad = false);

// Elementwise arithmetic mean of equally shaped head outputs.
Tensor ensemble(const std::vector<Tensor>& head_outputs);

size_t count_parameters(const ArchitectureConfig& config);

// per-block breakdown for reporting: (name, scalar count)
std::vector<std::pair<std::string, size_t>> parameter_table(const ArchitectureConfig& config);

}  // namespace r2upp
