#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "r2upp/ops.hpp"
#include "r2upp/params.hpp"
#include "r2upp/tensor.hpp"

namespace r2upp::autograd {

// One node of the dynamically recorded computation graph. Gradients flow by
// walking the tape in reverse topological order; fan-out (dense skip reuse)
// accumulates naturally because each node's grad is summed before its own
// backprop fires.
struct Node {
    Tensor value;
    Tensor grad;
    bool need_grad = false;
    bool grad_init = false;
    Parameter* param = nullptr;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backprop;

    void accumulate(const Tensor& g) {
        if (!grad_init) {
            grad = g;
            grad_init = true;
        } else {
            for (size_t i = 0; i < grad.data.size(); ++i) grad.data[i] += g.data[i];
        }
    }
};

using Var = std::shared_ptr<Node>;

Var constant(Tensor value);
Var input(Tensor value, bool need_grad = false);
Var param(Parameter& p);

Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int padding);
Var maxpool_2x2(const Var& x);
Var upsample_2x(const Var& x, const Var& weight);
// Train-mode batchnorm; mutates the running-stat parameters in place.
Var batchnorm_train(const Var& x, const Var& gamma, const Var& beta, Parameter& running_mean,
                    Parameter& running_var);
Var batchnorm_infer(const Var& x, const Var& gamma, const Var& beta,
                    const Parameter& running_mean, const Parameter& running_var);
Var relu(const Var& x);
Var sigmoid(const Var& x);
Var add(const Var& a, const Var& b);
Var concat_channels(const std::vector<Var>& xs);

// scalar (1x1x1x1) combinators
Var weighted_sum(const std::vector<Var>& scalars, const std::vector<double>& weights);

// Runs reverse-mode accumulation from a scalar root and adds the resulting
// leaf gradients into their bound Parameters' grad accumulators.
void backward(const Var& root);

}  // namespace r2upp::autograd
