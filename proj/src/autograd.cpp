#include "r2upp/autograd.hpp"

#include <algorithm>
#include <unordered_set>

namespace r2upp::autograd {

namespace {

Var make(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backprop) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->parents = std::move(parents);
    for (const Var& p : n->parents)
        if (p->need_grad) n->need_grad = true;
    if (n->need_grad) n->backprop = std::move(backprop);
    return n;
}

std::vector<double> as_vec(const Tensor& t) { return t.data; }

Tensor vec_as_bias_tensor(const std::vector<double>& v) {
    Tensor t(1, static_cast<int>(v.size()), 1, 1);
    t.data = v;
    return t;
}

}  // namespace

Var constant(Tensor value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    return n;
}

Var input(Tensor value, bool need_grad) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->need_grad = need_grad;
    return n;
}

Var param(Parameter& p) {
    auto n = std::make_shared<Node>();
    n->value = p.value;
    n->need_grad = true;
    n->param = &p;
    return n;
}

Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int padding) {
    Tensor out = ops::conv2d(x->value, weight->value, bias ? as_vec(bias->value)
                                                           : std::vector<double>{},
                             stride, padding);
    std::vector<Var> parents{x, weight};
    if (bias) parents.push_back(bias);
    return make(std::move(out), std::move(parents), [stride, padding](Node& self) {
        const Var& x = self.parents[0];
        const Var& w = self.parents[1];
        ops::Conv2dGrads g = ops::conv2d_backward(x->value, w->value, self.grad, stride, padding);
        if (x->need_grad) x->accumulate(g.d_input);
        if (w->need_grad) w->accumulate(g.d_weight);
        if (self.parents.size() > 2 && self.parents[2]->need_grad)
            self.parents[2]->accumulate(vec_as_bias_tensor(g.d_bias));
    });
}

Var maxpool_2x2(const Var& x) {
    auto fwd = std::make_shared<ops::MaxpoolResult>(ops::maxpool_2x2(x->value));
    return make(fwd->output, {x}, [fwd](Node& self) {
        const Var& x = self.parents[0];
        if (x->need_grad) x->accumulate(ops::maxpool_2x2_backward(x->value, *fwd, self.grad));
    });
}

Var upsample_2x(const Var& x, const Var& weight) {
    Tensor out = ops::upsample_2x(x->value, weight->value);
    return make(std::move(out), {x, weight}, [](Node& self) {
        const Var& x = self.parents[0];
        const Var& w = self.parents[1];
        ops::Upsample2xGrads g = ops::upsample_2x_backward(x->value, w->value, self.grad);
        if (x->need_grad) x->accumulate(g.d_input);
        if (w->need_grad) w->accumulate(g.d_weight);
    });
}

Var batchnorm_train(const Var& x, const Var& gamma, const Var& beta, Parameter& running_mean,
                    Parameter& running_var) {
    auto cache = std::make_shared<ops::BatchnormCache>();
    Tensor out = ops::batchnorm_train(x->value, as_vec(gamma->value), as_vec(beta->value),
                                      running_mean.value.data, running_var.value.data, *cache);
    return make(std::move(out), {x, gamma, beta}, [cache](Node& self) {
        const Var& x = self.parents[0];
        const Var& g = self.parents[1];
        const Var& b = self.parents[2];
        ops::BatchnormGrads grads =
            ops::batchnorm_train_backward(x->value, as_vec(g->value), *cache, self.grad);
        if (x->need_grad) x->accumulate(grads.d_input);
        if (g->need_grad) g->accumulate(vec_as_bias_tensor(grads.d_gamma));
        if (b->need_grad) b->accumulate(vec_as_bias_tensor(grads.d_beta));
    });
}

Var batchnorm_infer(const Var& x, const Var& gamma, const Var& beta,
                    const Parameter& running_mean, const Parameter& running_var) {
    Tensor out = ops::batchnorm_infer(x->value, as_vec(gamma->value), as_vec(beta->value),
                                      running_mean.value.data, running_var.value.data);
    std::vector<double> rv = running_var.value.data;
    return make(std::move(out), {x, gamma, beta}, [rv](Node& self) {
        // infer-mode backward supports gradient checks on frozen stats;
        // only the input path is propagated
        const Var& x = self.parents[0];
        const Var& g = self.parents[1];
        if (x->need_grad)
            x->accumulate(ops::batchnorm_infer_backward(as_vec(g->value), rv, self.grad));
    });
}

Var relu(const Var& x) {
    return make(ops::relu(x->value), {x}, [](Node& self) {
        const Var& x = self.parents[0];
        if (x->need_grad) x->accumulate(ops::relu_backward(x->value, self.grad));
    });
}

Var sigmoid(const Var& x) {
    Tensor out = ops::sigmoid(x->value);
    return make(out, {x}, [](Node& self) {
        const Var& x = self.parents[0];
        if (x->need_grad) x->accumulate(ops::sigmoid_backward(self.value, self.grad));
    });
}

Var add(const Var& a, const Var& b) {
    return make(ops::add(a->value, b->value), {a, b}, [](Node& self) {
        for (const Var& p : self.parents)
            if (p->need_grad) p->accumulate(self.grad);
    });
}

Var concat_channels(const std::vector<Var>& xs) {
    std::vector<const Tensor*> vals;
    vals.reserve(xs.size());
    for (const Var& v : xs) vals.push_back(&v->value);
    Tensor out = ops::concat_channels(vals);
    return make(std::move(out), xs, [](Node& self) {
        int c0 = 0;
        for (const Var& p : self.parents) {
            if (p->need_grad)
                p->accumulate(ops::slice_channels(self.grad, c0, p->value.c()));
            c0 += p->value.c();
        }
    });
}

Var weighted_sum(const std::vector<Var>& scalars, const std::vector<double>& weights) {
    if (scalars.size() != weights.size())
        throw ShapeError("weighted_sum: weight count does not match term count");
    Tensor out(1, 1, 1, 1);
    for (size_t i = 0; i < scalars.size(); ++i)
        out.data[0] += weights[i] * scalars[i]->value.data[0];
    std::vector<Var> parents(scalars.begin(), scalars.end());
    return make(std::move(out), std::move(parents), [weights](Node& self) {
        const double g = self.grad.data[0];
        for (size_t i = 0; i < self.parents.size(); ++i) {
            if (!self.parents[i]->need_grad) continue;
            Tensor t(1, 1, 1, 1);
            t.data[0] = g * weights[i];
            self.parents[i]->accumulate(t);
        }
    });
}

void backward(const Var& root) {
    // iterative post-order DFS: children first, root last
    std::vector<Node*> topo;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, size_t>> stack{{root.get(), 0}};
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* p = node->parents[next++].get();
            if (p->need_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            topo.push_back(node);
            stack.pop_back();
        }
    }

    Tensor seed = Tensor::zeros_like(root->value);
    seed.fill(1.0);
    root->accumulate(seed);
    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        Node* n = *it;
        if (!n->grad_init) continue;
        if (n->backprop) n->backprop(*n);
        if (n->param) {
            for (size_t i = 0; i < n->grad.data.size(); ++i)
                n->param->grad.data[i] += n->grad.data[i];
        }
    }
}

}  // namespace r2upp::autograd
