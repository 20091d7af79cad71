#include "r2upp/loss.hpp"

#include <cmath>

namespace r2upp {

namespace {

double clamp_p(double p) {
    if (p < kProbClampLo) return kProbClampLo;
    if (p > kProbClampHi) return kProbClampHi;
    return p;
}

// per-element contribution and its derivative w.r.t. the raw probability
double term(double y, double p_raw) {
    const double p = clamp_p(p_raw);
    return y * std::log(p) + 2.0 * y * p / (y * y + p * p + kLossEps);
}

double term_grad(double y, double p_raw) {
    if (p_raw < kProbClampLo || p_raw > kProbClampHi) return 0.0;
    const double p = p_raw;
    const double den = y * y + p * p + kLossEps;
    return y / p + 2.0 * y * (y * y + kLossEps - p * p) / (den * den);
}

void check_shapes(const Tensor& labels, const Tensor& probs) {
    if (!labels.same_shape(probs))
        throw ShapeError("hybrid_loss: labels " + shape_str(labels) + " vs probs " +
                         shape_str(probs));
}

}  // namespace

double hybrid_loss_value(const Tensor& labels, const Tensor& probs) {
    check_shapes(labels, probs);
    const int C = probs.c();
    const double n_pixels = static_cast<double>(probs.n()) * probs.h() * probs.w();
    double total = 0.0;
    for (size_t i = 0; i < probs.data.size(); ++i) {
        total += term(labels.data[i], probs.data[i]);
        if (C == 1) total += term(1.0 - labels.data[i], 1.0 - probs.data[i]);
    }
    return -total / n_pixels;
}

autograd::Var hybrid_loss(const Tensor& labels, const autograd::Var& probs) {
    check_shapes(labels, probs->value);
    Tensor out(1, 1, 1, 1);
    out.data[0] = hybrid_loss_value(labels, probs->value);
    auto node = std::make_shared<autograd::Node>();
    node->value = std::move(out);
    node->parents = {probs};
    node->need_grad = probs->need_grad;
    if (node->need_grad) {
        Tensor y = labels;
        node->backprop = [y](autograd::Node& self) {
            const autograd::Var& p = self.parents[0];
            if (!p->need_grad) return;
            const int C = p->value.c();
            const double scale =
                -self.grad.data[0] /
                (static_cast<double>(p->value.n()) * p->value.h() * p->value.w());
            Tensor g = Tensor::zeros_like(p->value);
            for (size_t i = 0; i < g.data.size(); ++i) {
                double d = term_grad(y.data[i], p->value.data[i]);
                if (C == 1) d -= term_grad(1.0 - y.data[i], 1.0 - p->value.data[i]);
                g.data[i] = scale * d;
            }
            p->accumulate(g);
        };
    }
    return node;
}

autograd::Var total_loss(const Tensor& labels, const std::vector<autograd::Var>& heads,
                         const std::vector<double>& eta) {
    if (heads.empty()) throw ShapeError("total_loss: no heads");
    if (heads.size() != eta.size())
        throw ShapeError("total_loss: eta length " + std::to_string(eta.size()) +
                         " does not match head count " + std::to_string(heads.size()));
    std::vector<autograd::Var> terms;
    terms.reserve(heads.size());
    for (const autograd::Var& h : heads) terms.push_back(hybrid_loss(labels, h));
    return autograd::weighted_sum(terms, eta);
}

}  // namespace r2upp
