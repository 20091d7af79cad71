#pragma once

#include <utility>
#include <vector>

#include "r2upp/tensor.hpp"

namespace r2upp::ops {

// ---- convolution -----------------------------------------------------------

// input: NxCinxHxW, weight: [Cout,Cin,kh,kw], bias length Cout (may be empty).
Tensor conv2d(const Tensor& input, const Tensor& weight, const std::vector<double>& bias,
              int stride, int padding);

struct Conv2dGrads {
    Tensor d_input;
    Tensor d_weight;
    std::vector<double> d_bias;
};

Conv2dGrads conv2d_backward(const Tensor& input, const Tensor& weight, const Tensor& d_out,
                            int stride, int padding);

// ---- 2x2 stride-2 max pooling ---------------------------------------------

struct MaxpoolResult {
    Tensor output;
    // per output cell, the flat source index of the winning input element
    std::vector<size_t> argmax;
};

MaxpoolResult maxpool_2x2(const Tensor& input);
Tensor maxpool_2x2_backward(const Tensor& input, const MaxpoolResult& fwd, const Tensor& d_out);

// ---- learned 2x up-sampling (2x2 stride-2 transposed convolution) ----------

// weight: [Cin,Cout,2,2]; output NxCoutx2Hx2W.
Tensor upsample_2x(const Tensor& input, const Tensor& weight);

struct Upsample2xGrads {
    Tensor d_input;
    Tensor d_weight;
};

Upsample2xGrads upsample_2x_backward(const Tensor& input, const Tensor& weight,
                                     const Tensor& d_out);

// ---- batch normalization ---------------------------------------------------

constexpr double kBnEps = 1e-5;
constexpr double kBnMomentum = 0.9;

struct BatchnormCache {
    std::vector<double> mean;     // per channel
    std::vector<double> inv_std;  // 1/sqrt(var+eps)
    Tensor x_hat;
};

// Train mode: normalizes with batch statistics and updates running stats
// in place (running = momentum*running + (1-momentum)*batch).
Tensor batchnorm_train(const Tensor& input, const std::vector<double>& gamma,
                       const std::vector<double>& beta, std::vector<double>& running_mean,
                       std::vector<double>& running_var, BatchnormCache& cache);

Tensor batchnorm_infer(const Tensor& input, const std::vector<double>& gamma,
                       const std::vector<double>& beta, const std::vector<double>& running_mean,
                       const std::vector<double>& running_var);

struct BatchnormGrads {
    Tensor d_input;
    std::vector<double> d_gamma;
    std::vector<double> d_beta;
};

BatchnormGrads batchnorm_train_backward(const Tensor& input, const std::vector<double>& gamma,
                                        const BatchnormCache& cache, const Tensor& d_out);

Tensor batchnorm_infer_backward(const std::vector<double>& gamma,
                                const std::vector<double>& running_var, const Tensor& d_out);

// ---- elementwise -----------------------------------------------------------

Tensor relu(const Tensor& input);
Tensor relu_backward(const Tensor& input, const Tensor& d_out);

Tensor sigmoid(const Tensor& input);
// takes the forward output, d/dx = y*(1-y)
Tensor sigmoid_backward(const Tensor& output, const Tensor& d_out);

Tensor add(const Tensor& a, const Tensor& b);

// ---- channel concatenation -------------------------------------------------

Tensor concat_channels(const std::vector<const Tensor*>& inputs);
// splits d_out back into per-input gradients by channel offset
std::vector<Tensor> concat_channels_backward(const std::vector<const Tensor*>& inputs,
                                             const Tensor& d_out);
// inverse of concat: slice channels [c0, c0+len) out of t
Tensor slice_channels(const Tensor& t, int c0, int len);

}  // namespace r2upp::ops
