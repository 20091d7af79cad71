#include "r2upp/ops.hpp"

#include <cblas.h>

#include <cmath>
#include <cstring>

namespace r2upp {

std::string shape_str(const Tensor& t) {
    return "[" + std::to_string(t.shape[0]) + "," + std::to_string(t.shape[1]) + "," +
           std::to_string(t.shape[2]) + "," + std::to_string(t.shape[3]) + "]";
}

namespace ops {

namespace {

int conv_out_dim(int in, int k, int stride, int padding) {
    return (in + 2 * padding - k) / stride + 1;
}

// Unpacks one batch item into [Cin*kh*kw, OH*OW] column-major-over-output form.
void im2col(const Tensor& input, int n, int kh, int kw, int stride, int padding, int oh, int ow,
            double* col) {
    const int C = input.c(), H = input.h(), W = input.w();
    size_t idx = 0;
    for (int c = 0; c < C; ++c) {
        for (int ki = 0; ki < kh; ++ki) {
            for (int kj = 0; kj < kw; ++kj) {
                for (int oi = 0; oi < oh; ++oi) {
                    const int ih = oi * stride - padding + ki;
                    if (ih < 0 || ih >= H) {
                        std::memset(col + idx, 0, sizeof(double) * ow);
                        idx += ow;
                        continue;
                    }
                    for (int oj = 0; oj < ow; ++oj) {
                        const int iw = oj * stride - padding + kj;
                        col[idx++] = (iw >= 0 && iw < W) ? input.at(n, c, ih, iw) : 0.0;
                    }
                }
            }
        }
    }
}

void col2im_add(const double* col, int C, int H, int W, int kh, int kw, int stride, int padding,
                int oh, int ow, Tensor& out, int n) {
    size_t idx = 0;
    for (int c = 0; c < C; ++c) {
        for (int ki = 0; ki < kh; ++ki) {
            for (int kj = 0; kj < kw; ++kj) {
                for (int oi = 0; oi < oh; ++oi) {
                    const int ih = oi * stride - padding + ki;
                    if (ih < 0 || ih >= H) {
                        idx += ow;
                        continue;
                    }
                    for (int oj = 0; oj < ow; ++oj) {
                        const int iw = oj * stride - padding + kj;
                        if (iw >= 0 && iw < W) out.at(n, c, ih, iw) += col[idx];
                        ++idx;
                    }
                }
            }
        }
    }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, const std::vector<double>& bias,
              int stride, int padding) {
    const int N = input.n(), Cin = input.c(), H = input.h(), W = input.w();
    const int Cout = weight.n(), kh = weight.h(), kw = weight.w();
    if (weight.c() != Cin)
        throw ShapeError("conv2d: input channels " + shape_str(input) + " do not match weight " +
                         shape_str(weight));
    if (stride < 1 || padding < 0) throw ShapeError("conv2d: invalid stride/padding");
    if (!bias.empty() && static_cast<int>(bias.size()) != Cout)
        throw ShapeError("conv2d: bias length mismatch");
    const int OH = conv_out_dim(H, kh, stride, padding);
    const int OW = conv_out_dim(W, kw, stride, padding);
    if (OH <= 0 || OW <= 0)
        throw ShapeError("conv2d: zero-sized output for input " + shape_str(input) + " kernel " +
                         shape_str(weight));

    Tensor out(N, Cout, OH, OW);
    const int K = Cin * kh * kw;
    std::vector<double> col(static_cast<size_t>(K) * OH * OW);
    for (int n = 0; n < N; ++n) {
        im2col(input, n, kh, kw, stride, padding, OH, OW, col.data());
        // out[n] (Cout x OHW) = weight (Cout x K) * col (K x OHW)
        cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, Cout, OH * OW, K, 1.0,
                    weight.data.data(), K, col.data(), OH * OW, 0.0,
                    out.data.data() + static_cast<size_t>(n) * Cout * OH * OW, OH * OW);
    }
    if (!bias.empty()) {
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < Cout; ++c) {
                double* p = out.data.data() + ((static_cast<size_t>(n) * Cout + c) * OH) * OW;
                const double b = bias[c];
                for (int i = 0; i < OH * OW; ++i) p[i] += b;
            }
    }
    return out;
}

Conv2dGrads conv2d_backward(const Tensor& input, const Tensor& weight, const Tensor& d_out,
                            int stride, int padding) {
    const int N = input.n(), Cin = input.c(), H = input.h(), W = input.w();
    const int Cout = weight.n(), kh = weight.h(), kw = weight.w();
    const int OH = d_out.h(), OW = d_out.w();
    const int K = Cin * kh * kw;

    Conv2dGrads g;
    g.d_input = Tensor(N, Cin, H, W);
    g.d_weight = Tensor(Cout, Cin, kh, kw);
    g.d_bias.assign(Cout, 0.0);

    std::vector<double> col(static_cast<size_t>(K) * OH * OW);
    std::vector<double> dcol(static_cast<size_t>(K) * OH * OW);
    for (int n = 0; n < N; ++n) {
        const double* dout_n = d_out.data.data() + static_cast<size_t>(n) * Cout * OH * OW;
        im2col(input, n, kh, kw, stride, padding, OH, OW, col.data());
        // dW += dOut[n] (Cout x OHW) * col^T (OHW x K)
        cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, Cout, K, OH * OW, 1.0, dout_n, OH * OW,
                    col.data(), OH * OW, 1.0, g.d_weight.data.data(), K);
        // dcol = W^T (K x Cout) * dOut[n] (Cout x OHW)
        cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, K, OH * OW, Cout, 1.0,
                    weight.data.data(), K, dout_n, OH * OW, 0.0, dcol.data(), OH * OW);
        col2im_add(dcol.data(), Cin, H, W, kh, kw, stride, padding, OH, OW, g.d_input, n);
        for (int c = 0; c < Cout; ++c) {
            const double* p = dout_n + static_cast<size_t>(c) * OH * OW;
            double s = 0.0;
            for (int i = 0; i < OH * OW; ++i) s += p[i];
            g.d_bias[c] += s;
        }
    }
    return g;
}

MaxpoolResult maxpool_2x2(const Tensor& input) {
    const int N = input.n(), C = input.c(), H = input.h(), W = input.w();
    if (H % 2 != 0 || W % 2 != 0)
        throw ShapeError("maxpool_2x2: odd spatial dims in " + shape_str(input));
    MaxpoolResult r;
    r.output = Tensor(N, C, H / 2, W / 2);
    r.argmax.resize(r.output.numel());
    size_t oidx = 0;
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c)
            for (int oh = 0; oh < H / 2; ++oh)
                for (int ow = 0; ow < W / 2; ++ow) {
                    double best = -1e300;
                    size_t best_idx = 0;
                    // ties go to the first cell in row-major scan order
                    for (int di = 0; di < 2; ++di)
                        for (int dj = 0; dj < 2; ++dj) {
                            const int ih = 2 * oh + di, iw = 2 * ow + dj;
                            const size_t flat =
                                ((static_cast<size_t>(n) * C + c) * H + ih) * W + iw;
                            const double v = input.data[flat];
                            if (v > best) {
                                best = v;
                                best_idx = flat;
                            }
                        }
                    r.output.data[oidx] = best;
                    r.argmax[oidx] = best_idx;
                    ++oidx;
                }
    return r;
}

Tensor maxpool_2x2_backward(const Tensor& input, const MaxpoolResult& fwd, const Tensor& d_out) {
    Tensor d_in = Tensor::zeros_like(input);
    for (size_t i = 0; i < fwd.argmax.size(); ++i) d_in.data[fwd.argmax[i]] += d_out.data[i];
    return d_in;
}

Tensor upsample_2x(const Tensor& input, const Tensor& weight) {
    const int N = input.n(), Cin = input.c(), H = input.h(), W = input.w();
    const int Cout = weight.c();
    if (weight.n() != Cin)
        throw ShapeError("upsample_2x: input channels " + shape_str(input) +
                         " do not match weight " + shape_str(weight));
    Tensor out(N, Cout, 2 * H, 2 * W);
    for (int n = 0; n < N; ++n)
        for (int ci = 0; ci < Cin; ++ci)
            for (int co = 0; co < Cout; ++co) {
                const double w00 = weight.at(ci, co, 0, 0), w01 = weight.at(ci, co, 0, 1);
                const double w10 = weight.at(ci, co, 1, 0), w11 = weight.at(ci, co, 1, 1);
                for (int h = 0; h < H; ++h)
                    for (int w = 0; w < W; ++w) {
                        const double v = input.at(n, ci, h, w);
                        out.at(n, co, 2 * h, 2 * w) += v * w00;
                        out.at(n, co, 2 * h, 2 * w + 1) += v * w01;
                        out.at(n, co, 2 * h + 1, 2 * w) += v * w10;
                        out.at(n, co, 2 * h + 1, 2 * w + 1) += v * w11;
                    }
            }
    return out;
}

Upsample2xGrads upsample_2x_backward(const Tensor& input, const Tensor& weight,
                                     const Tensor& d_out) {
    const int N = input.n(), Cin = input.c(), H = input.h(), W = input.w();
    const int Cout = weight.c();
    Upsample2xGrads g;
    g.d_input = Tensor(N, Cin, H, W);
    g.d_weight = Tensor(Cin, Cout, 2, 2);
    for (int n = 0; n < N; ++n)
        for (int ci = 0; ci < Cin; ++ci)
            for (int co = 0; co < Cout; ++co) {
                const double w00 = weight.at(ci, co, 0, 0), w01 = weight.at(ci, co, 0, 1);
                const double w10 = weight.at(ci, co, 1, 0), w11 = weight.at(ci, co, 1, 1);
                double g00 = 0, g01 = 0, g10 = 0, g11 = 0;
                for (int h = 0; h < H; ++h)
                    for (int w = 0; w < W; ++w) {
                        const double d00 = d_out.at(n, co, 2 * h, 2 * w);
                        const double d01 = d_out.at(n, co, 2 * h, 2 * w + 1);
                        const double d10 = d_out.at(n, co, 2 * h + 1, 2 * w);
                        const double d11 = d_out.at(n, co, 2 * h + 1, 2 * w + 1);
                        g.d_input.at(n, ci, h, w) += d00 * w00 + d01 * w01 + d10 * w10 + d11 * w11;
                        const double v = input.at(n, ci, h, w);
                        g00 += v * d00;
                        g01 += v * d01;
                        g10 += v * d10;
                        g11 += v * d11;
                    }
                g.d_weight.at(ci, co, 0, 0) += g00;
                g.d_weight.at(ci, co, 0, 1) += g01;
                g.d_weight.at(ci, co, 1, 0) += g10;
                g.d_weight.at(ci, co, 1, 1) += g11;
            }
    return g;
}

Tensor batchnorm_train(const Tensor& input, const std::vector<double>& gamma,
                       const std::vector<double>& beta, std::vector<double>& running_mean,
                       std::vector<double>& running_var, BatchnormCache& cache) {
    const int N = input.n(), C = input.c(), H = input.h(), W = input.w();
    if (static_cast<int>(gamma.size()) != C || static_cast<int>(beta.size()) != C)
        throw ShapeError("batchnorm: gamma/beta length does not match channels");
    const double count = static_cast<double>(N) * H * W;
    cache.mean.assign(C, 0.0);
    cache.inv_std.assign(C, 0.0);
    cache.x_hat = Tensor(N, C, H, W);
    Tensor out(N, C, H, W);
    for (int c = 0; c < C; ++c) {
        double sum = 0.0, sq = 0.0;
        for (int n = 0; n < N; ++n)
            for (int h = 0; h < H; ++h)
                for (int w = 0; w < W; ++w) {
                    const double v = input.at(n, c, h, w);
                    sum += v;
                    sq += v * v;
                }
        const double mean = sum / count;
        const double var = sq / count - mean * mean;
        const double inv_std = 1.0 / std::sqrt(var + kBnEps);
        cache.mean[c] = mean;
        cache.inv_std[c] = inv_std;
        running_mean[c] = kBnMomentum * running_mean[c] + (1.0 - kBnMomentum) * mean;
        running_var[c] = kBnMomentum * running_var[c] + (1.0 - kBnMomentum) * var;
        for (int n = 0; n < N; ++n)
            for (int h = 0; h < H; ++h)
                for (int w = 0; w < W; ++w) {
                    const double xh = (input.at(n, c, h, w) - mean) * inv_std;
                    cache.x_hat.at(n, c, h, w) = xh;
                    out.at(n, c, h, w) = gamma[c] * xh + beta[c];
                }
    }
    return out;
}

Tensor batchnorm_infer(const Tensor& input, const std::vector<double>& gamma,
                       const std::vector<double>& beta, const std::vector<double>& running_mean,
                       const std::vector<double>& running_var) {
    const int N = input.n(), C = input.c(), H = input.h(), W = input.w();
    if (static_cast<int>(gamma.size()) != C || static_cast<int>(beta.size()) != C)
        throw ShapeError("batchnorm: gamma/beta length does not match channels");
    Tensor out(N, C, H, W);
    for (int c = 0; c < C; ++c) {
        const double inv_std = 1.0 / std::sqrt(running_var[c] + kBnEps);
        const double m = running_mean[c], g = gamma[c], b = beta[c];
        for (int n = 0; n < N; ++n)
            for (int h = 0; h < H; ++h)
                for (int w = 0; w < W; ++w)
                    out.at(n, c, h, w) = g * (input.at(n, c, h, w) - m) * inv_std + b;
    }
    return out;
}

BatchnormGrads batchnorm_train_backward(const Tensor& input, const std::vector<double>& gamma,
                                        const BatchnormCache& cache, const Tensor& d_out) {
    const int N = input.n(), C = input.c(), H = input.h(), W = input.w();
    const double count = static_cast<double>(N) * H * W;
    BatchnormGrads g;
    g.d_input = Tensor(N, C, H, W);
    g.d_gamma.assign(C, 0.0);
    g.d_beta.assign(C, 0.0);
    for (int c = 0; c < C; ++c) {
        double sum_dy = 0.0, sum_dy_xh = 0.0;
        for (int n = 0; n < N; ++n)
            for (int h = 0; h < H; ++h)
                for (int w = 0; w < W; ++w) {
                    const double dy = d_out.at(n, c, h, w);
                    sum_dy += dy;
                    sum_dy_xh += dy * cache.x_hat.at(n, c, h, w);
                }
        g.d_beta[c] = sum_dy;
        g.d_gamma[c] = sum_dy_xh;
        const double scale = gamma[c] * cache.inv_std[c];
        const double mean_dy = sum_dy / count;
        const double mean_dy_xh = sum_dy_xh / count;
        for (int n = 0; n < N; ++n)
            for (int h = 0; h < H; ++h)
                for (int w = 0; w < W; ++w) {
                    const double dy = d_out.at(n, c, h, w);
                    g.d_input.at(n, c, h, w) =
                        scale * (dy - mean_dy - cache.x_hat.at(n, c, h, w) * mean_dy_xh);
                }
    }
    return g;
}

Tensor batchnorm_infer_backward(const std::vector<double>& gamma,
                                const std::vector<double>& running_var, const Tensor& d_out) {
    const int C = d_out.c();
    Tensor d_in = Tensor::zeros_like(d_out);
    for (int c = 0; c < C; ++c) {
        const double scale = gamma[c] / std::sqrt(running_var[c] + kBnEps);
        for (int n = 0; n < d_out.n(); ++n)
            for (int h = 0; h < d_out.h(); ++h)
                for (int w = 0; w < d_out.w(); ++w)
                    d_in.at(n, c, h, w) = scale * d_out.at(n, c, h, w);
    }
    return d_in;
}

Tensor relu(const Tensor& input) {
    Tensor out = input;
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    return out;
}

Tensor relu_backward(const Tensor& input, const Tensor& d_out) {
    Tensor d_in = Tensor::zeros_like(input);
    for (size_t i = 0; i < input.data.size(); ++i)
        d_in.data[i] = input.data[i] > 0.0 ? d_out.data[i] : 0.0;
    return d_in;
}

Tensor sigmoid(const Tensor& input) {
    Tensor out = input;
    for (double& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
    return out;
}

Tensor sigmoid_backward(const Tensor& output, const Tensor& d_out) {
    Tensor d_in = Tensor::zeros_like(output);
    for (size_t i = 0; i < output.data.size(); ++i)
        d_in.data[i] = d_out.data[i] * output.data[i] * (1.0 - output.data[i]);
    return d_in;
}

Tensor add(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b))
        throw ShapeError("add: shape mismatch " + shape_str(a) + " vs " + shape_str(b));
    Tensor out = a;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
    return out;
}

Tensor concat_channels(const std::vector<const Tensor*>& inputs) {
    if (inputs.empty()) throw ShapeError("concat_channels: empty input list");
    const Tensor& first = *inputs[0];
    int total_c = 0;
    for (size_t i = 0; i < inputs.size(); ++i) {
        const Tensor& t = *inputs[i];
        if (t.n() != first.n() || t.h() != first.h() || t.w() != first.w())
            throw ShapeError("concat_channels: input " + std::to_string(i) + " has shape " +
                             shape_str(t) + ", expected spatial dims of " + shape_str(first));
        total_c += t.c();
    }
    Tensor out(first.n(), total_c, first.h(), first.w());
    const size_t plane = static_cast<size_t>(first.h()) * first.w();
    for (int n = 0; n < first.n(); ++n) {
        size_t off = (static_cast<size_t>(n) * total_c) * plane;
        for (const Tensor* t : inputs) {
            const size_t chunk = static_cast<size_t>(t->c()) * plane;
            std::memcpy(out.data.data() + off,
                        t->data.data() + static_cast<size_t>(n) * chunk, chunk * sizeof(double));
            off += chunk;
        }
    }
    return out;
}

std::vector<Tensor> concat_channels_backward(const std::vector<const Tensor*>& inputs,
                                             const Tensor& d_out) {
    std::vector<Tensor> grads;
    grads.reserve(inputs.size());
    int c0 = 0;
    for (const Tensor* t : inputs) {
        grads.push_back(slice_channels(d_out, c0, t->c()));
        c0 += t->c();
    }
    return grads;
}

Tensor slice_channels(const Tensor& t, int c0, int len) {
    if (c0 < 0 || len < 0 || c0 + len > t.c())
        throw ShapeError("slice_channels: range out of bounds in " + shape_str(t));
    Tensor out(t.n(), len, t.h(), t.w());
    const size_t plane = static_cast<size_t>(t.h()) * t.w();
    for (int n = 0; n < t.n(); ++n)
        std::memcpy(out.data.data() + static_cast<size_t>(n) * len * plane,
                    t.data.data() + (static_cast<size_t>(n) * t.c() + c0) * plane,
                    static_cast<size_t>(len) * plane * sizeof(double));
    return out;
}

}  // namespace ops
}  // namespace r2upp
