#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace r2upp {

// Dense rank-4 array in N,C,H,W row-major order. The universal value type
// of the library; everything from feature maps to bias vectors (shaped
// 1xCx1x1) lives in one of these.
struct Tensor {
    std::array<int, 4> shape{0, 0, 0, 0};
    std::vector<double> data;

    Tensor() = default;
    Tensor(int n, int c, int h, int w)
        : shape{n, c, h, w}, data(static_cast<size_t>(n) * c * h * w, 0.0) {
        if (n < 0 || c < 0 || h < 0 || w < 0)
            throw std::invalid_argument("Tensor: negative dimension");
    }

    int n() const { return shape[0]; }
    int c() const { return shape[1]; }
    int h() const { return shape[2]; }
    int w() const { return shape[3]; }

    size_t numel() const { return data.size(); }

    double& at(int in, int ic, int ih, int iw) {
        return data[((static_cast<size_t>(in) * shape[1] + ic) * shape[2] + ih) * shape[3] + iw];
    }
    double at(int in, int ic, int ih, int iw) const {
        return data[((static_cast<size_t>(in) * shape[1] + ic) * shape[2] + ih) * shape[3] + iw];
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    void fill(double v) { std::fill(data.begin(), data.end(), v); }

    static Tensor zeros_like(const Tensor& t) {
        return Tensor(t.shape[0], t.shape[1], t.shape[2], t.shape[3]);
    }
};

std::string shape_str(const Tensor& t);

// Thrown on any dimension/shape violation; maps to exit code 4 in the CLI.
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Thrown on invalid configuration values; maps to exit code 2 in the CLI.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Deterministic uniform generator with a fixed bit-level algorithm, so
// sequences are identical across platforms and library versions.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ULL) {}

    uint64_t next_u64() {
        // xorshift64* : small, fast, reproducible everywhere
        uint64_t x = state_;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        state_ = x;
        return x * 0x2545F4914F6CDD1DULL;
    }

    // uniform in [0, 1)
    double uniform() { return (next_u64() >> 11) * (1.0 / 9007199254740992.0); }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n)
    uint64_t below(uint64_t n) { return next_u64() % n; }

private:
    uint64_t state_;
};

}  // namespace r2upp
