#pragma once

#include <string>
#include <vector>

#include "r2upp/tensor.hpp"

namespace r2upp::data {

// H x W grayscale raster with values in [0,1].
struct Image {
    int h = 0;
    int w = 0;
    std::vector<double> px;

    Image() = default;
    Image(int h_, int w_) : h(h_), w(w_), px(static_cast<size_t>(h_) * w_, 0.0) {}
    double& at(int r, int c) { return px[static_cast<size_t>(r) * w + c]; }
    double at(int r, int c) const { return px[static_cast<size_t>(r) * w + c]; }
};

struct ImageSample {
    std::string id;
    Image image;
    Image mask;  // binary 0/1
};

// Thrown on unreadable or malformed input files; maps to exit code 3.
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// ---- PGM I/O (P5 binary / P2 ASCII, maxval <= 65535) -----------------------

Image load_pgm(const std::string& path);
// always emits P5 with maxval 255
void save_pgm(const Image& image, const std::string& path);

// ---- geometry --------------------------------------------------------------

enum class ResizeMethod { Nearest, Bilinear };

Image resize(const Image& image, int out_h, int out_w, ResizeMethod method);

Image crop(const Image& image, int row0, int col0, int rows, int cols);

struct PatchGrid {
    int patch_size = 0;
    int stride = 0;
    std::vector<std::pair<int, int>> anchors;  // (row, col), row-major order
    int source_h = 0;
    int source_w = 0;
    bool edge_anchored = false;
};

PatchGrid make_patch_grid(int h, int w, int patch_size, int stride, bool edge_anchored);

std::vector<Image> extract_patches(const Image& image, const PatchGrid& grid);

struct StitchResult {
    Image image;
    Image coverage;  // per-pixel count of contributing patches
};

// Per-pixel mean of all patch predictions covering the pixel; uncovered
// pixels are 0 in the image and 0 in the coverage mask.
StitchResult stitch_patches(const std::vector<Image>& patches, const PatchGrid& grid);

// ---- datasets --------------------------------------------------------------

// Random anti-aliased ellipses (foreground) on a noisy background;
// deterministic per seed.
std::vector<ImageSample> synth_dataset(uint64_t seed, int count, int size);

struct Split {
    std::vector<ImageSample> train;
    std::vector<ImageSample> val;
    std::vector<ImageSample> test;
};

// fractions (train, val, test) must sum to 1; val/test sizes are floored,
// the remainder goes to train.
Split split(const std::vector<ImageSample>& samples, double f_train, double f_val, double f_test,
            uint64_t seed);

// manifest lines: id<TAB>image_path<TAB>mask_path
std::vector<ImageSample> load_manifest(const std::string& path);
void write_dataset(const std::vector<ImageSample>& samples, const std::string& dir,
                   const std::string& manifest_path);

}  // namespace r2upp::data
