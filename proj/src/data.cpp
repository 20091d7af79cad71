#include "r2upp/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace r2upp::data {

namespace {

// skips whitespace and '#' comment lines between header tokens
int next_header_int(std::istream& in, const std::string& path) {
    while (true) {
        int ch = in.peek();
        if (ch == EOF) throw DataError(path + ": truncated PGM header");
        if (std::isspace(ch)) {
            in.get();
            continue;
        }
        if (ch == '#') {
            std::string line;
            std::getline(in, line);
            continue;
        }
        break;
    }
    int value = 0;
    if (!(in >> value)) throw DataError(path + ": malformed PGM header");
    return value;
}

}  // namespace

Image load_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError(path + ": cannot open");
    std::string magic;
    in >> magic;
    if (magic != "P5" && magic != "P2") throw DataError(path + ": not a P5/P2 PGM");
    const int w = next_header_int(in, path);
    const int h = next_header_int(in, path);
    const int maxval = next_header_int(in, path);
    if (w <= 0 || h <= 0) throw DataError(path + ": invalid dimensions");
    if (maxval <= 0 || maxval > 65535) throw DataError(path + ": unsupported maxval");

    Image img(h, w);
    const size_t count = static_cast<size_t>(h) * w;
    if (magic == "P2") {
        for (size_t i = 0; i < count; ++i) {
            int v;
            if (!(in >> v)) throw DataError(path + ": truncated P2 payload");
            img.px[i] = static_cast<double>(v) / maxval;
        }
    } else {
        in.get();  // single whitespace after maxval
        const int bytes_per = maxval > 255 ? 2 : 1;
        std::vector<unsigned char> buf(count * bytes_per);
        in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
        if (static_cast<size_t>(in.gcount()) != buf.size())
            throw DataError(path + ": truncated P5 payload");
        for (size_t i = 0; i < count; ++i) {
            const int v = bytes_per == 1 ? buf[i] : (buf[2 * i] << 8) | buf[2 * i + 1];
            img.px[i] = static_cast<double>(v) / maxval;
        }
    }
    return img;
}

void save_pgm(const Image& image, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError(path + ": cannot write");
    out << "P5\n" << image.w << " " << image.h << "\n255\n";
    std::vector<unsigned char> buf(image.px.size());
    for (size_t i = 0; i < image.px.size(); ++i) {
        const double v = std::clamp(image.px[i], 0.0, 1.0);
        buf[i] = static_cast<unsigned char>(std::lround(v * 255.0));
    }
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!out) throw DataError(path + ": write failed");
}

Image resize(const Image& image, int out_h, int out_w, ResizeMethod method) {
    if (out_h <= 0 || out_w <= 0) throw ShapeError("resize: target dims must be positive");
    if (out_h == image.h && out_w == image.w) return image;
    Image out(out_h, out_w);
    const double sy = static_cast<double>(image.h) / out_h;
    const double sx = static_cast<double>(image.w) / out_w;
    for (int r = 0; r < out_h; ++r)
        for (int c = 0; c < out_w; ++c) {
            // half-pixel-center sampling
            const double src_y = (r + 0.5) * sy - 0.5;
            const double src_x = (c + 0.5) * sx - 0.5;
            if (method == ResizeMethod::Nearest) {
                const int iy = std::clamp(static_cast<int>(std::lround(src_y)), 0, image.h - 1);
                const int ix = std::clamp(static_cast<int>(std::lround(src_x)), 0, image.w - 1);
                out.at(r, c) = image.at(iy, ix);
            } else {
                const double fy = std::clamp(src_y, 0.0, static_cast<double>(image.h - 1));
                const double fx = std::clamp(src_x, 0.0, static_cast<double>(image.w - 1));
                const int y0 = static_cast<int>(std::floor(fy));
                const int x0 = static_cast<int>(std::floor(fx));
                const int y1 = std::min(y0 + 1, image.h - 1);
                const int x1 = std::min(x0 + 1, image.w - 1);
                const double wy = fy - y0, wx = fx - x0;
                out.at(r, c) = (1 - wy) * ((1 - wx) * image.at(y0, x0) + wx * image.at(y0, x1)) +
                               wy * ((1 - wx) * image.at(y1, x0) + wx * image.at(y1, x1));
            }
        }
    return out;
}

Image crop(const Image& image, int row0, int col0, int rows, int cols) {
    if (row0 < 0 || col0 < 0 || row0 + rows > image.h || col0 + cols > image.w)
        throw ShapeError("crop: region out of bounds");
    Image out(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) out.at(r, c) = image.at(row0 + r, col0 + c);
    return out;
}

PatchGrid make_patch_grid(int h, int w, int patch_size, int stride, bool edge_anchored) {
    if (patch_size > h || patch_size > w)
        throw ShapeError("patch size " + std::to_string(patch_size) + " exceeds image " +
                         std::to_string(h) + "x" + std::to_string(w));
    if (stride < 1) throw ShapeError("stride must be >= 1");
    auto axis_anchors = [&](int dim) {
        std::vector<int> a;
        for (int p = 0; p + patch_size <= dim; p += stride) a.push_back(p);
        if (edge_anchored && a.back() + patch_size < dim) a.push_back(dim - patch_size);
        return a;
    };
    PatchGrid grid;
    grid.patch_size = patch_size;
    grid.stride = stride;
    grid.source_h = h;
    grid.source_w = w;
    grid.edge_anchored = edge_anchored;
    const std::vector<int> rows = axis_anchors(h);
    const std::vector<int> cols = axis_anchors(w);
    for (int r : rows)
        for (int c : cols) grid.anchors.emplace_back(r, c);
    return grid;
}

std::vector<Image> extract_patches(const Image& image, const PatchGrid& grid) {
    std::vector<Image> patches;
    patches.reserve(grid.anchors.size());
    for (const auto& [r, c] : grid.anchors)
        patches.push_back(crop(image, r, c, grid.patch_size, grid.patch_size));
    return patches;
}

StitchResult stitch_patches(const std::vector<Image>& patches, const PatchGrid& grid) {
    if (patches.size() != grid.anchors.size())
        throw ShapeError("stitch: " + std::to_string(patches.size()) + " patches vs " +
                         std::to_string(grid.anchors.size()) + " anchors");
    StitchResult res;
    res.image = Image(grid.source_h, grid.source_w);
    res.coverage = Image(grid.source_h, grid.source_w);
    for (size_t i = 0; i < patches.size(); ++i) {
        const auto& [ar, ac] = grid.anchors[i];
        const Image& p = patches[i];
        if (p.h != grid.patch_size || p.w != grid.patch_size)
            throw ShapeError("stitch: patch " + std::to_string(i) + " has wrong size");
        for (int r = 0; r < p.h; ++r)
            for (int c = 0; c < p.w; ++c) {
                res.image.at(ar + r, ac + c) += p.at(r, c);
                res.coverage.at(ar + r, ac + c) += 1.0;
            }
    }
    for (size_t i = 0; i < res.image.px.size(); ++i)
        if (res.coverage.px[i] > 0.0) res.image.px[i] /= res.coverage.px[i];
    return res;
}

std::vector<ImageSample> synth_dataset(uint64_t seed, int count, int size) {
    if (size % 16 != 0) throw ConfigError("synth_dataset: size must be divisible by 16");
    std::vector<ImageSample> samples;
    Rng rng(seed);
    for (int s = 0; s < count; ++s) {
        ImageSample sample;
        sample.id = "synth_" + std::to_string(seed) + "_" + std::to_string(s);
        sample.image = Image(size, size);
        sample.mask = Image(size, size);

        const double background = rng.uniform(0.10, 0.30);
        for (double& v : sample.image.px) v = background + rng.uniform(-0.05, 0.05);

        const int n_ellipses = 1 + static_cast<int>(rng.below(3));
        for (int e = 0; e < n_ellipses; ++e) {
            const double cy = rng.uniform(0.25, 0.75) * size;
            const double cx = rng.uniform(0.25, 0.75) * size;
            const double ry = rng.uniform(0.10, 0.22) * size;
            const double rx = rng.uniform(0.10, 0.22) * size;
            const double angle = rng.uniform(0.0, 3.14159265358979323846);
            const double fg = rng.uniform(0.70, 0.95);
            const double ca = std::cos(angle), sa = std::sin(angle);
            for (int r = 0; r < size; ++r)
                for (int c = 0; c < size; ++c) {
                    const double dy = r - cy, dx = c - cx;
                    const double u = (ca * dx + sa * dy) / rx;
                    const double v = (-sa * dx + ca * dy) / ry;
                    const double d = std::sqrt(u * u + v * v);
                    // ~1px anti-aliasing band around the ellipse boundary
                    const double band = 1.0 / std::min(rx, ry);
                    const double alpha = std::clamp((1.0 - d) / band + 0.5, 0.0, 1.0);
                    if (alpha > 0.0) {
                        double& px = sample.image.at(r, c);
                        px = (1.0 - alpha) * px + alpha * fg;
                        if (alpha >= 0.5) sample.mask.at(r, c) = 1.0;
                    }
                }
        }
        for (double& v : sample.image.px) v = std::clamp(v, 0.0, 1.0);
        samples.push_back(std::move(sample));
    }
    return samples;
}

Split split(const std::vector<ImageSample>& samples, double f_train, double f_val, double f_test,
            uint64_t seed) {
    if (samples.empty()) throw DataError("split: empty sample list");
    if (std::abs(f_train + f_val + f_test - 1.0) > 1e-9)
        throw ConfigError("split: fractions must sum to 1");
    std::vector<size_t> idx(samples.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    Rng rng(seed);
    for (size_t i = idx.size(); i > 1; --i)
        std::swap(idx[i - 1], idx[rng.below(i)]);

    const size_t n = samples.size();
    const size_t n_val = static_cast<size_t>(std::floor(f_val * n));
    const size_t n_test = static_cast<size_t>(std::floor(f_test * n));
    Split out;
    size_t k = 0;
    for (; k < n - n_val - n_test; ++k) out.train.push_back(samples[idx[k]]);
    for (; k < n - n_test; ++k) out.val.push_back(samples[idx[k]]);
    for (; k < n; ++k) out.test.push_back(samples[idx[k]]);
    return out;
}

std::vector<ImageSample> load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError(path + ": cannot open manifest");
    std::vector<ImageSample> samples;
    std::string line;
    const std::filesystem::path base = std::filesystem::path(path).parent_path();
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string id, img_path, mask_path;
        if (!std::getline(ss, id, '\t') || !std::getline(ss, img_path, '\t') ||
            !std::getline(ss, mask_path, '\t'))
            throw DataError(path + ": malformed manifest line: " + line);
        auto resolve = [&](const std::string& p) {
            std::filesystem::path fp(p);
            return fp.is_absolute() ? fp.string() : (base / fp).string();
        };
        ImageSample s;
        s.id = id;
        s.image = load_pgm(resolve(img_path));
        s.mask = load_pgm(resolve(mask_path));
        if (s.image.h != s.mask.h || s.image.w != s.mask.w)
            throw DataError(path + ": image/mask size mismatch for id " + id);
        for (double& v : s.mask.px) v = v >= 0.5 ? 1.0 : 0.0;
        samples.push_back(std::move(s));
    }
    if (samples.empty()) throw DataError(path + ": empty manifest");
    return samples;
}

void write_dataset(const std::vector<ImageSample>& samples, const std::string& dir,
                   const std::string& manifest_path) {
    std::filesystem::create_directories(dir);
    std::ofstream manifest(manifest_path);
    if (!manifest) throw DataError(manifest_path + ": cannot write manifest");
    for (const ImageSample& s : samples) {
        const std::string img_path = dir + "/" + s.id + ".pgm";
        const std::string mask_path = dir + "/" + s.id + "_mask.pgm";
        save_pgm(s.image, img_path);
        Image mask255 = s.mask;  // mask pixels stored as 0 or 255
        save_pgm(mask255, mask_path);
        manifest << s.id << "\t" << img_path << "\t" << mask_path << "\n";
    }
}

}  // namespace r2upp::data
