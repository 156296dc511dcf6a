#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <zlib.h>

#include "hqnn/errors.hpp"
#include "hqnn/random.hpp"

namespace hqnn {

struct LabeledDataset {
    std::vector<std::vector<double>> features; // flat vectors; images are row-major H x W
    std::vector<int> labels;
    int height = 0; // 0 for non-image data
    int width = 0;
    int n_classes = 0;
    std::vector<std::size_t> train;
    std::vector<std::size_t> validation;
    std::string source;
    std::uint64_t seed = 0;

    [[nodiscard]] std::size_t size() const noexcept { return labels.size(); }

    [[nodiscard]] std::vector<std::vector<double>> gather_features(std::span<const std::size_t> idx) const {
        std::vector<std::vector<double>> out;
        out.reserve(idx.size());
        for (auto i : idx) out.push_back(features.at(i));
        return out;
    }

    [[nodiscard]] std::vector<int> gather_labels(std::span<const std::size_t> idx) const {
        std::vector<int> out;
        out.reserve(idx.size());
        for (auto i : idx) out.push_back(labels.at(i));
        return out;
    }
};

namespace detail {

// Per-class shuffled split; train receives round(frac * class_count) samples.
inline void stratified_split(LabeledDataset& ds, double train_fraction, Rng& rng) {
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < ds.labels.size(); ++i) by_class[ds.labels[i]].push_back(i);
    ds.train.clear();
    ds.validation.clear();
    for (auto& [label, idx] : by_class) {
        std::shuffle(idx.begin(), idx.end(), rng);
        const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(idx.size())));
        ds.train.insert(ds.train.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
        ds.validation.insert(ds.validation.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
    }
    std::sort(ds.train.begin(), ds.train.end());
    std::sort(ds.validation.begin(), ds.validation.end());
}

} // namespace detail

// Two interleaving half-moons with Gaussian noise, balanced classes, 70/30
// stratified split.
inline LabeledDataset generate_synthetic(std::size_t n_samples = 500, double noise = 0.15, std::uint64_t seed = 0) {
    if (n_samples < 10) throw SizeError("synthetic dataset needs at least 10 samples");
    const std::size_t n_outer = n_samples / 2 + n_samples % 2;
    const std::size_t n_inner = n_samples / 2;
    LabeledDataset ds;
    ds.n_classes = 2;
    ds.source = "synthetic:moons";
    ds.seed = seed;
    Rng rng(seed);
    std::normal_distribution<double> gauss(0.0, noise > 0.0 ? noise : 1.0);
    auto jitter = [&](double v) { return noise > 0.0 ? v + gauss(rng) : v; };
    auto t_at = [](std::size_t i, std::size_t count) {
        return count > 1 ? std::numbers::pi * static_cast<double>(i) / static_cast<double>(count - 1) : 0.0;
    };
    for (std::size_t i = 0; i < n_outer; ++i) {
        const double t = t_at(i, n_outer);
        const double x = jitter(std::cos(t));
        const double y = jitter(std::sin(t));
        ds.features.push_back({x, y});
        ds.labels.push_back(0);
    }
    for (std::size_t i = 0; i < n_inner; ++i) {
        const double t = t_at(i, n_inner);
        const double x = jitter(1.0 - std::cos(t));
        const double y = jitter(0.5 - std::sin(t));
        ds.features.push_back({x, y});
        ds.labels.push_back(1);
    }
    detail::stratified_split(ds, 0.7, rng);
    return ds;
}

namespace detail {

inline std::vector<unsigned char> read_maybe_gzip(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw MissingFileError("file not found: " + path.string());
    gzFile f = gzopen(path.string().c_str(), "rb"); // transparently reads uncompressed files as well
    if (!f) throw MissingFileError("cannot open: " + path.string());
    std::vector<unsigned char> bytes;
    unsigned char buf[1 << 16];
    int got = 0;
    while ((got = gzread(f, buf, sizeof buf)) > 0) bytes.insert(bytes.end(), buf, buf + got);
    const bool failed = got < 0;
    gzclose(f);
    if (failed) throw TruncatedFileError("corrupt or truncated compressed stream: " + path.string());
    return bytes;
}

inline std::uint32_t read_be32(const std::vector<unsigned char>& b, std::size_t at) {
    return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) | (std::uint32_t{b[at + 2]} << 8) |
           std::uint32_t{b[at + 3]};
}

} // namespace detail

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

// IDX image/label pair (raw or gzip). Pixels are scaled by 1/255. Unsplit.
inline LabeledDataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
    const auto img = detail::read_maybe_gzip(images_path);
    const auto lab = detail::read_maybe_gzip(labels_path);
    if (img.size() < 16) throw TruncatedFileError("image file shorter than its header: " + images_path.string());
    if (lab.size() < 8) throw TruncatedFileError("label file shorter than its header: " + labels_path.string());
    if (detail::read_be32(img, 0) != kIdxImageMagic) {
        throw BadMagicError("image file magic is not 0x00000803: " + images_path.string());
    }
    if (detail::read_be32(lab, 0) != kIdxLabelMagic) {
        throw BadMagicError("label file magic is not 0x00000801: " + labels_path.string());
    }
    const std::size_t count = detail::read_be32(img, 4);
    const std::size_t rows = detail::read_be32(img, 8);
    const std::size_t cols = detail::read_be32(img, 12);
    const std::size_t label_count = detail::read_be32(lab, 4);
    if (count != label_count) {
        throw CountMismatchError("image count " + std::to_string(count) + " != label count " +
                                 std::to_string(label_count));
    }
    if (img.size() < 16 + count * rows * cols) throw TruncatedFileError("image payload truncated");
    if (lab.size() < 8 + count) throw TruncatedFileError("label payload truncated");
    LabeledDataset ds;
    ds.height = static_cast<int>(rows);
    ds.width = static_cast<int>(cols);
    ds.source = images_path.filename().string();
    ds.features.resize(count);
    ds.labels.resize(count);
    int max_label = -1;
    for (std::size_t i = 0; i < count; ++i) {
        auto& f = ds.features[i];
        f.resize(rows * cols);
        const unsigned char* px = img.data() + 16 + i * rows * cols;
        for (std::size_t k = 0; k < f.size(); ++k) f[k] = static_cast<double>(px[k]) / 255.0;
        ds.labels[i] = lab[8 + i];
        max_label = std::max(max_label, ds.labels[i]);
    }
    ds.n_classes = max_label + 1;
    return ds;
}

// Classes 0..classes-1 with exactly per_class samples each, 80/20 stratified split.
inline LabeledDataset stratified_subset(const LabeledDataset& src, int classes = 10, std::size_t per_class = 400,
                                        std::uint64_t seed = 0) {
    Rng rng(seed);
    LabeledDataset ds;
    ds.height = src.height;
    ds.width = src.width;
    ds.n_classes = classes;
    ds.source = src.source;
    ds.seed = seed;
    for (int c = 0; c < classes; ++c) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < src.labels.size(); ++i) {
            if (src.labels[i] == c) idx.push_back(i);
        }
        if (idx.size() < per_class) {
            throw InsufficientDataError("class " + std::to_string(c) + " has " + std::to_string(idx.size()) +
                                        " samples, " + std::to_string(per_class) + " requested");
        }
        std::shuffle(idx.begin(), idx.end(), rng);
        for (std::size_t k = 0; k < per_class; ++k) {
            ds.features.push_back(src.features[idx[k]]);
            ds.labels.push_back(c);
        }
    }
    detail::stratified_split(ds, 0.8, rng);
    return ds;
}

// Center-crop to the largest multiple of `target`, then box-average down to
// target x target. Labels and splits are preserved.
inline LabeledDataset downscale(const LabeledDataset& src, int target) {
    if (src.height <= 0 || src.width <= 0) throw ShapeError("downscale requires image data");
    if (target < 1 || target > src.height || target > src.width) throw SizeError("invalid downscale target");
    const int fy = src.height / target, fx = src.width / target;
    const int oy = (src.height - fy * target) / 2, ox = (src.width - fx * target) / 2;
    LabeledDataset ds = src;
    ds.height = ds.width = target;
    for (auto& f : ds.features) {
        std::vector<double> out(static_cast<std::size_t>(target) * target, 0.0);
        for (int y = 0; y < target; ++y) {
            for (int x = 0; x < target; ++x) {
                double s = 0.0;
                for (int dy = 0; dy < fy; ++dy)
                    for (int dx = 0; dx < fx; ++dx) s += f[(oy + y * fy + dy) * src.width + ox + x * fx + dx];
                out[y * target + x] = s / (fy * fx);
            }
        }
        f = std::move(out);
    }
    return ds;
}

inline nlohmann::json manifest_json(const LabeledDataset& ds) {
    std::map<std::string, std::size_t> per_class;
    for (int l : ds.labels) ++per_class[std::to_string(l)];
    return nlohmann::json{{"source", ds.source},
                          {"seed", ds.seed},
                          {"counts_per_class", per_class},
                          {"split_sizes", {{"train", ds.train.size()}, {"validation", ds.validation.size()}}},
                          {"image_shape", {ds.height, ds.width}}};
}

// Writers used by fixtures and tests; always uncompressed.
inline void write_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                      const std::vector<std::vector<unsigned char>>& images, const std::vector<unsigned char>& labels,
                      int rows, int cols) {
    auto be32 = [](std::vector<unsigned char>& out, std::uint32_t v) {
        for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<unsigned char>((v >> s) & 0xff));
    };
    std::vector<unsigned char> img, lab;
    be32(img, kIdxImageMagic);
    be32(img, static_cast<std::uint32_t>(images.size()));
    be32(img, static_cast<std::uint32_t>(rows));
    be32(img, static_cast<std::uint32_t>(cols));
    for (const auto& im : images) img.insert(img.end(), im.begin(), im.end());
    be32(lab, kIdxLabelMagic);
    be32(lab, static_cast<std::uint32_t>(labels.size()));
    lab.insert(lab.end(), labels.begin(), labels.end());
    auto dump = [](const std::filesystem::path& p, const std::vector<unsigned char>& b) {
        std::FILE* f = std::fopen(p.string().c_str(), "wb");
        if (!f) throw DataError("cannot write " + p.string());
        std::fwrite(b.data(), 1, b.size(), f);
        std::fclose(f);
    };
    dump(images_path, img);
    dump(labels_path, lab);
}

// Procedural 28x28 stroke glyphs, one shape family per class (up to 10),
// with random offset, thickness and pixel noise. Stands in for handwritten
// digits where no IDX corpus is available locally.
inline std::pair<std::vector<std::vector<unsigned char>>, std::vector<unsigned char>>
generate_glyph_images(int classes, int per_class, std::uint64_t seed, int size = 28) {
    if (classes < 1 || classes > 10) throw SizeError("glyph generator supports 1..10 classes");
    Rng rng(seed);
    std::vector<std::vector<unsigned char>> images;
    std::vector<unsigned char> labels;
    const double c = (size - 1) / 2.0;
    for (int k = 0; k < per_class; ++k) {
        for (int label = 0; label < classes; ++label) {
            const double sx = uniform_real(rng, -2.0, 2.0), sy = uniform_real(rng, -2.0, 2.0);
            const double w = uniform_real(rng, 1.2, 2.2);
            const double r = size * uniform_real(rng, 0.25, 0.33);
            std::vector<unsigned char> im(static_cast<std::size_t>(size) * size);
            for (int y = 0; y < size; ++y) {
                for (int x = 0; x < size; ++x) {
                    const double u = x - c - sx, v = y - c - sy;
                    const double rho = std::hypot(u, v);
                    double d = 1e9; // distance to the glyph stroke
                    switch (label) {
                    case 0: d = std::abs(rho - r); break;
                    case 1: d = std::abs(u) + std::max(0.0, std::abs(v) - r); break;
                    case 2: d = std::abs(v) + std::max(0.0, std::abs(u) - r); break;
                    case 3: d = std::abs(u - v) / std::sqrt(2.0) + std::max(0.0, rho - r); break;
                    case 4: d = std::abs(u + v) / std::sqrt(2.0) + std::max(0.0, rho - r); break;
                    case 5: d = std::min(std::abs(u), std::abs(v)) + std::max(0.0, std::max(std::abs(u), std::abs(v)) - r); break;
                    case 6: d = std::abs(std::max(std::abs(u), std::abs(v)) - r); break;
                    case 7: d = std::min(std::abs(v + r) + std::max(0.0, std::abs(u) - r),
                                         std::abs(u - v - r * 0.0) / std::sqrt(2.0) + std::max(0.0, rho - r)); break;
                    case 8: d = std::min(std::hypot(u, v + r / 2) - r / 2.5, std::hypot(u, v - r / 2) - r / 2.5); d = std::abs(d); break;
                    case 9: d = std::min(std::abs(std::hypot(u, v + r / 2) - r / 2), std::abs(u - r / 2) + std::max(0.0, std::abs(v) - r)); break;
                    default: break;
                    }
                    double val = std::exp(-(d * d) / (2.0 * w * w)) + uniform_real(rng, -0.08, 0.08);
                    val = std::clamp(val, 0.0, 1.0);
                    im[static_cast<std::size_t>(y) * size + x] = static_cast<unsigned char>(std::lround(val * 255.0));
                }
            }
            images.push_back(std::move(im));
            labels.push_back(static_cast<unsigned char>(label));
        }
    }
    return {std::move(images), std::move(labels)};
}

} // namespace hqnn
