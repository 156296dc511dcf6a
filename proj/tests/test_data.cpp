#include <gtest/gtest.h>

#include <zlib.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "hqnn/data.hpp"

using namespace hqnn;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("hqnn_data_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
                                            "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

void write_bytes(const fs::path& p, const std::vector<unsigned char>& b) {
    std::ofstream f(p, std::ios::binary);
    f.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

void write_gz(const fs::path& p, const std::vector<unsigned char>& b) {
    gzFile f = gzopen(p.string().c_str(), "wb");
    gzwrite(f, b.data(), static_cast<unsigned>(b.size()));
    gzclose(f);
}

// Two 2x3 images and their labels, authored byte by byte.
const std::vector<unsigned char> kImages{0x00, 0x00, 0x08, 0x03, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 3,
                                         0,    51,   102,  153,  204, 255,
                                         255,  0,    255,  0,    255, 0};
const std::vector<unsigned char> kLabels{0x00, 0x00, 0x08, 0x01, 0, 0, 0, 2, 7, 3};

void expect_partition(const LabeledDataset& ds) {
    std::vector<std::size_t> all(ds.train);
    all.insert(all.end(), ds.validation.begin(), ds.validation.end());
    std::sort(all.begin(), all.end());
    ASSERT_EQ(all.size(), ds.size());
    for (std::size_t i = 0; i < all.size(); ++i) EXPECT_EQ(all[i], i);
}

} // namespace

TEST(Synthetic, SplitAndShape) {
    const auto ds = generate_synthetic(500, 0.15, 3);
    EXPECT_EQ(ds.size(), 500u);
    EXPECT_EQ(ds.train.size(), 350u);
    EXPECT_EQ(ds.validation.size(), 150u);
    expect_partition(ds);
    for (const auto& f : ds.features) EXPECT_EQ(f.size(), 2u);
    EXPECT_EQ(std::count(ds.labels.begin(), ds.labels.end(), 0), 250);
}

TEST(Synthetic, Deterministic) {
    const auto a = generate_synthetic(500, 0.15, 42);
    const auto b = generate_synthetic(500, 0.15, 42);
    EXPECT_EQ(a.features, b.features);
    EXPECT_EQ(a.labels, b.labels);
    EXPECT_EQ(a.train, b.train);
    EXPECT_NE(a.features, generate_synthetic(500, 0.15, 43).features);
}

TEST(Synthetic, NoiselessIsSeparableByKernelRule) {
    // Gaussian-kernel vote fitted on the train split.
    const auto ds = generate_synthetic(500, 0.0, 5);
    int correct = 0;
    for (auto v : ds.validation) {
        double score[2] = {0, 0};
        for (auto t : ds.train) {
            const double dx = ds.features[v][0] - ds.features[t][0], dy = ds.features[v][1] - ds.features[t][1];
            score[ds.labels[t]] += std::exp(-(dx * dx + dy * dy) / (2 * 0.1 * 0.1));
        }
        correct += (score[1] > score[0] ? 1 : 0) == ds.labels[v];
    }
    EXPECT_EQ(correct, static_cast<int>(ds.validation.size()));
}

TEST(Idx, HandCraftedFixture) {
    TempDir dir;
    write_bytes(dir.path / "img", kImages);
    write_bytes(dir.path / "lab", kLabels);
    const auto ds = load_idx(dir.path / "img", dir.path / "lab");
    ASSERT_EQ(ds.size(), 2u);
    EXPECT_EQ(ds.height, 2);
    EXPECT_EQ(ds.width, 3);
    EXPECT_EQ(ds.labels, (std::vector<int>{7, 3}));
    const std::vector<double> first{0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
    for (int k = 0; k < 6; ++k) EXPECT_DOUBLE_EQ(ds.features[0][k], first[k]);
    EXPECT_EQ(ds.features[1], (std::vector<double>{1, 0, 1, 0, 1, 0}));
    for (const auto& f : ds.features)
        for (double p : f) {
            EXPECT_GE(p, 0.0);
            EXPECT_LE(p, 1.0);
        }
}

TEST(Idx, GzipTransparent) {
    TempDir dir;
    write_gz(dir.path / "img.gz", kImages);
    write_gz(dir.path / "lab.gz", kLabels);
    const auto ds = load_idx(dir.path / "img.gz", dir.path / "lab.gz");
    EXPECT_EQ(ds.labels, (std::vector<int>{7, 3}));
    EXPECT_DOUBLE_EQ(ds.features[0][1], 0.2);
}

TEST(Idx, Errors) {
    TempDir dir;
    write_bytes(dir.path / "img", kImages);
    write_bytes(dir.path / "lab", kLabels);
    EXPECT_THROW(load_idx(dir.path / "missing", dir.path / "lab"), MissingFileError);

    auto bad_magic = kImages;
    bad_magic[3] = 0x04;
    write_bytes(dir.path / "magic", bad_magic);
    EXPECT_THROW(load_idx(dir.path / "magic", dir.path / "lab"), BadMagicError);

    auto three = kLabels;
    three[7] = 3;
    three.push_back(1);
    write_bytes(dir.path / "lab3", three);
    EXPECT_THROW(load_idx(dir.path / "img", dir.path / "lab3"), CountMismatchError);

    const std::vector<unsigned char> cut(kImages.begin(), kImages.end() - 2);
    write_bytes(dir.path / "cut", cut);
    EXPECT_THROW(load_idx(dir.path / "cut", dir.path / "lab"), TruncatedFileError);
}

TEST(Idx, WriterRoundTrip) {
    TempDir dir;
    const auto [images, labels] = generate_glyph_images(3, 5, 9, 12);
    write_idx(dir.path / "i", dir.path / "l", images, labels, 12, 12);
    const auto ds = load_idx(dir.path / "i", dir.path / "l");
    ASSERT_EQ(ds.size(), 15u);
    EXPECT_EQ(ds.n_classes, 3);
    for (std::size_t i = 0; i < 15; ++i) {
        EXPECT_EQ(ds.labels[i], labels[i]);
        for (std::size_t k = 0; k < 144; ++k) EXPECT_DOUBLE_EQ(ds.features[i][k], images[i][k] / 255.0);
    }
}

TEST(Subset, SizesAndSplit) {
    const auto [images, labels] = generate_glyph_images(10, 400, 1, 8);
    LabeledDataset src;
    src.height = src.width = 8;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        src.features.emplace_back(images[i].begin(), images[i].end());
        src.labels.push_back(labels[i]);
    }
    const auto ds = stratified_subset(src, 10, 400, 2);
    EXPECT_EQ(ds.size(), 4000u);
    EXPECT_EQ(ds.train.size(), 3200u);
    EXPECT_EQ(ds.validation.size(), 800u);
    expect_partition(ds);
    std::vector<int> per(10, 0);
    for (auto t : ds.train) ++per[ds.labels[t]];
    for (int c : per) EXPECT_NEAR(c, 320, 1);

    const auto tiny = stratified_subset(src, 2, 1, 2);
    EXPECT_EQ(tiny.size(), 2u);
    const auto again = stratified_subset(src, 10, 400, 2);
    EXPECT_EQ(again.features, ds.features);
    EXPECT_EQ(again.train, ds.train);
    EXPECT_THROW(stratified_subset(src, 10, 401, 2), InsufficientDataError);
}

TEST(Downscale, BoxAverage) {
    LabeledDataset src;
    src.height = src.width = 4;
    src.features = {{1, 1, 0, 0, 1, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1}};
    src.labels = {0};
    const auto ds = downscale(src, 2);
    EXPECT_EQ(ds.height, 2);
    EXPECT_EQ(ds.features[0], (std::vector<double>{1.0, 0.0, 0.0, 0.5}));
    EXPECT_THROW(downscale(src, 5), SizeError);
}

TEST(Manifest, RecordsCountsAndSplits) {
    const auto ds = generate_synthetic(100, 0.1, 4);
    const auto j = manifest_json(ds);
    EXPECT_EQ(j["split_sizes"]["train"], 70);
    EXPECT_EQ(j["counts_per_class"]["0"], 50);
    EXPECT_EQ(j["seed"], 4);
}
