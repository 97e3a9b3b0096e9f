#include <gtest/gtest.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "flad/data.hpp"

using namespace flad;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
    auto p = fs::temp_directory_path() / ("flad_test_data_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

void write_bytes(const fs::path& p, const std::vector<unsigned char>& bytes) {
    std::ofstream f(p, std::ios::binary);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<unsigned char> be32(std::uint32_t v) {
    return {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 8),
            static_cast<unsigned char>(v)};
}

template <typename... Parts>
std::vector<unsigned char> bytes(Parts... parts) {
    std::vector<unsigned char> out;
    (out.insert(out.end(), parts.begin(), parts.end()), ...);
    return out;
}

// Two 1x2 images: [0, 255] and [255, 0]; labels 3 and 7.
struct Fixture {
    fs::path images, labels;
};

Fixture tiny_idx(const fs::path& dir, std::uint32_t image_magic = 0x803, std::uint32_t label_count = 2) {
    Fixture f{dir / "img.idx", dir / "lab.idx"};
    write_bytes(f.images, bytes(be32(image_magic), be32(2), be32(1), be32(2), std::vector<unsigned char>{0, 255, 255, 0}));
    write_bytes(f.labels, bytes(be32(0x801), be32(label_count), std::vector<unsigned char>{3, 7}));
    return f;
}

std::string parse_field(const Fixture& f) {
    try {
        load_idx(f.images, f.labels);
    } catch (const ParseError& e) {
        return e.field();
    }
    return "";
}

}  // namespace

TEST(Idx, HandBuiltFixture) {
    const auto f = tiny_idx(temp_dir("fixture"));
    const Dataset ds = load_idx(f.images, f.labels);
    EXPECT_EQ(ds.size(), 2u);
    EXPECT_EQ(ds.dim(), 2u);
    EXPECT_EQ(ds.k, 10u);
    EXPECT_EQ(ds.features(0, 0), 0.0);
    EXPECT_EQ(ds.features(0, 1), 1.0);
    EXPECT_EQ(ds.labels, (Labels{3, 7}));
}

TEST(Idx, ErrorsNameTheOffendingField) {
    const auto dir = temp_dir("errors");
    EXPECT_EQ(parse_field(tiny_idx(dir, 0x804)), "images.magic");
    EXPECT_EQ(parse_field(tiny_idx(dir, 0x803, 3)), "labels.count");

    auto f = tiny_idx(dir);
    write_bytes(f.images, bytes(be32(0x803), be32(2), be32(1), be32(2), std::vector<unsigned char>{0, 255, 255}));
    EXPECT_EQ(parse_field(f), "images.data");

    f = tiny_idx(dir);
    write_bytes(f.labels, bytes(be32(0x801), be32(2), std::vector<unsigned char>{3}));
    EXPECT_EQ(parse_field(f), "labels.data");

    f = tiny_idx(dir);
    write_bytes(f.labels, std::vector<unsigned char>{0, 0, 8});
    EXPECT_EQ(parse_field(f), "labels.magic");

    f = tiny_idx(dir);
    write_bytes(f.labels, bytes(be32(0x901), be32(2), std::vector<unsigned char>{3, 7}));
    EXPECT_EQ(parse_field(f), "labels.magic");

    fs::remove(f.images);
    EXPECT_THROW(load_idx(f.images, f.labels), ParseError);
}

TEST(Idx, RoundTrip) {
    const auto dir = temp_dir("roundtrip");
    Dataset ds = gen_synthetic(3, 5, 6, 0.8, 0.2, 1);
    for (double& x : ds.features.data()) x = std::round(x * 255.0) / 255.0;
    ds.k = 10;
    write_idx(ds, 2, 3, dir / "i", dir / "l");
    const Dataset back = load_idx(dir / "i", dir / "l");
    EXPECT_EQ(back.labels, ds.labels);
    for (std::size_t i = 0; i < ds.features.size(); ++i) EXPECT_DOUBLE_EQ(back.features.data()[i], ds.features.data()[i]);
}

TEST(Synthetic, DeterministicClampedAndDegenerate) {
    const Dataset a = gen_synthetic(3, 20, 5, 0.8, 0.3, 9);
    EXPECT_EQ(a, gen_synthetic(3, 20, 5, 0.8, 0.3, 9));
    EXPECT_NE(a, gen_synthetic(3, 20, 5, 0.8, 0.3, 10));
    a.validate();
    const Dataset z = gen_synthetic(3, 4, 5, 0.8, 0.0, 9);
    for (std::size_t i = 0; i < z.size(); ++i)
        for (std::size_t j = 0; j < 5; ++j) EXPECT_EQ(z.features(i, j), j == z.labels[i] ? 0.8 : 0.0);
}

TEST(Synthetic, CsvHeaderAndRowCount) {
    const Dataset ds = gen_synthetic(2, 3, 4, 0.8, 0.1, 1);
    std::ostringstream out;
    write_csv(ds, out);
    std::istringstream in(out.str());
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "label,f0,f1,f2,f3");
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        ++rows;
        EXPECT_EQ(std::count(line.begin(), line.end(), ','), 4);
    }
    EXPECT_EQ(rows, 6u);
}

TEST(Partition, SingleClientAndIidSizes) {
    const Dataset ds = gen_synthetic(2, 50, 3, 0.8, 0.1, 0);
    const auto one = partition(ds, 1, IidScheme{}, 0);
    ASSERT_EQ(one.clients(), 1u);
    for (std::size_t i = 0; i < ds.size(); ++i) EXPECT_EQ(one.assignments[0][i], i);
    const auto ten = partition(ds, 10, IidScheme{}, 0);
    for (const auto& l : ten.assignments) EXPECT_EQ(l.size(), 10u);
    const auto seven = partition(ds, 7, IidScheme{}, 0);
    EXPECT_EQ(seven.assignments[0].size(), 15u);
    EXPECT_EQ(seven.assignments[6].size(), 14u);
    EXPECT_THROW(partition(ds, 101, IidScheme{}, 0), InfeasiblePartitionError);
}

TEST(Partition, ListsDisjointNonEmptyAndCovering) {
    const Dataset ds = gen_synthetic(3, 40, 3, 0.8, 0.1, 0);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        for (const PartitionScheme& scheme : {PartitionScheme{IidScheme{}}, PartitionScheme{DirichletScheme{0.3}}}) {
            const auto p = partition(ds, 8, scheme, seed);
            std::set<std::size_t> seen;
            std::size_t total = 0;
            for (const auto& l : p.assignments) {
                EXPECT_FALSE(l.empty());
                total += l.size();
                seen.insert(l.begin(), l.end());
            }
            EXPECT_EQ(seen.size(), total);
            EXPECT_EQ(total, ds.size());
        }
    }
}

TEST(Partition, SmallDirichletAlphaSkewsClasses) {
    const Dataset ds = gen_synthetic(2, 200, 3, 0.8, 0.1, 0);
    const auto p = partition(ds, 10, DirichletScheme{0.1}, 4);
    bool skewed = false;
    for (const auto& l : p.assignments) {
        const auto ones = std::count_if(l.begin(), l.end(), [&](std::size_t i) { return ds.labels[i] == 1; });
        const double share = static_cast<double>(ones) / static_cast<double>(l.size());
        if (share > 0.9 || share < 0.1) skewed = true;
    }
    EXPECT_TRUE(skewed);
    EXPECT_EQ(p.assignments, partition(ds, 10, DirichletScheme{0.1}, 4).assignments);
}

TEST(Poison, NoneLeavesDataUntouched) {
    const Dataset ds = gen_synthetic(2, 20, 3, 0.8, 0.1, 0);
    const auto part = partition(ds, 4, IidScheme{}, 0);
    const auto out = apply_poison(ds, part, PoisonSpec{NoPoison{}, {0, 1}, 1.0}, 0);
    EXPECT_EQ(out.dataset, ds);
    EXPECT_EQ(std::count(out.mask.altered.begin(), out.mask.altered.end(), true), 0);
}

TEST(Poison, FullLabelFlipWithCollisionRule) {
    const Dataset ds = gen_synthetic(3, 20, 3, 0.8, 0.1, 0);
    const auto part = partition(ds, 4, IidScheme{}, 0);
    const auto out = apply_poison(ds, part, PoisonSpec{LabelFlip{0}, {2}, 1.0}, 0);
    EXPECT_EQ(out.mask.malicious, (std::vector<bool>{false, false, true, false}));
    std::set<std::size_t> mine(part.assignments[2].begin(), part.assignments[2].end());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        if (mine.count(i)) {
            EXPECT_TRUE(out.mask.altered[i]);
            EXPECT_EQ(out.dataset.labels[i], ds.labels[i] == 0 ? 1u : 0u);
        } else {
            EXPECT_FALSE(out.mask.altered[i]);
            EXPECT_EQ(out.dataset.labels[i], ds.labels[i]);
        }
    }
    EXPECT_THROW(apply_poison(ds, part, PoisonSpec{LabelFlip{3}, {2}, 1.0}, 0), InvalidSpecError);
}

TEST(Poison, PartialFractionAndFeatureNoise) {
    const Dataset ds = gen_synthetic(2, 50, 3, 0.8, 0.1, 0);
    const auto part = partition(ds, 5, IidScheme{}, 0);
    const auto half = apply_poison(ds, part, PoisonSpec{LabelFlip{1}, {0, 3}, 0.5}, 7);
    EXPECT_EQ(std::count(half.mask.altered.begin(), half.mask.altered.end(), true), 20);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        if (half.mask.altered[i]) {
            EXPECT_NE(half.dataset.labels[i], ds.labels[i]);
        }
    }

    const auto quiet = apply_poison(ds, part, PoisonSpec{FeatureNoise{0.0}, {1}, 1.0}, 7);
    EXPECT_EQ(quiet.dataset, ds);
    EXPECT_EQ(std::count(quiet.mask.altered.begin(), quiet.mask.altered.end(), true), 20);

    const auto noisy = apply_poison(ds, part, PoisonSpec{FeatureNoise{0.5}, {1}, 1.0}, 7);
    noisy.dataset.validate();
    EXPECT_EQ(noisy.dataset.labels, ds.labels);
    EXPECT_NE(noisy.dataset.features, ds.features);
}

TEST(Reference, WholeSetStratifiedAndDeterministic) {
    const Dataset ds = gen_synthetic(4, 25, 5, 0.8, 0.1, 0);
    EXPECT_EQ(select_reference(ds, ds.size(), 3), ds);
    const Dataset per_class = select_reference(ds, 4, 3);
    EXPECT_EQ(std::set<std::size_t>(per_class.labels.begin(), per_class.labels.end()).size(), 4u);
    const Dataset m = select_reference(ds, 42, 3);
    EXPECT_EQ(m.size(), 42u);
    for (std::size_t c = 0; c < 4; ++c) {
        const auto n = std::count(m.labels.begin(), m.labels.end(), c);
        EXPECT_EQ(n, c < 2 ? 11 : 10);
    }
    EXPECT_EQ(m, select_reference(ds, 42, 3));
    EXPECT_THROW(select_reference(ds, 101, 3), InvalidSpecError);
}

TEST(Reference, ShortClassesAreRefilled) {
    Dataset ds = gen_synthetic(2, 10, 3, 0.8, 0.1, 0);
    for (std::size_t i = 0; i < ds.size(); ++i) ds.labels[i] = i < 3 ? 1 : 0;
    const Dataset m = select_reference(ds, 10, 1);
    EXPECT_EQ(m.size(), 10u);
    EXPECT_EQ(std::count(m.labels.begin(), m.labels.end(), 1u), 3);
}

TEST(Holdout, SplitSizesAndDisjointness) {
    const Dataset ds = gen_synthetic(2, 50, 3, 0.8, 0.1, 0);
    const auto [train, hold] = split_holdout(ds, 0.3, 2);
    EXPECT_EQ(hold.size(), 30u);
    EXPECT_EQ(train.size(), 70u);
    const std::vector<Dataset> parts{train, hold};
    const Dataset both = concat(parts);
    EXPECT_EQ(both.size(), ds.size());
}
