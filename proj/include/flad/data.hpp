#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <ostream>
#include <random>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "flad/dataset.hpp"
#include "flad/error.hpp"
#include "flad/random.hpp"

namespace flad {

// ---------------------------------------------------------------------------
// IDX (MNIST distribution format)

inline constexpr std::uint32_t idx_images_magic = 0x00000803;
inline constexpr std::uint32_t idx_labels_magic = 0x00000801;

namespace detail {

inline std::vector<unsigned char> read_file(const std::filesystem::path& path, const std::string& field) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(field, "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::uint32_t read_be32(const std::vector<unsigned char>& buf, std::size_t off, const std::string& field) {
    if (off + 4 > buf.size()) throw ParseError(field, "truncated header");
    return (std::uint32_t{buf[off]} << 24) | (std::uint32_t{buf[off + 1]} << 16) | (std::uint32_t{buf[off + 2]} << 8) |
           std::uint32_t{buf[off + 3]};
}

inline void write_be32(std::ostream& out, std::uint32_t v) {
    const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                       static_cast<char>(v)};
    out.write(b, 4);
}

}  // namespace detail

/// Reads an IDX image/label pair. Pixels are scaled by 1/255 and images are
/// flattened row-major; k is fixed at 10 (the label byte range observed is
/// checked against it).
inline Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                        std::size_t k = 10) {
    const auto img = detail::read_file(images_path, "images");
    const auto lab = detail::read_file(labels_path, "labels");

    if (const auto magic = detail::read_be32(img, 0, "images.magic"); magic != idx_images_magic)
        throw ParseError("images.magic", "expected 0x00000803, got " + std::to_string(magic));
    if (const auto magic = detail::read_be32(lab, 0, "labels.magic"); magic != idx_labels_magic)
        throw ParseError("labels.magic", "expected 0x00000801, got " + std::to_string(magic));

    const std::size_t count = detail::read_be32(img, 4, "images.count");
    const std::size_t rows = detail::read_be32(img, 8, "images.rows");
    const std::size_t cols = detail::read_be32(img, 12, "images.cols");
    const std::size_t label_count = detail::read_be32(lab, 4, "labels.count");
    if (count != label_count)
        throw ParseError("labels.count", "images declare " + std::to_string(count) + " items, labels declare " +
                                             std::to_string(label_count));
    const std::size_t d = rows * cols;
    if (img.size() < 16 + count * d) throw ParseError("images.data", "truncated pixel data");
    if (lab.size() < 8 + count) throw ParseError("labels.data", "truncated label data");

    Dataset ds;
    ds.k = k;
    ds.features = Tensor::matrix(count, d);
    auto f = ds.features.data();
    for (std::size_t i = 0; i < count * d; ++i) f[i] = static_cast<double>(img[16 + i]) / 255.0;
    ds.labels.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        ds.labels[i] = lab[8 + i];
        if (ds.labels[i] >= k) throw ParseError("labels.data", "label " + std::to_string(ds.labels[i]) + " >= k");
    }
    return ds;
}

/// Writes a dataset as an IDX pair (features quantized to bytes).
inline void write_idx(const Dataset& ds, std::size_t rows, std::size_t cols, const std::filesystem::path& images_path,
                      const std::filesystem::path& labels_path) {
    if (rows * cols != ds.dim()) throw ShapeError("write_idx: rows*cols must equal feature dimension");
    std::ofstream img(images_path, std::ios::binary);
    std::ofstream lab(labels_path, std::ios::binary);
    if (!img || !lab) throw Error("write_idx: cannot open output files");
    detail::write_be32(img, idx_images_magic);
    detail::write_be32(img, static_cast<std::uint32_t>(ds.size()));
    detail::write_be32(img, static_cast<std::uint32_t>(rows));
    detail::write_be32(img, static_cast<std::uint32_t>(cols));
    for (double x : ds.features.data()) img.put(static_cast<char>(std::lround(std::clamp(x, 0.0, 1.0) * 255.0)));
    detail::write_be32(lab, idx_labels_magic);
    detail::write_be32(lab, static_cast<std::uint32_t>(ds.size()));
    for (auto y : ds.labels) lab.put(static_cast<char>(y));
}

// ---------------------------------------------------------------------------
// Synthetic Gaussian blobs

/// Class j is centered at class_sep * e_(j mod d_in) with isotropic noise,
/// clamped to [0,1]. Samples are interleaved by class.
inline Dataset gen_synthetic(std::size_t k, std::size_t per_class, std::size_t d_in, double class_sep, double std_dev,
                             std::uint64_t seed) {
    if (k < 2) throw InvalidSpecError("gen_synthetic: k must be >= 2");
    if (per_class < 1) throw InvalidSpecError("gen_synthetic: per_class must be >= 1");
    if (d_in < 1) throw InvalidSpecError("gen_synthetic: d_in must be >= 1");
    if (!(std_dev >= 0.0)) throw InvalidSpecError("gen_synthetic: std must be non-negative");
    Dataset ds;
    ds.k = k;
    ds.features = Tensor::matrix(k * per_class, d_in);
    ds.labels.resize(k * per_class);
    Rng rng(derive_seed(seed, {stream::synthetic}));
    std::normal_distribution<double> noise(0.0, 1.0);
    for (std::size_t i = 0; i < per_class; ++i) {
        for (std::size_t c = 0; c < k; ++c) {
            const std::size_t r = i * k + c;
            ds.labels[r] = c;
            auto row = ds.features.row(r);
            for (std::size_t j = 0; j < d_in; ++j) {
                const double mean = j == c % d_in ? class_sep : 0.0;
                row[j] = std::clamp(mean + std_dev * noise(rng), 0.0, 1.0);
            }
        }
    }
    return ds;
}

/// CSV with header `label,f0,...,f{d-1}`; values at 17 significant digits.
inline void write_csv(const Dataset& ds, std::ostream& out) {
    out << "label";
    for (std::size_t j = 0; j < ds.dim(); ++j) out << ",f" << j;
    out << '\n';
    char buf[32];
    for (std::size_t i = 0; i < ds.size(); ++i) {
        out << ds.labels[i];
        for (double x : ds.features.row(i)) {
            std::snprintf(buf, sizeof buf, "%.17g", x);
            out << ',' << buf;
        }
        out << '\n';
    }
}

// ---------------------------------------------------------------------------
// Client partitioning

struct IidScheme {};
struct DirichletScheme {
    double alpha = 0.5;
};
using PartitionScheme = std::variant<IidScheme, DirichletScheme>;

struct ClientPartition {
    std::vector<std::vector<std::size_t>> assignments;

    std::size_t clients() const noexcept { return assignments.size(); }
};

namespace detail {

inline std::vector<std::vector<std::size_t>> dirichlet_draw(const Dataset& ds, std::size_t n_clients, double alpha,
                                                            Rng& rng) {
    std::vector<std::vector<std::size_t>> by_class(ds.k);
    for (std::size_t i = 0; i < ds.size(); ++i) by_class[ds.labels[i]].push_back(i);
    std::vector<std::vector<std::size_t>> out(n_clients);
    std::gamma_distribution<double> gamma(alpha, 1.0);
    for (auto& members : by_class) {
        if (members.empty()) continue;
        std::shuffle(members.begin(), members.end(), rng);
        std::vector<double> p(n_clients);
        double total = 0.0;
        for (auto& x : p) total += (x = gamma(rng));
        if (total <= 0.0) {
            std::fill(p.begin(), p.end(), 1.0);
            total = static_cast<double>(n_clients);
        }
        // Cumulative cut points; the last client absorbs rounding.
        double acc = 0.0;
        std::size_t start = 0;
        for (std::size_t c = 0; c < n_clients; ++c) {
            acc += p[c] / total;
            const std::size_t stop =
                c + 1 == n_clients ? members.size()
                                   : std::min(members.size(), static_cast<std::size_t>(std::llround(acc * members.size())));
            for (std::size_t i = start; i < stop; ++i) out[c].push_back(members[i]);
            start = std::max(start, stop);
        }
    }
    for (auto& list : out) std::sort(list.begin(), list.end());
    return out;
}

}  // namespace detail

/// Splits a dataset across `n_clients`. IID: shuffled equal split with the
/// remainder going to the lowest ids. Dirichlet: per-class shares drawn from
/// Dirichlet(alpha), redrawn until every client has at least one sample.
inline ClientPartition partition(const Dataset& ds, std::size_t n_clients, const PartitionScheme& scheme,
                                 std::uint64_t seed) {
    if (n_clients == 0) throw InvalidSpecError("partition: N must be >= 1");
    if (ds.empty()) throw EmptyDataError("partition: empty dataset");
    if (n_clients > ds.size())
        throw InfeasiblePartitionError("cannot give " + std::to_string(n_clients) + " clients a sample each from " +
                                       std::to_string(ds.size()) + " samples");
    ClientPartition part;
    if (n_clients == 1) {
        part.assignments.emplace_back(ds.size());
        for (std::size_t i = 0; i < ds.size(); ++i) part.assignments[0][i] = i;
        return part;
    }
    if (std::holds_alternative<IidScheme>(scheme)) {
        std::vector<std::size_t> order(ds.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        Rng rng(derive_seed(seed, {stream::partition}));
        std::shuffle(order.begin(), order.end(), rng);
        const std::size_t base = ds.size() / n_clients;
        const std::size_t extra = ds.size() % n_clients;
        std::size_t pos = 0;
        for (std::size_t c = 0; c < n_clients; ++c) {
            const std::size_t len = base + (c < extra ? 1 : 0);
            part.assignments.emplace_back(order.begin() + pos, order.begin() + pos + len);
            pos += len;
        }
        return part;
    }
    const double alpha = std::get<DirichletScheme>(scheme).alpha;
    if (!(alpha > 0.0)) throw InvalidSpecError("partition: dirichlet alpha must be positive");
    constexpr std::uint64_t max_attempts = 1000;
    for (std::uint64_t attempt = 0; attempt < max_attempts; ++attempt) {
        Rng rng(derive_seed(seed, {stream::partition, attempt}));
        auto lists = detail::dirichlet_draw(ds, n_clients, alpha, rng);
        if (std::all_of(lists.begin(), lists.end(), [](const auto& l) { return !l.empty(); })) {
            part.assignments = std::move(lists);
            return part;
        }
    }
    throw InfeasiblePartitionError("dirichlet draw left a client empty after " + std::to_string(max_attempts) +
                                   " attempts");
}

// ---------------------------------------------------------------------------
// Poisoning

struct NoPoison {};
struct LabelFlip {
    std::size_t target_class = 0;
};
struct FeatureNoise {
    double std_dev = 0.0;
};
using PoisonKind = std::variant<NoPoison, LabelFlip, FeatureNoise>;

struct PoisonSpec {
    PoisonKind kind = NoPoison{};
    std::set<std::size_t> malicious_clients;
    double poison_fraction = 1.0;

    bool active() const noexcept { return !std::holds_alternative<NoPoison>(kind); }
};

struct PoisonMask {
    std::vector<bool> altered;    // per sample of the parent dataset
    std::vector<bool> malicious;  // per client
};

struct PoisonedData {
    Dataset dataset;
    PoisonMask mask;
};

/// Alters a sampled fraction of each malicious client's samples. Clean
/// clients and samples outside any partition list are untouched.
inline PoisonedData apply_poison(const Dataset& ds, const ClientPartition& part, const PoisonSpec& spec,
                                 std::uint64_t seed) {
    if (!(spec.poison_fraction >= 0.0 && spec.poison_fraction <= 1.0))
        throw InvalidSpecError("poison_fraction must lie in [0,1]");
    for (auto c : spec.malicious_clients)
        if (c >= part.clients()) throw InvalidSpecError("malicious client " + std::to_string(c) + " out of range");
    if (const auto* flip = std::get_if<LabelFlip>(&spec.kind); flip && flip->target_class >= ds.k)
        throw InvalidSpecError("label_flip target_class " + std::to_string(flip->target_class) + " >= k");
    if (const auto* fn = std::get_if<FeatureNoise>(&spec.kind); fn && !(fn->std_dev >= 0.0))
        throw InvalidSpecError("feature_noise std must be non-negative");

    PoisonedData out{ds, {std::vector<bool>(ds.size(), false), std::vector<bool>(part.clients(), false)}};
    if (!spec.active()) return out;

    for (auto c : spec.malicious_clients) {
        out.mask.malicious[c] = true;
        std::vector<std::size_t> idx = part.assignments[c];
        Rng rng(derive_seed(seed, {stream::poison, c}));
        std::shuffle(idx.begin(), idx.end(), rng);
        const auto n_alter = static_cast<std::size_t>(std::llround(spec.poison_fraction * static_cast<double>(idx.size())));
        idx.resize(std::min(n_alter, idx.size()));
        std::sort(idx.begin(), idx.end());
        std::normal_distribution<double> noise(0.0, 1.0);
        for (auto i : idx) {
            out.mask.altered[i] = true;
            if (const auto* flip = std::get_if<LabelFlip>(&spec.kind)) {
                auto& y = out.dataset.labels[i];
                y = y == flip->target_class ? (flip->target_class + 1) % ds.k : flip->target_class;
            } else if (const auto* fn = std::get_if<FeatureNoise>(&spec.kind)) {
                for (double& x : out.dataset.features.row(i)) x = std::clamp(x + fn->std_dev * noise(rng), 0.0, 1.0);
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Reference set

/// Uniform sample of m rows without replacement, stratified by class when
/// m >= k (equal quota per class, remainder to the lowest classes, shortfalls
/// refilled from the remaining pool). Output keeps the source order.
inline Dataset select_reference(const Dataset& ds, std::size_t m, std::uint64_t seed) {
    if (m > ds.size())
        throw InvalidSpecError("reference size " + std::to_string(m) + " exceeds dataset size " +
                               std::to_string(ds.size()));
    std::vector<std::size_t> chosen;
    if (m == ds.size()) {
        chosen.resize(m);
        for (std::size_t i = 0; i < m; ++i) chosen[i] = i;
        return subset(ds, chosen);
    }
    Rng rng(derive_seed(seed, {stream::reference}));
    std::vector<std::size_t> leftovers;
    if (m >= ds.k) {
        std::vector<std::vector<std::size_t>> by_class(ds.k);
        for (std::size_t i = 0; i < ds.size(); ++i) by_class[ds.labels[i]].push_back(i);
        for (std::size_t c = 0; c < ds.k; ++c) {
            auto& members = by_class[c];
            std::shuffle(members.begin(), members.end(), rng);
            const std::size_t quota = m / ds.k + (c < m % ds.k ? 1 : 0);
            const std::size_t take = std::min(quota, members.size());
            chosen.insert(chosen.end(), members.begin(), members.begin() + take);
            leftovers.insert(leftovers.end(), members.begin() + take, members.end());
        }
    } else {
        leftovers.resize(ds.size());
        for (std::size_t i = 0; i < ds.size(); ++i) leftovers[i] = i;
    }
    if (chosen.size() < m) {
        std::sort(leftovers.begin(), leftovers.end());
        std::shuffle(leftovers.begin(), leftovers.end(), rng);
        chosen.insert(chosen.end(), leftovers.begin(), leftovers.begin() + (m - chosen.size()));
    }
    std::sort(chosen.begin(), chosen.end());
    return subset(ds, chosen);
}

/// Random split into (train, holdout); holdout gets
/// round(fraction * n) rows.
inline std::pair<Dataset, Dataset> split_holdout(const Dataset& ds, double fraction, std::uint64_t seed) {
    if (!(fraction >= 0.0 && fraction <= 1.0)) throw InvalidSpecError("test_fraction must lie in [0,1]");
    std::vector<std::size_t> order(ds.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(derive_seed(seed, {stream::split}));
    std::shuffle(order.begin(), order.end(), rng);
    const auto n_hold = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(ds.size())));
    std::vector<std::size_t> hold(order.begin(), order.begin() + n_hold);
    std::vector<std::size_t> train(order.begin() + n_hold, order.end());
    std::sort(hold.begin(), hold.end());
    std::sort(train.begin(), train.end());
    return {subset(ds, train), subset(ds, hold)};
}

}  // namespace flad
