#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "flad/error.hpp"
#include "flad/tensor.hpp"

namespace flad {

using Labels = std::vector<std::size_t>;

/// Features in [0,1] with one class label per row.
struct Dataset {
    Tensor features;  // (n, d_in)
    Labels labels;
    std::size_t k = 0;

    std::size_t size() const noexcept { return labels.size(); }
    std::size_t dim() const noexcept { return features.cols(); }
    bool empty() const noexcept { return labels.empty(); }

    void validate() const {
        if (features.rank() != 2) throw ShapeError("dataset features must be rank 2");
        if (features.rows() != labels.size())
            throw ShapeError("dataset has " + std::to_string(features.rows()) + " rows but " +
                             std::to_string(labels.size()) + " labels");
        for (auto y : labels)
            if (y >= k) throw InvalidLabelError("label " + std::to_string(y) + " outside [0," + std::to_string(k) + ")");
        for (double x : features.data())
            if (!(x >= 0.0 && x <= 1.0)) throw InvalidSpecError("feature value outside [0,1]");
    }

    friend bool operator==(const Dataset&, const Dataset&) = default;
};

inline Dataset subset(const Dataset& ds, std::span<const std::size_t> idx) {
    Dataset out;
    out.features = gather_rows(ds.features, idx);
    out.labels.reserve(idx.size());
    for (auto i : idx) out.labels.push_back(ds.labels.at(i));
    out.k = ds.k;
    return out;
}

/// Concatenates datasets with identical feature dimension and class count.
inline Dataset concat(std::span<const Dataset> parts) {
    Dataset out;
    if (parts.empty()) return out;
    std::size_t n = 0;
    for (const auto& p : parts) n += p.size();
    const std::size_t d = parts.front().dim();
    out.features = Tensor::matrix(n, d);
    out.k = parts.front().k;
    std::size_t r = 0;
    for (const auto& p : parts) {
        if (p.dim() != d) throw ShapeError("concat: feature dimension mismatch");
        for (std::size_t i = 0; i < p.size(); ++i, ++r) {
            auto src = p.features.row(i);
            std::copy(src.begin(), src.end(), out.features.row(r).begin());
            out.labels.push_back(p.labels[i]);
        }
    }
    return out;
}

}  // namespace flad
