#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace sface {

/// N feature vectors (rows) with integer class labels.
/// Row-major storage; rows are the x_i of the losses.
struct EmbeddingBatch {
    std::size_t n = 0;
    std::size_t dim = 0;
    std::vector<double> features;  // n * dim, row-major
    std::vector<int> labels;       // n entries in [0, num_classes)

    EmbeddingBatch() = default;
    EmbeddingBatch(std::size_t n_, std::size_t dim_)
        : n(n_), dim(dim_), features(n_ * dim_, 0.0), labels(n_, 0) {}

    std::span<double> row(std::size_t i) {
        return {features.data() + i * dim, dim};
    }
    std::span<const double> row(std::size_t i) const {
        return {features.data() + i * dim, dim};
    }

    /// Every row norm >= kNormFloor, every label in [0, num_classes).
    /// Throws DegenerateVector / DimensionMismatch.
    void validate(std::size_t num_classes) const;
};

/// Class target centers: the columns of the last-layer weight matrix.
/// Column-major storage so each center is contiguous.
struct CenterMatrix {
    std::size_t dim = 0;
    std::size_t num_classes = 0;
    std::vector<double> data;  // dim * num_classes, column-major

    CenterMatrix() = default;
    CenterMatrix(std::size_t dim_, std::size_t num_classes_)
        : dim(dim_), num_classes(num_classes_), data(dim_ * num_classes_, 0.0) {}

    std::span<double> col(std::size_t j) {
        return {data.data() + j * dim, dim};
    }
    std::span<const double> col(std::size_t j) const {
        return {data.data() + j * dim, dim};
    }

    /// Every column norm >= kNormFloor.
    void validate() const;
};

/// Throws DimensionMismatch unless batch.dim == centers.dim.
void require_same_dim(const EmbeddingBatch& batch, const CenterMatrix& centers);

}  // namespace sface
