#include "sface/batch.hpp"

#include <string>

#include "sface/errors.hpp"
#include "sface/geometry.hpp"

namespace sface {

void EmbeddingBatch::validate(std::size_t num_classes) const {
    if (features.size() != n * dim || labels.size() != n) {
        throw DimensionMismatch("EmbeddingBatch: storage does not match n x dim");
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (norm(row(i)) < kNormFloor) {
            throw DegenerateVector("EmbeddingBatch: row " + std::to_string(i) +
                                   " has norm below 1e-12");
        }
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes) {
            throw DimensionMismatch("EmbeddingBatch: label " + std::to_string(labels[i]) +
                                    " out of range at row " + std::to_string(i));
        }
    }
}

void CenterMatrix::validate() const {
    if (data.size() != dim * num_classes) {
        throw DimensionMismatch("CenterMatrix: storage does not match dim x classes");
    }
    for (std::size_t j = 0; j < num_classes; ++j) {
        if (norm(col(j)) < kNormFloor) {
            throw DegenerateVector("CenterMatrix: column " + std::to_string(j) +
                                   " has norm below 1e-12");
        }
    }
}

void require_same_dim(const EmbeddingBatch& batch, const CenterMatrix& centers) {
    if (batch.dim != centers.dim) {
        throw DimensionMismatch("feature dim " + std::to_string(batch.dim) +
                                " != center dim " + std::to_string(centers.dim));
    }
}

}  // namespace sface
