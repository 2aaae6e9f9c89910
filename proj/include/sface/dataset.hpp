#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "sface/batch.hpp"

namespace sface {

/// Seeded generator for labeled clusters on the unit hypersphere with
/// controlled label noise.
struct DatasetSpec {
    std::size_t num_classes = 10;
    std::size_t per_class = 100;
    std::size_t dim = 16;
    /// Within-class angular spread control; the Gaussian perturbation
    /// scale is 1/sqrt(concentration).
    double concentration = 120.0;
    double flip_rate = 0.0;     // labels reassigned to a wrong class
    double outlier_rate = 0.0;  // points replaced by random directions
    std::uint64_t seed = 0;

    std::size_t total() const { return num_classes * per_class; }
    void validate() const;  // throws InvalidSpec
};

struct NoisyDataset {
    std::size_t dim = 0;
    std::vector<double> features;  // n x dim row-major, unit rows
    std::vector<int> true_labels;
    std::vector<int> given_labels;
    std::vector<std::uint8_t> noise_mask;  // 1 where the sample is noise

    std::size_t size() const { return true_labels.size(); }
    std::span<const double> row(std::size_t i) const {
        return {features.data() + i * dim, dim};
    }

    /// Training view: features with the given (possibly wrong) labels.
    EmbeddingBatch as_batch() const;
};

/// Deterministic per seed. Class directions are rejection-sampled so no
/// pairwise cosine exceeds 0.95; per-class points are Gaussian
/// perturbations of the class direction, normalized back to the sphere.
/// Flip noise reassigns given labels uniformly among the other classes;
/// outlier noise replaces the point with a uniform random direction and
/// keeps its label.
NoisyDataset generate(const DatasetSpec& spec);

/// CSV: `index,true_label,given_label,is_noise,f0,...,f{d-1}`.
void write_dataset_csv(std::ostream& out, const NoisyDataset& data);

}  // namespace sface
