#include "sface/dataset.hpp"

#include <cmath>
#include <numeric>
#include <ostream>

#include "sface/errors.hpp"
#include "sface/geometry.hpp"
#include "sface/rng.hpp"
#include "sface/text.hpp"

namespace sface {

namespace {

constexpr double kMaxPairwiseCos = 0.95;
constexpr int kMaxDirectionAttempts = 10000;

void fill_unit_gaussian(Xoshiro256& rng, std::span<double> v) {
    for (double& x : v) x = rng.gaussian();
    const double n = norm(v);
    if (n < kNormFloor) {
        // Astronomically unlikely; redrawing keeps the stream simple.
        fill_unit_gaussian(rng, v);
        return;
    }
    for (double& x : v) x /= n;
}

}  // namespace

void DatasetSpec::validate() const {
    if (num_classes < 2) throw InvalidSpec("DatasetSpec: need at least 2 classes");
    if (dim < 2) throw InvalidSpec("DatasetSpec: need dim >= 2");
    if (per_class < 1) throw InvalidSpec("DatasetSpec: need per_class >= 1");
    if (!(concentration > 0.0)) throw InvalidSpec("DatasetSpec: concentration must be positive");
    if (flip_rate < 0.0 || outlier_rate < 0.0 || flip_rate + outlier_rate >= 1.0) {
        throw InvalidSpec("DatasetSpec: flip_rate + outlier_rate must lie in [0, 1)");
    }
}

EmbeddingBatch NoisyDataset::as_batch() const {
    EmbeddingBatch batch(size(), dim);
    batch.features = features;
    batch.labels = given_labels;
    return batch;
}

NoisyDataset generate(const DatasetSpec& spec) {
    spec.validate();
    const std::size_t n = spec.total();
    const std::size_t c = spec.num_classes;
    const std::size_t d = spec.dim;

    NoisyDataset data;
    data.dim = d;
    data.features.resize(n * d);
    data.true_labels.resize(n);
    data.given_labels.resize(n);
    data.noise_mask.assign(n, 0);

    // Stream 0: class directions, rejection-sampled for separation.
    std::vector<double> directions(c * d);
    {
        Xoshiro256 rng = Xoshiro256::stream(spec.seed, 0);
        for (std::size_t j = 0; j < c; ++j) {
            std::span<double> dir(directions.data() + j * d, d);
            int attempts = 0;
            for (;;) {
                if (++attempts > kMaxDirectionAttempts) {
                    throw InvalidSpec("generate: cannot place class directions with "
                                      "pairwise cosine <= 0.95; lower num_classes or "
                                      "raise dim");
                }
                fill_unit_gaussian(rng, dir);
                bool ok = true;
                for (std::size_t p = 0; p < j; ++p) {
                    std::span<const double> prev(directions.data() + p * d, d);
                    if (dot(dir, prev) > kMaxPairwiseCos) {
                        ok = false;
                        break;
                    }
                }
                if (ok) break;
            }
        }
    }

    // Streams 1..C: per-class points around the class direction.
    const double sigma = 1.0 / std::sqrt(spec.concentration);
    for (std::size_t j = 0; j < c; ++j) {
        Xoshiro256 rng = Xoshiro256::stream(spec.seed, 1 + j);
        std::span<const double> dir(directions.data() + j * d, d);
        for (std::size_t p = 0; p < spec.per_class; ++p) {
            const std::size_t idx = j * spec.per_class + p;
            std::span<double> row(data.features.data() + idx * d, d);
            for (std::size_t t = 0; t < d; ++t) row[t] = dir[t] + sigma * rng.gaussian();
            const double rn = norm(row);
            for (double& x : row) x /= rn;
            data.true_labels[idx] = static_cast<int>(j);
            data.given_labels[idx] = static_cast<int>(j);
        }
    }

    // Stream C+1: noise assignment. A seeded permutation picks the
    // flipped samples first, then the outliers, so the two sets are
    // disjoint.
    const auto flip_count = static_cast<std::size_t>(
        std::llround(spec.flip_rate * static_cast<double>(n)));
    const auto outlier_count = static_cast<std::size_t>(
        std::llround(spec.outlier_rate * static_cast<double>(n)));
    Xoshiro256 noise_rng = Xoshiro256::stream(spec.seed, c + 1);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = n - 1; i > 0; --i) {
        const std::size_t j = noise_rng.uniform_index(i + 1);
        std::swap(order[i], order[j]);
    }

    for (std::size_t k = 0; k < flip_count; ++k) {
        const std::size_t idx = order[k];
        const int truth = data.true_labels[idx];
        // Uniform over the other C-1 classes; never the true label.
        auto wrong = static_cast<int>(noise_rng.uniform_index(c - 1));
        if (wrong >= truth) ++wrong;
        data.given_labels[idx] = wrong;
        data.noise_mask[idx] = 1;
    }
    for (std::size_t k = flip_count; k < flip_count + outlier_count; ++k) {
        const std::size_t idx = order[k];
        // An unrelated point filed under its original label.
        std::span<double> row(data.features.data() + idx * d, d);
        fill_unit_gaussian(noise_rng, row);
        data.noise_mask[idx] = 1;
    }
    return data;
}

void write_dataset_csv(std::ostream& out, const NoisyDataset& data) {
    out << "index,true_label,given_label,is_noise";
    for (std::size_t t = 0; t < data.dim; ++t) out << ",f" << t;
    out << '\n';
    for (std::size_t i = 0; i < data.size(); ++i) {
        out << i << ',' << data.true_labels[i] << ',' << data.given_labels[i] << ','
            << static_cast<int>(data.noise_mask[i]);
        const auto row = data.row(i);
        for (std::size_t t = 0; t < data.dim; ++t) out << ',' << g17(row[t]);
        out << '\n';
    }
}

}  // namespace sface
