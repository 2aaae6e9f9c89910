#include "sface/analysis.hpp"

#include <cmath>
#include <ostream>

#include "sface/errors.hpp"
#include "sface/geometry.hpp"
#include "sface/text.hpp"

namespace sface {

namespace {

constexpr double kDegPerRad = 180.0 / 3.14159265358979323846;

}  // namespace

AngleStats angle_stats(const EmbeddingBatch& embeddings, const CenterMatrix& centers,
                       std::span<const std::uint8_t> noise_mask) {
    require_same_dim(embeddings, centers);
    if (noise_mask.size() != embeddings.n) {
        throw DimensionMismatch("angle_stats: mask length != batch size");
    }
    if (centers.num_classes < 2) {
        throw DimensionMismatch("angle_stats: inter statistics need C >= 2");
    }

    double clean_sum = 0.0, noise_sum = 0.0;
    std::size_t clean_count = 0, noise_count = 0;
    for (std::size_t i = 0; i < embeddings.n; ++i) {
        const auto y = static_cast<std::size_t>(embeddings.labels[i]);
        const double theta = cosine_angle(embeddings.row(i), centers.col(y)).theta;
        if (noise_mask[i]) {
            noise_sum += theta;
            ++noise_count;
        } else {
            clean_sum += theta;
            ++clean_count;
        }
    }
    if (clean_count == 0) {
        throw DimensionMismatch("angle_stats: need at least one clean sample");
    }

    AngleStats stats;
    stats.clean_intra_deg = kDegPerRad * clean_sum / static_cast<double>(clean_count);
    if (noise_count > 0) {
        stats.noise_intra_deg = kDegPerRad * noise_sum / static_cast<double>(noise_count);
        stats.delta_intra_deg = *stats.noise_intra_deg - stats.clean_intra_deg;
    }

    // Center-vs-center angles over all unordered pairs; population std.
    const std::size_t c = centers.num_classes;
    const auto pair_count = static_cast<double>(c * (c - 1) / 2);
    double sum = 0.0;
    std::vector<double> pair_angles;
    pair_angles.reserve(c * (c - 1) / 2);
    for (std::size_t j = 0; j < c; ++j) {
        for (std::size_t k = j + 1; k < c; ++k) {
            const double theta = cosine_angle(centers.col(j), centers.col(k)).theta;
            pair_angles.push_back(theta);
            sum += theta;
        }
    }
    const double mean = sum / pair_count;
    double var = 0.0;
    for (const double theta : pair_angles) var += (theta - mean) * (theta - mean);
    stats.inter_mean_deg = kDegPerRad * mean;
    stats.inter_std_deg = kDegPerRad * std::sqrt(var / pair_count);
    return stats;
}

std::vector<SweepRow> noise_sweep(std::span<const SweepEntry> entries) {
    if (entries.empty()) throw InvalidSpec("noise_sweep: empty entry list");
    std::vector<SweepRow> rows;
    rows.reserve(entries.size());
    for (const auto& entry : entries) {
        const NoisyDataset data = generate(entry.dataset);
        const TrainResult result = train(data, entry.config);

        SweepRow row;
        row.noise_rate = entry.dataset.flip_rate + entry.dataset.outlier_rate;
        row.loss = loss_name(entry.config.loss);
        if (const auto* rescale = std::get_if<RescaleSpec>(&entry.config.loss)) {
            row.a = rescale->a;
            row.b = rescale->b;
        }
        row.stats = angle_stats(result.embeddings, result.centers, data.noise_mask);
        row.final_loss = result.trace.snapshots.back().loss;
        rows.push_back(std::move(row));
    }
    return rows;
}

namespace {

void write_optional(std::ostream& out, const std::optional<double>& value) {
    if (value) out << g17(*value);
}

}  // namespace

void write_sweep_csv(std::ostream& out, std::span<const SweepRow> rows) {
    out << "noise_rate,loss,a,b,clean_intra,noisy_intra,delta_intra,"
           "inter_mean,inter_std,final_loss\n";
    for (const auto& row : rows) {
        out << g17(row.noise_rate) << ',' << row.loss << ',';
        write_optional(out, row.a);
        out << ',';
        write_optional(out, row.b);
        out << ',' << g17(row.stats.clean_intra_deg) << ',';
        write_optional(out, row.stats.noise_intra_deg);
        out << ',';
        write_optional(out, row.stats.delta_intra_deg);
        out << ',' << g17(row.stats.inter_mean_deg) << ',' << g17(row.stats.inter_std_deg)
            << ',' << g17(row.final_loss) << '\n';
    }
}

void write_stats_csv(std::ostream& out, const AngleStats& stats) {
    out << "clean_intra,noisy_intra,delta_intra,inter_mean,inter_std\n";
    out << g17(stats.clean_intra_deg) << ',';
    write_optional(out, stats.noise_intra_deg);
    out << ',';
    write_optional(out, stats.delta_intra_deg);
    out << ',' << g17(stats.inter_mean_deg) << ',' << g17(stats.inter_std_deg) << '\n';
}

}  // namespace sface
