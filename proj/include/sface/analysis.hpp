#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "sface/batch.hpp"
#include "sface/trainer.hpp"

namespace sface {

/// Angle statistics in degrees. Intra angles are sample-to-own-center;
/// inter statistics are over all C(C-1)/2 center pairs (population
/// standard deviation).
struct AngleStats {
    double clean_intra_deg = 0.0;
    std::optional<double> noise_intra_deg;
    std::optional<double> delta_intra_deg;  // noise - clean when both exist
    double inter_mean_deg = 0.0;
    double inter_std_deg = 0.0;
};

/// noise_mask selects which samples count as noise; clean statistics
/// need at least one unmasked sample, inter statistics need C >= 2.
AngleStats angle_stats(const EmbeddingBatch& embeddings, const CenterMatrix& centers,
                       std::span<const std::uint8_t> noise_mask);

struct SweepEntry {
    DatasetSpec dataset;
    TrainConfig config;
};

struct SweepRow {
    double noise_rate = 0.0;  // flip + outlier
    std::string loss;
    std::optional<double> a, b;  // re-scale cutoffs where applicable
    AngleStats stats;
    double final_loss = 0.0;
};

/// Trains every configuration and collects its final-checkpoint angle
/// statistics. Row order matches input order; bitwise stable across
/// reruns with equal seeds.
std::vector<SweepRow> noise_sweep(std::span<const SweepEntry> entries);

/// CSV: `noise_rate,loss,a,b,clean_intra,noisy_intra,delta_intra,
/// inter_mean,inter_std,final_loss`. Optional fields render empty.
void write_sweep_csv(std::ostream& out, std::span<const SweepRow> rows);

/// CSV: `clean_intra,noisy_intra,delta_intra,inter_mean,inter_std`.
void write_stats_csv(std::ostream& out, const AngleStats& stats);

}  // namespace sface
