#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <variant>
#include <vector>

#include "sface/dataset.hpp"
#include "sface/margin_loss.hpp"
#include "sface/rescale.hpp"

namespace sface {

enum class Backbone { free_embedding, linear };

using LossSpec = std::variant<RescaleSpec, MarginSpec>;

std::string loss_name(const LossSpec& spec);

struct TrainConfig {
    LossSpec loss = RescaleSpec{};
    Backbone backbone = Backbone::free_embedding;
    std::size_t batch_size = 64;
    std::size_t total_steps = 2000;
    double lr = 0.1;
    std::vector<std::size_t> lr_decay_steps;  // strictly increasing, <= total_steps
    double lr_decay_factor = 0.1;
    std::uint64_t seed = 0;
    std::size_t snapshot_every = 0;  // 0 = once per epoch
    std::size_t embed_dim = 0;       // linear backbone output dim; 0 = input dim

    void validate(std::size_t dataset_size) const;  // throws InvalidSpec
};

/// Effective learning rate at 1-based step: lr * factor^(#decays <= step).
double learning_rate_at(const TrainConfig& cfg, std::size_t step);

struct TrainSnapshot {
    std::size_t step = 0;
    double loss = 0.0;  // batch loss at this step
    double clean_intra_deg = 0.0;
    std::optional<double> noisy_intra_deg;
    double inter_deg = 0.0;
    double max_norm_drift = 0.0;  // max relative drift of any x row / W column
    // Accumulated per-parameter tangent-update bound, and the worst
    // drift-minus-bound gap (meaningful for tangent losses on the
    // free-embedding backbone).
    double max_drift_bound = 0.0;
    double max_drift_excess = 0.0;
};

struct TrainTrace {
    std::vector<TrainSnapshot> snapshots;
};

struct TrainResult {
    CenterMatrix centers;
    EmbeddingBatch embeddings;    // final embeddings, given labels
    std::vector<double> linear_map;  // d_in x embed_dim, linear backbone only
    TrainTrace trace;
};

/// Mini-batch SGD over the centers and the embedding parameters.
/// Batches are epoch permutations without replacement; parameters are
/// never re-normalized between steps, so the recorded norm drift is the
/// raw consequence of the tangent updates. Deterministic per seed.
/// Throws DivergedLoss if the loss goes non-finite.
TrainResult train(const NoisyDataset& data, const TrainConfig& cfg);

/// Maximum relative norm drift over the snapshots of a trace.
double norm_drift(const TrainTrace& trace);

/// CSV: `step,loss,clean_intra_deg,noisy_intra_deg,inter_deg,max_norm_drift`.
/// Angles in degrees; noisy_intra_deg empty when the dataset has no noise.
void write_trace_csv(std::ostream& out, const TrainTrace& trace);

}  // namespace sface
