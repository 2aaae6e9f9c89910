#include "sface/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "sface/analysis.hpp"
#include "sface/errors.hpp"
#include "sface/geometry.hpp"
#include "sface/rng.hpp"
#include "sface/sface_loss.hpp"
#include "sface/text.hpp"

namespace sface {

namespace {

std::size_t class_count(const NoisyDataset& data) {
    int top = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        top = std::max({top, data.true_labels[i], data.given_labels[i]});
    }
    return static_cast<std::size_t>(top) + 1;
}

LossGradReport backward(const EmbeddingBatch& batch, const CenterMatrix& centers,
                        const LossSpec& loss) {
    if (const auto* rescale = std::get_if<RescaleSpec>(&loss)) {
        return sface_backward(batch, centers, *rescale);
    }
    return margin_backward(batch, centers, std::get<MarginSpec>(loss));
}

// Epoch-permutation batch sampler. Batches keep a constant size; an
// exhausted permutation is redrawn mid-batch, so no sample repeats
// within an epoch.
class BatchSampler {
public:
    BatchSampler(std::size_t n, Xoshiro256 rng) : n_(n), rng_(rng), order_(n) {
        std::iota(order_.begin(), order_.end(), std::size_t{0});
        reshuffle();
    }

    void fill(std::vector<std::size_t>& batch, std::size_t batch_size) {
        batch.clear();
        while (batch.size() < batch_size) {
            if (pos_ == n_) reshuffle();
            batch.push_back(order_[pos_++]);
        }
    }

private:
    void reshuffle() {
        for (std::size_t i = n_ - 1; i > 0; --i) {
            const std::size_t j = rng_.uniform_index(i + 1);
            std::swap(order_[i], order_[j]);
        }
        pos_ = 0;
    }

    std::size_t n_;
    Xoshiro256 rng_;
    std::vector<std::size_t> order_;
    std::size_t pos_ = 0;
};

}  // namespace

std::string loss_name(const LossSpec& spec) {
    if (const auto* rescale = std::get_if<RescaleSpec>(&spec)) {
        return "sface-" + to_string(rescale->family);
    }
    return to_string(std::get<MarginSpec>(spec).variant);
}

void TrainConfig::validate(std::size_t dataset_size) const {
    std::visit([](const auto& s) { s.validate(); }, loss);
    if (total_steps < 1) throw InvalidSpec("TrainConfig: total_steps must be >= 1");
    if (batch_size < 1 || batch_size > dataset_size) {
        throw InvalidSpec("TrainConfig: batch_size must lie in [1, dataset size]");
    }
    if (!(lr >= 0.0)) throw InvalidSpec("TrainConfig: lr must be nonnegative");
    if (!(lr_decay_factor > 0.0)) {
        throw InvalidSpec("TrainConfig: lr_decay_factor must be positive");
    }
    for (std::size_t i = 0; i < lr_decay_steps.size(); ++i) {
        if (lr_decay_steps[i] < 1 || lr_decay_steps[i] > total_steps) {
            throw InvalidSpec("TrainConfig: decay steps must lie in [1, total_steps]");
        }
        if (i > 0 && lr_decay_steps[i] <= lr_decay_steps[i - 1]) {
            throw InvalidSpec("TrainConfig: decay steps must be strictly increasing");
        }
    }
}

double learning_rate_at(const TrainConfig& cfg, std::size_t step) {
    std::size_t decays = 0;
    for (const std::size_t s : cfg.lr_decay_steps) {
        if (s <= step) ++decays;
    }
    double rate = cfg.lr;
    for (std::size_t i = 0; i < decays; ++i) rate *= cfg.lr_decay_factor;
    return rate;
}

TrainResult train(const NoisyDataset& data, const TrainConfig& cfg) {
    cfg.validate(data.size());
    const std::size_t n = data.size();
    const std::size_t d_in = data.dim;
    const std::size_t c = class_count(data);
    const bool linear = cfg.backbone == Backbone::linear;
    const std::size_t d = linear && cfg.embed_dim > 0 ? cfg.embed_dim : d_in;

    // Stream 0: center init. Stream 1: linear map init. Stream 2: batches.
    CenterMatrix centers(d, c);
    {
        Xoshiro256 rng = Xoshiro256::stream(cfg.seed, 0);
        for (std::size_t j = 0; j < c; ++j) {
            auto col = centers.col(j);
            for (double& v : col) v = rng.gaussian();
            const double cn = norm(col);
            for (double& v : col) v /= cn;
        }
    }

    std::vector<double> linear_map;  // d_in x d, row-major
    if (linear) {
        Xoshiro256 rng = Xoshiro256::stream(cfg.seed, 1);
        linear_map.resize(d_in * d);
        const double scale = 1.0 / std::sqrt(static_cast<double>(d_in));
        for (double& v : linear_map) v = scale * rng.gaussian();
    }

    // Free-embedding parameters start at the generated features; under
    // the linear backbone the embeddings are recomputed from the map.
    EmbeddingBatch embeddings(n, d);
    embeddings.labels = data.given_labels;
    auto refresh_embeddings = [&]() {
        if (!linear) return;
        for (std::size_t i = 0; i < n; ++i) {
            const auto z = data.row(i);
            auto x = embeddings.row(i);
            for (std::size_t t = 0; t < d; ++t) {
                double acc = 0.0;
                for (std::size_t r = 0; r < d_in; ++r) acc += linear_map[r * d + t] * z[r];
                x[t] = acc;
            }
        }
    };
    if (linear) {
        refresh_embeddings();
    } else {
        embeddings.features = data.features;
    }

    std::vector<double> init_x_norms(n), init_w_norms(c);
    for (std::size_t i = 0; i < n; ++i) init_x_norms[i] = norm(embeddings.row(i));
    for (std::size_t j = 0; j < c; ++j) init_w_norms[j] = norm(centers.col(j));

    // Accumulated per-parameter tangent bounds: sum of
    // lr^2 |g|^2 / (2 |v|^2) with the pre-update norm.
    std::vector<double> bound_x(n, 0.0), bound_w(c, 0.0);

    BatchSampler sampler(n, Xoshiro256::stream(cfg.seed, 2));
    const std::size_t epoch_len = std::max<std::size_t>(1, (n + cfg.batch_size - 1) / cfg.batch_size);
    const std::size_t snap_every = cfg.snapshot_every > 0 ? cfg.snapshot_every : epoch_len;

    TrainResult result;
    std::vector<std::size_t> batch_idx;
    std::vector<double> row_grad(d);
    EmbeddingBatch sub(cfg.batch_size, d);

    auto take_snapshot = [&](std::size_t step, double batch_loss) {
        refresh_embeddings();
        const AngleStats stats = angle_stats(embeddings, centers, data.noise_mask);
        TrainSnapshot snap;
        snap.step = step;
        snap.loss = batch_loss;
        snap.clean_intra_deg = stats.clean_intra_deg;
        snap.noisy_intra_deg = stats.noise_intra_deg;
        snap.inter_deg = stats.inter_mean_deg;
        double drift = 0.0, excess = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double rel = std::abs(norm(embeddings.row(i)) / init_x_norms[i] - 1.0);
            drift = std::max(drift, rel);
            if (!linear) excess = std::max(excess, rel - bound_x[i]);
        }
        for (std::size_t j = 0; j < c; ++j) {
            const double rel = std::abs(norm(centers.col(j)) / init_w_norms[j] - 1.0);
            drift = std::max(drift, rel);
            excess = std::max(excess, rel - bound_w[j]);
        }
        snap.max_norm_drift = drift;
        snap.max_drift_bound =
            std::max(linear ? 0.0 : *std::max_element(bound_x.begin(), bound_x.end()),
                     *std::max_element(bound_w.begin(), bound_w.end()));
        snap.max_drift_excess = excess;
        result.trace.snapshots.push_back(snap);
    };

    for (std::size_t step = 1; step <= cfg.total_steps; ++step) {
        const double rate = learning_rate_at(cfg, step);
        sampler.fill(batch_idx, cfg.batch_size);
        for (std::size_t k = 0; k < batch_idx.size(); ++k) {
            const std::size_t gi = batch_idx[k];
            if (linear) {
                const auto z = data.row(gi);
                auto x = sub.row(k);
                for (std::size_t t = 0; t < d; ++t) {
                    double acc = 0.0;
                    for (std::size_t r = 0; r < d_in; ++r) {
                        acc += linear_map[r * d + t] * z[r];
                    }
                    x[t] = acc;
                }
            } else {
                std::copy_n(embeddings.row(gi).data(), d, sub.row(k).data());
            }
            sub.labels[k] = data.given_labels[gi];
        }

        const LossGradReport report = backward(sub, centers, cfg.loss);
        if (!std::isfinite(report.loss)) {
            throw DivergedLoss("train: loss became non-finite at step " +
                               std::to_string(step));
        }

        if (linear) {
            // Chain through x = A^T z: dL/dA[r][t] = sum_k z_k[r] g_k[t].
            for (std::size_t k = 0; k < batch_idx.size(); ++k) {
                const auto z = data.row(batch_idx[k]);
                const auto g = report.grad_x_row(k);
                for (std::size_t r = 0; r < d_in; ++r) {
                    const double zr = z[r];
                    double* arow = linear_map.data() + r * d;
                    for (std::size_t t = 0; t < d; ++t) arow[t] -= rate * zr * g[t];
                }
            }
        } else {
            // A batch that straddles an epoch boundary can carry the same
            // sample twice; its gradients are summed and applied as one
            // update so the per-step tangent norm law stays exact.
            for (std::size_t k = 0; k < batch_idx.size(); ++k) {
                const std::size_t gi = batch_idx[k];
                bool first = true;
                for (std::size_t m = 0; m < k; ++m) {
                    if (batch_idx[m] == gi) {
                        first = false;
                        break;
                    }
                }
                if (!first) continue;
                row_grad.assign(d, 0.0);
                for (std::size_t m = k; m < batch_idx.size(); ++m) {
                    if (batch_idx[m] != gi) continue;
                    const auto g = report.grad_x_row(m);
                    for (std::size_t t = 0; t < d; ++t) row_grad[t] += g[t];
                }
                auto x = embeddings.row(gi);
                const double gn2 = dot(row_grad, row_grad);
                const double xn2 = dot(x, x);
                bound_x[gi] += rate * rate * gn2 / (2.0 * xn2);
                for (std::size_t t = 0; t < d; ++t) x[t] -= rate * row_grad[t];
            }
        }
        for (std::size_t j = 0; j < c; ++j) {
            const auto g = report.grad_w_col(j);
            auto w = centers.col(j);
            const double gn2 = dot(g, g);
            const double wn2 = dot(w, w);
            bound_w[j] += rate * rate * gn2 / (2.0 * wn2);
            for (std::size_t t = 0; t < d; ++t) w[t] -= rate * g[t];
        }

        if (step % snap_every == 0 || step == cfg.total_steps) {
            take_snapshot(step, report.loss);
        }
    }

    refresh_embeddings();
    result.centers = std::move(centers);
    result.embeddings = std::move(embeddings);
    result.linear_map = std::move(linear_map);
    return result;
}

double norm_drift(const TrainTrace& trace) {
    if (trace.snapshots.empty()) {
        throw InvalidSpec("norm_drift: trace has no snapshots");
    }
    double worst = 0.0;
    for (const auto& snap : trace.snapshots) {
        worst = std::max(worst, snap.max_norm_drift);
    }
    return worst;
}

void write_trace_csv(std::ostream& out, const TrainTrace& trace) {
    out << "step,loss,clean_intra_deg,noisy_intra_deg,inter_deg,max_norm_drift\n";
    for (const auto& s : trace.snapshots) {
        out << s.step << ',' << g17(s.loss) << ',' << g17(s.clean_intra_deg) << ',';
        if (s.noisy_intra_deg) out << g17(*s.noisy_intra_deg);
        out << ',' << g17(s.inter_deg) << ',' << g17(s.max_norm_drift) << '\n';
    }
}

}  // namespace sface
