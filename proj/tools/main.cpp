// Command-line front end: wires key=value run configs and flag overrides
// to the library modules and emits the CSV artifacts.
//
// Exit codes: 0 success, 1 tolerance violation, 2 configuration error,
// 3 I/O failure, 4 numerical divergence.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sface/analysis.hpp"
#include "sface/errors.hpp"
#include "sface/fd_oracle.hpp"
#include "sface/geometry.hpp"
#include "sface/margin_loss.hpp"
#include "sface/rng.hpp"
#include "sface/sface_loss.hpp"
#include "sface/text.hpp"
#include "sface/trainer.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitTolerance = 1;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitDiverged = 4;

struct IoError : std::runtime_error {
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

std::ofstream open_output(const std::string& path) {
    const std::filesystem::path p(path);
    if (p.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(p.parent_path(), ec);
    }
    std::ofstream out(path);
    if (!out) throw IoError("cannot open output file: " + path);
    return out;
}

std::string join_path(const std::string& dir, const std::string& name) {
    return (std::filesystem::path(dir) / name).string();
}

// Option bundles shared by several subcommands.

struct RescaleOpts {
    std::string family = "sigmoid";
    double s = 64.0, k = 80.0, a = 0.90, b = 1.20;

    void attach(CLI::App* cmd) {
        cmd->add_option("--family", family, "Re-scale family: sigmoid|piecewise|constant")
            ->check(CLI::IsMember({"sigmoid", "piecewise", "constant"}));
        cmd->add_option("--s", s, "Gradient scale (upper asymptote)");
        cmd->add_option("--k", k, "Sigmoid slope");
        cmd->add_option("--a", a, "Intra-class cutoff angle (radians)");
        cmd->add_option("--b", b, "Inter-class cutoff angle (radians)");
    }
    sface::RescaleSpec spec() const {
        return {sface::rescale_family_from_string(family), s, k, a, b};
    }
};

struct MarginOpts {
    double m = 0.35;
    double m1 = 0.9, m2 = 0.4, m3 = 0.15;

    void attach(CLI::App* cmd) {
        cmd->add_option("--m", m, "Additive margin (cosface/arcface)");
        cmd->add_option("--m1", m1, "Combined-margin multiplier");
        cmd->add_option("--m2", m2, "Combined-margin additive angle");
        cmd->add_option("--m3", m3, "Combined-margin cosine offset");
    }
    sface::MarginSpec spec(sface::MarginVariant variant, double s) const {
        sface::MarginSpec out;
        out.variant = variant;
        out.s = s;
        out.m = m;
        out.m1 = m1;
        out.m2 = m2;
        out.m3 = m3;
        return out;
    }
};

struct DatasetOpts {
    std::size_t classes = 10, per_class = 100, dim = 16;
    double concentration = 120.0, flip_rate = 0.0, outlier_rate = 0.0;
    std::uint64_t seed = 0;

    void attach(CLI::App* cmd) {
        cmd->add_option("--classes", classes, "Number of classes");
        cmd->add_option("--per-class", per_class, "Samples per class");
        cmd->add_option("--dim", dim, "Feature dimension");
        cmd->add_option("--concentration", concentration, "Within-class concentration");
        cmd->add_option("--flip-rate", flip_rate, "Label-flip noise rate");
        cmd->add_option("--outlier-rate", outlier_rate, "Outlier noise rate");
        cmd->add_option("--data-seed", seed, "Dataset seed");
    }
    sface::DatasetSpec spec() const {
        sface::DatasetSpec out;
        out.num_classes = classes;
        out.per_class = per_class;
        out.dim = dim;
        out.concentration = concentration;
        out.flip_rate = flip_rate;
        out.outlier_rate = outlier_rate;
        out.seed = seed;
        return out;
    }
};

struct TrainOpts {
    std::string loss = "sface-sigmoid";
    std::string backbone = "free";
    std::size_t batch = 64, steps = 2000, snapshot_every = 0, embed_dim = 0;
    double lr = 0.1, decay_factor = 0.1;
    std::vector<std::size_t> decay_steps;
    std::uint64_t seed = 0;
    RescaleOpts rescale;
    MarginOpts margin;

    void attach(CLI::App* cmd) {
        cmd->add_option("--loss", loss,
                        "Loss: sface-sigmoid|sface-piecewise|sface-constant|"
                        "softmax|nsoftmax|cosface|arcface|combined")
            ->check(CLI::IsMember({"sface-sigmoid", "sface-piecewise", "sface-constant",
                                   "softmax", "nsoftmax", "cosface", "arcface",
                                   "combined"}));
        cmd->add_option("--backbone", backbone, "Backbone: free|linear")
            ->check(CLI::IsMember({"free", "linear"}));
        cmd->add_option("--batch", batch, "Mini-batch size");
        cmd->add_option("--steps", steps, "Total SGD steps");
        cmd->add_option("--lr", lr, "Initial learning rate");
        cmd->add_option("--decay-steps", decay_steps, "Steps at which lr is multiplied");
        cmd->add_option("--decay-factor", decay_factor, "Learning-rate decay factor");
        cmd->add_option("--train-seed", seed, "Training seed");
        cmd->add_option("--snapshot-every", snapshot_every,
                        "Snapshot cadence in steps (0 = once per epoch)");
        cmd->add_option("--embed-dim", embed_dim, "Linear-backbone output dim (0 = input dim)");
        cmd->add_option("--s", rescale.s, "Loss scale s");
        cmd->add_option("--k", rescale.k, "Sigmoid slope k");
        cmd->add_option("--a", rescale.a, "Intra cutoff a (radians)");
        cmd->add_option("--b", rescale.b, "Inter cutoff b (radians)");
        margin.attach(cmd);
    }

    sface::LossSpec loss_spec() const {
        if (loss == "sface-sigmoid" || loss == "sface-piecewise" || loss == "sface-constant") {
            RescaleOpts opts = rescale;
            opts.family = loss.substr(6);
            return opts.spec();
        }
        return margin.spec(sface::margin_variant_from_string(loss), rescale.s);
    }

    sface::TrainConfig config() const {
        sface::TrainConfig cfg;
        cfg.loss = loss_spec();
        cfg.backbone = backbone == "linear" ? sface::Backbone::linear
                                            : sface::Backbone::free_embedding;
        cfg.batch_size = batch;
        cfg.total_steps = steps;
        cfg.lr = lr;
        cfg.lr_decay_steps = decay_steps;
        cfg.lr_decay_factor = decay_factor;
        cfg.seed = seed;
        cfg.snapshot_every = snapshot_every;
        cfg.embed_dim = embed_dim;
        return cfg;
    }
};

// ---- curves ---------------------------------------------------------------

int run_curves(const RescaleOpts& opts, std::size_t points, const std::string& path) {
    const auto table = sface::v_curves(opts.spec(), points);
    auto out = open_output(path);
    sface::write_v_curves_csv(out, table);
    if (!out) throw IoError("write failed: " + path);
    std::printf("wrote %s (%zu rows)\n", path.c_str(), table.size());
    return kExitOk;
}

// ---- gradcheck ------------------------------------------------------------

// Frozen-coefficient loss for the SFace check: the re-scale factors are
// pinned at the unperturbed angles, matching the block-gradient contract.
sface::LossFn frozen_sface_loss(const sface::EmbeddingBatch& batch,
                                const sface::CenterMatrix& centers,
                                const sface::RescaleSpec& spec) {
    std::vector<double> coeff(batch.n * centers.num_classes);
    for (std::size_t i = 0; i < batch.n; ++i) {
        for (std::size_t j = 0; j < centers.num_classes; ++j) {
            const double theta = sface::cosine_angle(batch.row(i), centers.col(j)).theta;
            coeff[i * centers.num_classes + j] =
                j == static_cast<std::size_t>(batch.labels[i]) ? -sface::r_intra(theta, spec)
                                                               : sface::r_inter(theta, spec);
        }
    }
    return [coeff](const sface::EmbeddingBatch& b, const sface::CenterMatrix& w) {
        double total = 0.0;
        for (std::size_t i = 0; i < b.n; ++i) {
            for (std::size_t j = 0; j < w.num_classes; ++j) {
                total += coeff[i * w.num_classes + j] *
                         sface::cosine_angle(b.row(i), w.col(j)).cosine;
            }
        }
        return total / static_cast<double>(b.n);
    };
}

sface::EmbeddingBatch random_batch(sface::Xoshiro256& rng, std::size_t n, std::size_t d,
                                   std::size_t c) {
    sface::EmbeddingBatch batch(n, d);
    for (double& v : batch.features) v = rng.gaussian();
    for (auto& label : batch.labels) label = static_cast<int>(rng.uniform_index(c));
    return batch;
}

sface::CenterMatrix random_centers(sface::Xoshiro256& rng, std::size_t d, std::size_t c) {
    sface::CenterMatrix centers(d, c);
    for (double& v : centers.data) v = rng.gaussian();
    return centers;
}

int run_gradcheck(std::uint64_t seed, std::size_t instances, std::size_t n, std::size_t c,
                  std::size_t d, double step, double tol, const RescaleOpts& rescale,
                  double margin_m, const std::string& diag_path) {
    const sface::RescaleSpec rspec = rescale.spec();
    const sface::FDConfig frozen_cfg{step, sface::FDMode::frozen_rescale};
    const sface::FDConfig full_cfg{step, sface::FDMode::full};

    double worst_sface = 0.0;
    std::uint64_t instance_seed = seed;
    for (std::size_t i = 0; i < instances; ++i, ++instance_seed) {
        sface::Xoshiro256 rng(instance_seed);
        const auto batch = random_batch(rng, n, d, c);
        const auto centers = random_centers(rng, d, c);
        const auto report = sface::sface_backward(batch, centers, rspec);
        const auto fd = sface::fd_grad(frozen_sface_loss(batch, centers, rspec), batch,
                                       centers, frozen_cfg);
        worst_sface = std::max({worst_sface,
                                sface::max_rel_deviation(report.grad_x, fd.grad_x),
                                sface::max_rel_deviation(report.grad_w, fd.grad_w)});
        if (i == 0 && !diag_path.empty()) {
            auto out = open_output(diag_path);
            sface::write_loss_diag_csv(out, report);
        }
    }
    std::printf("sface frozen-fd max_rel_err %s\n", sface::g17(worst_sface).c_str());

    double worst_margin = 0.0;
    for (const auto variant : {sface::MarginVariant::nsoftmax, sface::MarginVariant::cosface,
                               sface::MarginVariant::arcface}) {
        sface::MarginSpec mspec;
        mspec.variant = variant;
        mspec.s = rescale.s;
        mspec.m = variant == sface::MarginVariant::nsoftmax ? 0.0 : margin_m;
        double worst = 0.0;
        std::uint64_t candidate = seed;
        for (std::size_t i = 0; i < instances; ++i) {
            sface::EmbeddingBatch batch;
            sface::CenterMatrix centers;
            for (;; ++candidate) {
                sface::Xoshiro256 rng(candidate);
                batch = random_batch(rng, n, d, c);
                centers = random_centers(rng, d, c);
                if (sface::margin_domain_satisfied(batch, centers, mspec, 0.05)) break;
            }
            ++candidate;
            const auto report = sface::margin_backward(batch, centers, mspec);
            const auto fd = sface::fd_grad(
                [&mspec](const sface::EmbeddingBatch& b, const sface::CenterMatrix& w) {
                    return sface::margin_forward(b, w, mspec);
                },
                batch, centers, full_cfg);
            worst = std::max({worst, sface::max_rel_deviation(report.grad_x, fd.grad_x),
                              sface::max_rel_deviation(report.grad_w, fd.grad_w)});
        }
        std::printf("%s full-fd max_rel_err %s\n", sface::to_string(variant).c_str(),
                    sface::g17(worst).c_str());
        worst_margin = std::max(worst_margin, worst);
    }

    const double worst = std::max(worst_sface, worst_margin);
    std::printf("max_rel_err %s (tolerance %s)\n", sface::g17(worst).c_str(),
                sface::g17(tol).c_str());
    return worst <= tol ? kExitOk : kExitTolerance;
}

// ---- equivalence ----------------------------------------------------------

int run_equivalence(const std::string& variant_name, double s, const MarginOpts& margin,
                    std::size_t n, std::size_t c, std::size_t d, std::uint64_t seed,
                    double tol, const std::string& path) {
    const auto variant = sface::margin_variant_from_string(variant_name);
    const auto spec = margin.spec(variant, s);

    std::uint64_t candidate = seed;
    sface::EmbeddingBatch batch;
    sface::CenterMatrix centers;
    for (;; ++candidate) {
        sface::Xoshiro256 rng(candidate);
        batch = random_batch(rng, n, d, c);
        centers = random_centers(rng, d, c);
        if (sface::margin_domain_satisfied(batch, centers, spec, 0.05)) break;
    }
    const double deviation = sface::equivalence_report(batch, centers, spec);

    const std::string record = variant_name + "," + std::to_string(n) + "," +
                               std::to_string(c) + "," + std::to_string(d) + "," +
                               std::to_string(seed) + "," + sface::g17(deviation);
    if (path.empty()) {
        std::printf("variant,n,c,d,seed,max_relative_deviation\n%s\n", record.c_str());
    } else {
        auto out = open_output(path);
        out << "variant,n,c,d,seed,max_relative_deviation\n" << record << '\n';
        std::printf("wrote %s\n", path.c_str());
    }
    return deviation <= tol ? kExitOk : kExitTolerance;
}

// ---- train / stats --------------------------------------------------------

int run_train(const DatasetOpts& dataset, const TrainOpts& training,
              const std::string& trace_path, const std::string& dataset_path,
              const std::string& stats_path) {
    const auto data = sface::generate(dataset.spec());
    if (!dataset_path.empty()) {
        auto out = open_output(dataset_path);
        sface::write_dataset_csv(out, data);
        std::printf("wrote %s\n", dataset_path.c_str());
    }
    const auto result = sface::train(data, training.config());
    if (!trace_path.empty()) {
        auto out = open_output(trace_path);
        sface::write_trace_csv(out, result.trace);
        std::printf("wrote %s (%zu snapshots)\n", trace_path.c_str(),
                    result.trace.snapshots.size());
    }
    if (!stats_path.empty()) {
        const auto stats =
            sface::angle_stats(result.embeddings, result.centers, data.noise_mask);
        auto out = open_output(stats_path);
        sface::write_stats_csv(out, stats);
        std::printf("wrote %s\n", stats_path.c_str());
    }
    return kExitOk;
}

// ---- sweep ----------------------------------------------------------------

// Noise rates map onto the flip/outlier split the same way the
// noise-controlled databases are built: the first 10% of noise is label
// flips, anything beyond that is outliers.
void split_noise_rate(double rate, double& flip, double& outlier) {
    flip = std::min(rate, 0.1);
    outlier = rate - flip;
}

int run_sweep(const DatasetOpts& dataset, const TrainOpts& training,
              const std::vector<double>& noise_rates, const std::vector<double>& a_values,
              const std::vector<std::uint64_t>& seeds, const std::string& path) {
    std::vector<sface::SweepEntry> entries;
    const bool is_rescale =
        std::holds_alternative<sface::RescaleSpec>(training.loss_spec());
    const std::vector<double> a_grid =
        is_rescale && !a_values.empty() ? a_values
        : is_rescale ? std::vector<double>{training.rescale.a}
                     : std::vector<double>{0.0};

    for (const double rate : noise_rates) {
        for (const std::uint64_t seed : seeds) {
            for (const double a : a_grid) {
                sface::SweepEntry entry;
                entry.dataset = dataset.spec();
                split_noise_rate(rate, entry.dataset.flip_rate, entry.dataset.outlier_rate);
                entry.dataset.seed = seed;
                entry.config = training.config();
                if (is_rescale) {
                    auto& spec = std::get<sface::RescaleSpec>(entry.config.loss);
                    spec.a = a;
                }
                entries.push_back(std::move(entry));
            }
        }
    }
    const auto rows = sface::noise_sweep(entries);
    auto out = open_output(path);
    sface::write_sweep_csv(out, rows);
    std::printf("wrote %s (%zu rows)\n", path.c_str(), rows.size());
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hypersphere-loss laboratory: gradient-exact losses, "
                 "noisy-label training harness, CSV artifacts"};
    app.require_subcommand(1);

    std::string out_dir = ".";
    app.add_option("--out-dir", out_dir, "Default output directory")
        ->envname("SFACE_OUT_DIR");
    app.set_config("--config", "",
                   "Run configuration file: key=value lines in a [subcommand] section");
    app.allow_config_extras(false);  // unknown keys rejected

    // curves
    auto* curves = app.add_subcommand("curves", "Emit v_intra/v_inter curve table");
    curves->fallthrough();
    RescaleOpts curves_rescale;
    curves_rescale.attach(curves);
    std::size_t curve_points = 1001;
    std::string curves_out;
    curves->add_option("--points", curve_points, "Number of theta samples");
    curves->add_option("--output", curves_out, "Output CSV path");

    // gradcheck
    auto* gradcheck = app.add_subcommand(
        "gradcheck", "Check analytic gradients against the finite-difference oracle");
    gradcheck->fallthrough();
    RescaleOpts grad_rescale;
    grad_rescale.attach(gradcheck);
    std::uint64_t grad_seed = 11;
    std::size_t grad_instances = 1, grad_n = 8, grad_c = 5, grad_d = 16;
    double grad_step = 1e-6, grad_tol = 1e-5, grad_margin = 0.35;
    std::string grad_diag;
    gradcheck->add_option("--seed", grad_seed, "Base instance seed");
    gradcheck->add_option("--instances", grad_instances, "Number of random instances");
    gradcheck->add_option("--n", grad_n, "Batch size per instance");
    gradcheck->add_option("--classes", grad_c, "Classes per instance");
    gradcheck->add_option("--dim", grad_d, "Feature dimension");
    gradcheck->add_option("--step", grad_step, "Finite-difference half step");
    gradcheck->add_option("--tol", grad_tol, "Max relative error tolerance");
    gradcheck->add_option("--margin-m", grad_margin, "Margin for cosface/arcface checks");
    gradcheck->add_option("--diag", grad_diag, "Optional per-sample diagnostic CSV path");

    // equivalence
    auto* equivalence = app.add_subcommand(
        "equivalence", "Compare chain-rule and re-scaled metric-form gradients");
    equivalence->fallthrough();
    std::string eq_variant = "nsoftmax";
    double eq_s = 64.0, eq_tol = -1.0;
    std::size_t eq_n = 8, eq_c = 5, eq_d = 16;
    std::uint64_t eq_seed = 11;
    std::string eq_out;
    MarginOpts eq_margin;
    equivalence->add_option("--variant", eq_variant, "nsoftmax|cosface|arcface|combined")
        ->check(CLI::IsMember({"nsoftmax", "cosface", "arcface", "combined"}));
    equivalence->add_option("--s", eq_s, "Logit scale");
    eq_margin.attach(equivalence);
    equivalence->add_option("--n", eq_n, "Batch size");
    equivalence->add_option("--classes", eq_c, "Classes");
    equivalence->add_option("--dim", eq_d, "Feature dimension");
    equivalence->add_option("--seed", eq_seed, "Instance seed");
    equivalence->add_option("--tol", eq_tol,
                            "Deviation tolerance (default 1e-10; 1e-9 for arcface/combined)");
    equivalence->add_option("--output", eq_out, "Output CSV path (default stdout)");

    // train
    auto* train_cmd = app.add_subcommand("train", "Train on a synthetic noisy dataset");
    train_cmd->fallthrough();
    DatasetOpts train_data;
    TrainOpts train_opts;
    train_data.attach(train_cmd);
    train_opts.attach(train_cmd);
    std::string trace_out, dataset_out, stats_out;
    train_cmd->add_option("--trace", trace_out, "Trace CSV path");
    train_cmd->add_option("--dataset-out", dataset_out, "Optional dataset CSV path");
    train_cmd->add_option("--stats-out", stats_out, "Optional final angle-stats CSV path");

    // sweep
    auto* sweep_cmd = app.add_subcommand("sweep", "Noise-level / cutoff sweep");
    sweep_cmd->fallthrough();
    DatasetOpts sweep_data;
    TrainOpts sweep_opts;
    sweep_data.attach(sweep_cmd);
    sweep_opts.attach(sweep_cmd);
    std::vector<double> sweep_noise{0.0, 0.1, 0.2};
    std::vector<double> sweep_a;
    std::vector<std::uint64_t> sweep_seeds{101};
    std::string sweep_out;
    sweep_cmd->add_option("--noise-rates", sweep_noise, "Total noise rates to sweep");
    sweep_cmd->add_option("--a-values", sweep_a, "Intra-cutoff grid (sface losses)");
    sweep_cmd->add_option("--seeds", sweep_seeds, "Dataset seeds to sweep");
    sweep_cmd->add_option("--output", sweep_out, "Output CSV path");

    // stats
    auto* stats_cmd = app.add_subcommand("stats", "Train and emit final angle statistics");
    stats_cmd->fallthrough();
    DatasetOpts stats_data;
    TrainOpts stats_opts;
    stats_data.attach(stats_cmd);
    stats_opts.attach(stats_cmd);
    std::string stats_csv;
    stats_cmd->add_option("--output", stats_csv, "Output CSV path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (curves->parsed()) {
            if (curves_out.empty()) curves_out = join_path(out_dir, "curves.csv");
            return run_curves(curves_rescale, curve_points, curves_out);
        }
        if (gradcheck->parsed()) {
            return run_gradcheck(grad_seed, grad_instances, grad_n, grad_c, grad_d,
                                 grad_step, grad_tol, grad_rescale, grad_margin, grad_diag);
        }
        if (equivalence->parsed()) {
            if (eq_tol < 0.0) {
                eq_tol = (eq_variant == "arcface" || eq_variant == "combined") ? 1e-9 : 1e-10;
            }
            return run_equivalence(eq_variant, eq_s, eq_margin, eq_n, eq_c, eq_d, eq_seed,
                                   eq_tol, eq_out);
        }
        if (train_cmd->parsed()) {
            if (trace_out.empty()) trace_out = join_path(out_dir, "trace.csv");
            return run_train(train_data, train_opts, trace_out, dataset_out, stats_out);
        }
        if (sweep_cmd->parsed()) {
            if (sweep_out.empty()) sweep_out = join_path(out_dir, "sweep.csv");
            return run_sweep(sweep_data, sweep_opts, sweep_noise, sweep_a, sweep_seeds,
                             sweep_out);
        }
        if (stats_cmd->parsed()) {
            if (stats_csv.empty()) stats_csv = join_path(out_dir, "stats.csv");
            return run_train(stats_data, stats_opts, "", "", stats_csv);
        }
    } catch (const IoError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitIo;
    } catch (const sface::NonFiniteLoss& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitDiverged;
    } catch (const sface::DivergedLoss& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitDiverged;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitConfig;
    }
    return kExitOk;
}
