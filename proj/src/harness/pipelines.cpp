#include "morse/harness/pipelines.hpp"

#include <cmath>
#include <filesystem>
#include <iostream>
#include <map>
#include <set>

#include <json.hpp>

#include "morse/harness/checkpoint.hpp"
#include "morse/harness/csv.hpp"

namespace morse::harness {

using nlohmann::json;

namespace {

std::string prepare_output(const ExperimentConfig& config) {
    std::error_code ec;
    std::filesystem::create_directories(config.output_dir, ec);
    if (ec) throw ConfigError("cannot create output directory " + config.output_dir + ": " + ec.message());
    return config.output_dir;
}

std::string join_path(const std::string& dir, const std::string& file) {
    return (std::filesystem::path(dir) / file).string();
}

json mask_json(const InputMask& m) {
    return json{{"x_anchor", m.use_x_anchor}, {"z_anchor", m.use_z_anchor}, {"t_anchor", m.use_t_anchor}};
}

CsvTable loss_table(const std::vector<double>& loss) {
    CsvTable t({"iteration", "loss"});
    for (std::size_t i = 0; i < loss.size(); ++i) {
        t.add_row({format_number(static_cast<long long>(i)), format_number(loss[i])});
    }
    return t;
}

MlpDenoiser load_mlp_dash(const ExperimentConfig& config, const std::optional<std::string>& path,
                          const NoiseSchedule<double>& sched) {
    if (!path) throw ConfigError("an MLP Dash needs --dash-ckpt");
    const Checkpoint ckpt = load_checkpoint(*path, CheckpointKind::DashMlp);
    MlpDenoiser dash = dash_from_checkpoint(ckpt, sched);
    if (dash.dim() != config.dataset.dim) throw ConfigError("dash checkpoint dimension does not match the dataset");
    return dash;
}

std::string ratio_label(double ratio) { return "morse_r" + format_number(ratio); }

// The Dot used by sample and bench, owning whatever it borrows from.
struct DotHandle {
    std::unique_ptr<DotEstimator> dot;
};

DotHandle make_dot(const ExperimentConfig& config, const DotSource& source, const DashEstimator& dash,
                   const NoiseSchedule<double>& sched) {
    DotHandle h;
    if (source.oracle) {
        h.dot = std::make_unique<OracleDot>(dash);
        return h;
    }
    const Checkpoint ckpt = load_checkpoint(*source.checkpoint, CheckpointKind::SharedDot);
    auto dot = std::make_unique<SharedDot>(dot_from_checkpoint(ckpt, sched));
    if (dot->dim() != config.dataset.dim) throw ConfigError("dot checkpoint dimension does not match the dataset");
    if (const auto* mlp = dynamic_cast<const MlpDenoiser*>(&dash)) {
        if (mlp->net().parameter_count() != dot->base().parameter_count() || mlp->net().pack() != dot->base().pack()) {
            throw IntegrityError("dot checkpoint was not built on the given Dash checkpoint");
        }
    }
    h.dot = std::move(dot);
    return h;
}

}  // namespace

std::unique_ptr<DashEstimator> load_dash(const ExperimentConfig& config,
                                         const std::optional<std::string>& dash_checkpoint) {
    const auto sched = config.make_schedule();
    if (config.dash.kind == DashKind::Analytic) {
        const auto data = config.make_dataset();
        const auto spec = data->gaussian();
        if (!spec) throw ConfigError("the analytic Dash needs a Gaussian dataset");
        return std::make_unique<AnalyticGaussianDash>(*spec, sched);
    }
    return std::make_unique<MlpDenoiser>(load_mlp_dash(config, dash_checkpoint, sched));
}

TrainDashResult run_train_dash(const ExperimentConfig& config) {
    if (config.dash.kind != DashKind::Mlp) throw ConfigError("train-dash needs dash.kind = \"mlp\"");
    const std::string out = prepare_output(config);
    const auto sched = config.make_schedule();
    const auto data = config.make_dataset();
    NoiseStream init(derive_seed(config.seed, SeedPurpose::Init, 0));
    MlpDenoiser dash = MlpDenoiser::random(config.dash.shape, sched.T(), init);

    TrainDashResult r;
    r.report = train_dash(*data, sched, dash, config.train_dash);
    r.checkpoint = join_path(out, "dash.ckpt");
    r.loss_csv = join_path(out, "dash_loss.csv");
    save_checkpoint(r.checkpoint,
                    dash_checkpoint(dash, sched, config.seed, static_cast<std::uint64_t>(config.train_dash.iterations)));
    loss_table(r.report.loss).save(r.loss_csv);
    return r;
}

TrainDotResult run_train_dot(const ExperimentConfig& config, const std::string& dash_path) {
    if (config.dash.kind != DashKind::Mlp) throw ConfigError("train-dot needs dash.kind = \"mlp\"");
    const auto sched = config.make_schedule();
    const MlpDenoiser dash = load_mlp_dash(config, dash_path, sched);
    const std::string out = prepare_output(config);
    const auto data = config.make_dataset();

    auto train_one = [&](const InputMask& mask) {
        SharedDotOptions options = config.dot.options;
        options.mask = mask;
        NoiseStream init(derive_seed(config.seed, SeedPurpose::Init, 1));
        SharedDot dot = SharedDot::build(dash, options, init);
        DotTrainReport report = train_dot(dash, dot, *data, sched, config.train_dot.train);
        return std::make_pair(std::move(dot), std::move(report));
    };

    TrainDotResult r;
    auto [dot, report] = train_one(config.dot.options.mask);
    r.report = std::move(report);
    r.masks.push_back({config.dot.options.mask, r.report.validation});
    for (const InputMask& m : config.train_dot.ablation_masks) {
        r.masks.push_back({m, train_one(m).second.validation});
    }

    r.checkpoint = join_path(out, "dot.ckpt");
    r.loss_csv = join_path(out, "dot_loss.csv");
    r.validation_json = join_path(out, "dot_validation.json");
    save_checkpoint(r.checkpoint, dot_checkpoint(dot, sched, config.seed,
                                                 static_cast<std::uint64_t>(config.train_dot.train.iterations)));
    loss_table(r.report.loss).save(r.loss_csv);

    json masks = json::array();
    for (const auto& m : r.masks) {
        masks.push_back({{"mask", mask_json(m.mask)},
                         {"zero_predictor_mse", m.validation.zero_mse},
                         {"trained_mse", m.validation.trained_mse}});
    }
    const json report_json{{"mask", mask_json(config.dot.options.mask)},
                           {"zero_predictor_mse", r.report.validation.zero_mse},
                           {"trained_mse", r.report.validation.trained_mse},
                           {"validation_examples", r.report.validation.examples},
                           {"seed", config.seed},
                           {"iterations", config.train_dot.train.iterations},
                           {"trainable_parameters", dot.trainable_parameter_count()},
                           {"base_parameters", dot.base_parameter_count()},
                           {"masks", masks}};
    write_text(r.validation_json, report_json.dump(2) + "\n");
    return r;
}

SampleRunResult run_sample(const ExperimentConfig& config, const std::optional<std::string>& dash_checkpoint,
                           const DotSource& dot_source) {
    const auto sched = config.make_schedule();
    const auto dash = load_dash(config, dash_checkpoint);
    const std::string out = prepare_output(config);
    const int threads = resolve_threads(config.threads);
    const int latency = config.sample.latency;
    if (latency > sched.T()) throw ConfigError("sample.latency exceeds T");

    SampleRunResult r;
    if (dot_source.present()) {
        const DotHandle dot = make_dot(config, dot_source, *dash, sched);
        const ExchangePlan plan = plan_exchange_ratio(latency, config.morse.exchanged_ratios.front(),
                                                      config.morse.speed_ratio);
        const int steps = plan.dash_steps + plan.dot_steps;
        if (steps > sched.T()) throw ConfigError("Morse step count exceeds T");
        const MorseSchedule schedule =
            build_morse_schedule(select_time_grid(sched.T(), steps), plan.dash_steps, config.morse.speed_ratio);
        r.samples = sample_chains(dash->dim(), config.sample.chains, config.seed, threads, [&](std::span<NoiseStream> s) {
            return morse_sample(*dash, *dot.dot, schedule, config.sampler, config.morse.chain, sched, s, false).samples;
        });
        r.latency = lsd_cost(schedule);
        r.label = ratio_label(config.morse.exchanged_ratios.front());
    } else {
        const TimeGrid grid = select_time_grid(sched.T(), latency);
        r.samples = sample_chains(dash->dim(), config.sample.chains, config.seed, threads, [&](std::span<NoiseStream> s) {
            return run_sampler(*dash, grid, config.sampler, sched, s, false).samples;
        });
        r.latency = latency;
        r.label = "baseline";
    }
    std::vector<std::string> header{"chain"};
    for (Index k = 0; k < r.samples.rows(); ++k) header.push_back("x" + std::to_string(k));
    CsvTable t(header);
    for (Index j = 0; j < r.samples.cols(); ++j) {
        std::vector<std::string> row{format_number(static_cast<long long>(j))};
        for (Index k = 0; k < r.samples.rows(); ++k) row.push_back(format_number(r.samples(k, j)));
        t.add_row(std::move(row));
    }
    r.samples_csv = join_path(out, "samples.csv");
    t.save(r.samples_csv);
    return r;
}

MetricEvaluator::MetricEvaluator(const ExperimentConfig& config, const Dataset& data, int threads)
    : kind_(config.metric.kind), blocks_(config.metric.blocks), threads_(threads) {
    if (kind_ == MetricKind::W2) {
        const auto spec = data.gaussian();
        if (!spec) throw ConfigError("the w2 metric needs a Gaussian dataset");
        exact_.emplace(spec->mu, spec->cov);
        return;
    }
    NoiseStream rng(derive_seed(config.seed, SeedPurpose::Target, 0));
    target_ = data.sample(config.metric.target_samples, rng);
    bandwidth_ = config.metric.bandwidth ? *config.metric.bandwidth : median_pairwise_distance(target_);
    if (!(bandwidth_ > 0.0)) throw NumericError("median heuristic bandwidth is zero");
    yy_ = mmd_within_mean(target_, bandwidth_, threads_);
    const Index per = target_.cols() / blocks_;
    if (per < 2) throw ConfigError("metric.target_samples too small for metric.blocks");
    for (int b = 0; b < blocks_; ++b) {
        block_yy_.push_back(mmd_within_mean(target_.middleCols(b * per, per), bandwidth_, threads_));
    }
}

MetricValue MetricEvaluator::evaluate(const Matrix& samples) const {
    if (!samples.allFinite()) throw DivergenceError("sampler produced non-finite samples");
    const Index per = samples.cols() / blocks_;
    if (per < 2) throw ConfigError("too few chains for metric.blocks");
    MetricValue v;
    std::vector<double> values;
    if (kind_ == MetricKind::W2) {
        v.value = gaussian_w2(fit_gaussian(samples), *exact_);
        for (int b = 0; b < blocks_; ++b) {
            values.push_back(gaussian_w2(fit_gaussian(samples.middleCols(b * per, per)), *exact_));
        }
    } else {
        v.value = mmd_rbf_with_yy(samples, target_, bandwidth_, yy_, threads_);
        const Index tper = target_.cols() / blocks_;
        for (int b = 0; b < blocks_; ++b) {
            values.push_back(mmd_rbf_with_yy(samples.middleCols(b * per, per), target_.middleCols(b * tper, tper),
                                             bandwidth_, block_yy_[static_cast<std::size_t>(b)], threads_));
        }
    }
    double mean = 0.0;
    for (double x : values) mean += x;
    mean /= static_cast<double>(values.size());
    double ss = 0.0;
    for (double x : values) ss += (x - mean) * (x - mean);
    const double sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
    v.stderr_ = sd / std::sqrt(static_cast<double>(values.size()));
    return v;
}

namespace {

class BenchRunner {
public:
    BenchRunner(const ExperimentConfig& config, const DashEstimator& dash, const DotEstimator* dot,
                const NoiseSchedule<double>& sched, const MetricEvaluator& metric, int threads)
        : config_(config), dash_(dash), dot_(dot), sched_(sched), metric_(metric), threads_(threads) {}

    BenchRow baseline(int n) const {
        const TimeGrid grid = select_time_grid(sched_.T(), n);
        const Matrix s = sample_chains(dash_.dim(), config_.bench.chains, config_.seed, threads_,
                                       [&](std::span<NoiseStream> streams) {
                                           return run_sampler(dash_, grid, config_.sampler, sched_, streams, false).samples;
                                       });
        BenchRow row;
        row.label = "baseline";
        row.latency = n;
        row.n_steps = n;
        row.dash_steps = n;
        row.metric = metric_.evaluate(s);
        return row;
    }

    BenchRow morse(const std::string& label, int steps, int dash_steps, double ratio) const {
        if (steps > sched_.T()) throw ConfigError("Morse step count " + std::to_string(steps) + " exceeds T");
        const MorseSchedule schedule =
            build_morse_schedule(select_time_grid(sched_.T(), steps), dash_steps, config_.morse.speed_ratio);
        const Matrix s = sample_chains(dash_.dim(), config_.bench.chains, config_.seed, threads_,
                                       [&](std::span<NoiseStream> streams) {
                                           return morse_sample(dash_, *dot_, schedule, config_.sampler,
                                                               config_.morse.chain, sched_, streams, false)
                                               .samples;
                                       });
        BenchRow row;
        row.label = label;
        row.latency = lsd_cost(schedule);
        row.n_steps = steps;
        row.dash_steps = schedule.dash_steps();
        row.dot_steps = schedule.dot_steps();
        row.ratio = ratio;
        row.metric = metric_.evaluate(s);
        return row;
    }

    BenchRow morse_at(int latency, double ratio, const std::string& label) const {
        const ExchangePlan plan = plan_exchange_ratio(latency, ratio, config_.morse.speed_ratio);
        return morse(label, plan.dash_steps + plan.dot_steps, plan.dash_steps, ratio);
    }

private:
    const ExperimentConfig& config_;
    const DashEstimator& dash_;
    const DotEstimator* dot_;
    const NoiseSchedule<double>& sched_;
    const MetricEvaluator& metric_;
    int threads_;
};

std::vector<CurvePoint> curve_points(const std::vector<BenchRow>& rows, const std::string& label) {
    std::map<double, double> by_latency;
    for (const auto& r : rows)
        if (r.label == label) by_latency[r.latency] = r.metric.value;
    std::vector<CurvePoint> pts;
    for (const auto& [l, q] : by_latency) pts.push_back({l, q});
    return pts;
}

}  // namespace

BenchResult run_bench(const ExperimentConfig& config, const std::optional<std::string>& dash_checkpoint,
                      const DotSource& dot_source) {
    if (!dot_source.present()) throw ConfigError("bench needs --dot-ckpt or --oracle-dot");
    const auto sched = config.make_schedule();
    const auto dash = load_dash(config, dash_checkpoint);
    const DotHandle dot = make_dot(config, dot_source, *dash, sched);
    const std::string out = prepare_output(config);
    const int threads = resolve_threads(config.threads);
    const auto data = config.make_dataset();
    const MetricEvaluator metric(config, *data, threads);
    const BenchRunner runner(config, *dash, dot.dot.get(), sched, metric, threads);

    BenchResult r;
    r.bandwidth = metric.bandwidth();

    struct MorseSpec {
        std::string label;
        int steps;
        int dash_steps;
        double ratio;
    };
    std::vector<MorseSpec> specs;
    for (double ratio : config.morse.exchanged_ratios) {
        for (int l : config.bench.morse_latencies) {
            const ExchangePlan plan = plan_exchange_ratio(l, ratio, config.morse.speed_ratio);
            specs.push_back({ratio_label(ratio), plan.dash_steps + plan.dot_steps, plan.dash_steps, ratio});
        }
    }
    for (int d : config.morse.dash_counts) {
        for (int n : config.bench.grid_sizes) {
            if (n >= d) specs.push_back({"morse_d" + std::to_string(d), n, d, 1.0 - static_cast<double>(d) / n});
        }
    }

    std::set<int> grid_sizes(config.bench.grid_sizes.begin(), config.bench.grid_sizes.end());
    // With the oracle Dot each Morse point is compared with the dense run at the same step count.
    if (dot_source.oracle) {
        for (const auto& s : specs) grid_sizes.insert(s.steps);
    }
    for (int n : grid_sizes) {
        if (n > sched.T()) throw ConfigError("grid size " + std::to_string(n) + " exceeds T");
        r.curves.push_back(runner.baseline(n));
    }
    for (const auto& s : specs) r.curves.push_back(runner.morse(s.label, s.steps, s.dash_steps, s.ratio));
    for (double ratio : config.bench.sweep_ratios) {
        for (int l : config.bench.sweep_latencies) r.sweep.push_back(runner.morse_at(l, ratio, "sweep"));
    }

    r.baseline = curve_points(r.curves, "baseline");
    r.candidate_label = ratio_label(config.morse.exchanged_ratios.front());
    r.candidate = curve_points(r.curves, r.candidate_label);
    if (r.baseline.size() < 2 || r.candidate.size() < 2) {
        throw ConfigError("bench needs at least two baseline grid sizes and two Morse latencies");
    }
    const QualityCurve baseline(r.baseline, "baseline");
    const QualityCurve candidate(r.candidate, r.candidate_label);
    for (double l : config.bench.latencies) {
        if (l < candidate.min_latency() || l > candidate.max_latency()) {
            throw ConfigError("bench.latencies entry " + format_number(l) + " lies outside the Morse curve [" +
                              format_number(candidate.min_latency()) + ", " + format_number(candidate.max_latency()) +
                              "]");
        }
    }
    bool empty = false;
    try {
        r.speedup = average_speedup(baseline, candidate, config.bench.latencies);
    } catch (const EmptyAverageError&) {
        empty = true;
    }

    CsvTable curves({"label", "latency_lsd", "n_steps", "dash_steps", "dot_steps", "metric", "metric_stderr"});
    for (const auto& row : r.curves) {
        curves.add_row({row.label, format_number(row.latency), format_number(static_cast<long long>(row.n_steps)),
                        format_number(static_cast<long long>(row.dash_steps)),
                        format_number(static_cast<long long>(row.dot_steps)), format_number(row.metric.value),
                        format_number(row.metric.stderr_)});
    }
    CsvTable speedup({"latency_lsd", "speedup_or_NA"});
    json details = json::array();
    for (double l : config.bench.latencies) {
        const double q = interpolate(candidate, l);
        const Speedup s = speedup_at(baseline, {l, q});
        speedup.add_row({format_number(l), s.ok() ? format_number(s.value) : to_string(s.status)});
        json d{{"latency_lsd", l}, {"candidate_metric", q}, {"status", to_string(s.status)}};
        if (s.ok()) {
            d["speedup"] = s.value;
            d["matched_baseline_latency"] = s.matched_latency;
        }
        details.push_back(d);
    }
    CsvTable sweep({"ratio", "latency_lsd", "metric"});
    for (const auto& row : r.sweep) {
        sweep.add_row({format_number(row.ratio), format_number(row.latency), format_number(row.metric.value)});
    }

    r.curves_csv = join_path(out, "curves.csv");
    r.speedup_csv = join_path(out, "speedup.csv");
    r.sweep_csv = join_path(out, "sweep.csv");
    r.summary_json = join_path(out, "bench_summary.json");
    curves.save(r.curves_csv);
    speedup.save(r.speedup_csv);
    sweep.save(r.sweep_csv);

    json summary{{"seed", config.seed},
                 {"chains", config.bench.chains},
                 {"metric", config.metric.kind == MetricKind::Mmd ? "mmd" : "w2"},
                 {"speed_ratio", config.morse.speed_ratio},
                 {"chain_source", to_string(config.morse.chain)},
                 {"sampler", to_string(config.sampler)},
                 {"dot", dot_source.oracle ? "oracle" : "checkpoint"},
                 {"candidate", r.candidate_label},
                 {"baseline_envelope", "running minimum of the baseline metric over latency"},
                 {"latencies", details}};
    if (config.metric.kind == MetricKind::Mmd) summary["bandwidth"] = r.bandwidth;
    if (r.speedup) {
        summary["average_speedup"] = r.speedup->mean;
        summary["excluded_latencies"] = r.speedup->excluded;
    } else {
        summary["average_speedup"] = nullptr;
        summary["excluded_latencies"] = config.bench.latencies;
    }
    write_text(r.summary_json, summary.dump(2) + "\n");
    if (empty) throw EmptyAverageError("bench: every latency point was not applicable; no average speedup");
    return r;
}

}  // namespace morse::harness
