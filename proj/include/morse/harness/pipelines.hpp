#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "morse/harness/config.hpp"
#include "morse/metrics.hpp"

namespace morse::harness {

/// Where the Dot comes from in sample and bench runs.
struct DotSource {
    std::optional<std::string> checkpoint;
    bool oracle = false;  // residual computed by the Dash itself

    bool present() const { return oracle || checkpoint.has_value(); }
};

struct TrainDashResult {
    std::string checkpoint;
    std::string loss_csv;
    TrainReport report;
};

/// Writes <out>/dash.ckpt and <out>/dash_loss.csv (iteration, loss).
TrainDashResult run_train_dash(const ExperimentConfig& config);

struct MaskReport {
    InputMask mask;
    DotValidation validation;
};

struct TrainDotResult {
    std::string checkpoint;
    std::string loss_csv;
    std::string validation_json;
    DotTrainReport report;
    std::vector<MaskReport> masks;  // configured mask first, then the ablations
};

/// Writes <out>/dot.ckpt, <out>/dot_loss.csv and <out>/dot_validation.json. Each ablation mask trains
/// its own Dot under the same seeds; only the configured mask's Dot is saved.
TrainDotResult run_train_dot(const ExperimentConfig& config, const std::string& dash_checkpoint);

struct SampleRunResult {
    std::string samples_csv;
    std::string label;
    Matrix samples;
    double latency = 0.0;
};

/// Draws sample.chains samples at sample.latency LSD: Morse when a Dot is given, dense Dash otherwise.
SampleRunResult run_sample(const ExperimentConfig& config, const std::optional<std::string>& dash_checkpoint,
                           const DotSource& dot);

struct MetricValue {
    double value = 0.0;
    double stderr_ = 0.0;
};

struct BenchRow {
    std::string label;
    double latency = 0.0;
    int n_steps = 0;
    int dash_steps = 0;
    int dot_steps = 0;
    double ratio = 0.0;
    MetricValue metric;
};

struct BenchResult {
    std::vector<BenchRow> curves;
    std::vector<BenchRow> sweep;
    std::vector<CurvePoint> baseline;
    std::vector<CurvePoint> candidate;
    std::string candidate_label;
    std::optional<AverageSpeedup> speedup;  // empty when every latency was excluded
    double bandwidth = 0.0;
    std::string curves_csv;
    std::string speedup_csv;
    std::string sweep_csv;
    std::string summary_json;
};

/// Baseline and Morse curves, the speedup table over bench.latencies and the exchanged-ratio sweep.
/// Writes curves.csv, speedup.csv, sweep.csv and bench_summary.json under the output directory.
/// Throws EmptyAverageError after writing the files when no latency yields a speedup.
BenchResult run_bench(const ExperimentConfig& config, const std::optional<std::string>& dash_checkpoint,
                      const DotSource& dot);

/// Dash for the config: the analytic denoiser, or the MLP stored in the checkpoint.
std::unique_ptr<DashEstimator> load_dash(const ExperimentConfig& config,
                                         const std::optional<std::string>& dash_checkpoint);

/// Quality of a sample set against the config's target: MMD^2 or Gaussian W2, with a block standard error.
class MetricEvaluator {
public:
    MetricEvaluator(const ExperimentConfig& config, const Dataset& data, int threads);

    MetricValue evaluate(const Matrix& samples) const;
    double bandwidth() const { return bandwidth_; }
    const Matrix& target() const { return target_; }

private:
    MetricKind kind_;
    int blocks_;
    int threads_;
    Matrix target_;
    double bandwidth_ = 0.0;
    double yy_ = 0.0;
    std::vector<double> block_yy_;
    std::optional<GaussianMoments> exact_;
};

/// Runs `sample(streams)` over fixed chunks of chains; chain j always uses the stream
/// seeded derive_seed(seed, Chains, j), so results do not depend on the thread count.
template <typename Fn>
Matrix sample_chains(Index dim, Index chains, std::uint64_t seed, int threads, Fn&& sample);

}  // namespace morse::harness

#include "morse/harness/pipelines_impl.hpp"
