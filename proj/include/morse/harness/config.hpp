#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "morse/datasets.hpp"
#include "morse/diffusion.hpp"
#include "morse/dot_training.hpp"
#include "morse/mlp.hpp"
#include "morse/morse.hpp"
#include "morse/train_dash.hpp"

namespace morse::harness {

struct DatasetConfig {
    std::string kind;  // gmm8 | gaussian_iso | gaussian_aniso | gaussian | point_mass
    Index dim = 2;
    std::vector<double> mean;
    std::vector<double> cov_diag;
    int modes = 8;
    double radius = 4.0;
    double component_std = 0.3;
};

struct ScheduleConfig {
    int T = 1000;
    double beta_start = 1e-4;
    double beta_end = 0.02;
};

enum class DashKind { Mlp, Analytic };

struct DashConfig {
    DashKind kind = DashKind::Mlp;
    MlpDenoiserShape shape{};
};

struct DotConfig {
    SharedDotOptions options{};
};

struct MorseConfig {
    double speed_ratio = 4.0;
    ChainSource chain = ChainSource::FromDash;
    std::vector<double> exchanged_ratios{0.5};
    std::vector<int> dash_counts;  // optional fixed-d schedules over every grid size
};

enum class MetricKind { Mmd, W2 };

struct MetricConfig {
    MetricKind kind = MetricKind::Mmd;
    std::optional<double> bandwidth;  // empty: median heuristic on the target set
    Index target_samples = 20000;
    int blocks = 10;  // for the standard error
};

struct BenchConfig {
    Index chains = 20000;
    std::vector<int> grid_sizes{1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 14, 16, 18, 20, 24, 28, 32, 40, 48};
    std::vector<int> morse_latencies{2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 14, 16};
    std::vector<double> latencies{4, 6, 8, 10, 12};
    std::vector<double> sweep_ratios;
    std::vector<int> sweep_latencies;
};

struct SampleConfig {
    Index chains = 1000;
    int latency = 8;
};

struct DotTrainingConfig {
    DotTrainConfig train{};
    std::vector<InputMask> ablation_masks;
};

struct ExperimentConfig {
    std::uint64_t seed = 0;
    std::string output_dir = "out";
    int threads = 0;
    DatasetConfig dataset;
    ScheduleConfig schedule;
    SamplerKind sampler = SamplerKind::DDIM;
    DashConfig dash;
    TrainConfig train_dash{};
    DotConfig dot;
    DotTrainingConfig train_dot;
    MorseConfig morse;
    MetricConfig metric;
    BenchConfig bench;
    SampleConfig sample;

    NoiseSchedule<double> make_schedule() const;
    std::unique_ptr<Dataset> make_dataset() const;
};

/// Parses and fully validates a JSON config. Unknown keys are rejected; errors name the
/// offending key and, where it can be located, the source line (`origin:line: message`).
ExperimentConfig parse_config(const std::string& text, const std::string& origin = "config");
ExperimentConfig load_config(const std::string& path);

std::string to_string(ChainSource c);
ChainSource parse_chain_source(const std::string& s);
std::string to_string(SamplerKind k);

}  // namespace morse::harness
