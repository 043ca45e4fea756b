// morse: train-dash | train-dot | sample | bench
//
// Exit codes: 0 success, 2 config error, 3 numeric divergence, 4 integrity error,
// 5 no usable speedup point, 1 anything else.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "morse/harness/checkpoint.hpp"
#include "morse/harness/config.hpp"
#include "morse/harness/csv.hpp"
#include "morse/harness/pipelines.hpp"

namespace {

using namespace morse;
using namespace morse::harness;

enum Exit : int { kOk = 0, kOther = 1, kConfig = 2, kDivergence = 3, kIntegrity = 4, kEmptyAverage = 5 };

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<std::string> dash_ckpt;
    std::optional<std::string> dot_ckpt;
    bool oracle_dot = false;
    std::optional<std::string> chain_source;
    std::optional<int> threads;
};

ExperimentConfig resolve(const Options& o) {
    ExperimentConfig c = load_config(o.config);
    if (o.seed) {
        c.seed = *o.seed;
        c.train_dash.seed = *o.seed;
        c.train_dot.train.seed = *o.seed;
    }
    if (o.out) c.output_dir = *o.out;
    if (o.chain_source) c.morse.chain = parse_chain_source(*o.chain_source);
    if (o.threads) c.threads = *o.threads;
    return c;
}

void print_bench(const BenchResult& r) {
    std::cout << "curves  " << r.curves_csv << "\n";
    std::cout << "speedup " << r.speedup_csv << "\n";
    std::cout << "sweep   " << r.sweep_csv << "\n";
    if (r.speedup) {
        for (const auto& d : r.speedup->details) {
            std::cout << "  latency " << format_number(d.latency) << " LSD: "
                      << (d.speedup.ok() ? format_number(d.speedup.value) : to_string(d.speedup.status)) << "\n";
        }
        std::cout << "average speedup " << format_number(r.speedup->mean) << " over "
                  << r.speedup->details.size() - r.speedup->excluded.size() << " latencies\n";
    }
}

int run(const std::string& command, const Options& o) {
    const ExperimentConfig c = resolve(o);
    DotSource dot{o.dot_ckpt, o.oracle_dot};
    if (command == "train-dash") {
        const auto r = run_train_dash(c);
        std::cout << "final loss " << format_number(r.report.loss.back()) << "\n" << "checkpoint " << r.checkpoint << "\n";
    } else if (command == "train-dot") {
        if (!o.dash_ckpt) throw ConfigError("train-dot needs --dash-ckpt");
        const auto r = run_train_dot(c, *o.dash_ckpt);
        for (const auto& m : r.masks) {
            std::cout << "mask x_anchor=" << m.mask.use_x_anchor << " z_anchor=" << m.mask.use_z_anchor
                      << " t_anchor=" << m.mask.use_t_anchor << ": trained " << format_number(m.validation.trained_mse)
                      << ", zero predictor " << format_number(m.validation.zero_mse) << "\n";
        }
        std::cout << "checkpoint " << r.checkpoint << "\n";
    } else if (command == "sample") {
        const auto r = run_sample(c, o.dash_ckpt, dot);
        std::cout << r.label << " at " << format_number(r.latency) << " LSD: " << r.samples.cols() << " samples -> "
                  << r.samples_csv << "\n";
    } else {
        print_bench(run_bench(c, o.dash_ckpt, dot));
    }
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Morse: Dash/Dot accelerated diffusion sampling on toy data"};
    app.require_subcommand(1);
    Options o;
    std::string command;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config, "JSON experiment config")->required();
        sub->add_option("--seed", o.seed, "Experiment seed (overrides the config)");
        sub->add_option("--out", o.out, "Output directory (overrides the config)");
        sub->add_option("--threads", o.threads, "Worker threads; falls back to MORSE_THREADS, then 1")
            ->check(CLI::PositiveNumber);
        sub->callback([&command, sub] { command = sub->get_name(); });
    };
    auto add_dash = [&](CLI::App* sub) { sub->add_option("--dash-ckpt", o.dash_ckpt, "Dash checkpoint"); };
    auto add_dot = [&](CLI::App* sub) {
        sub->add_option("--dot-ckpt", o.dot_ckpt, "Dot checkpoint");
        sub->add_option("--chain-source", o.chain_source, "Dot anchor: dash | previous")
            ->check(CLI::IsMember({"dash", "previous"}));
    };

    auto* train_dash = app.add_subcommand("train-dash", "Train the Dash denoiser");
    add_common(train_dash);
    auto* train_dot = app.add_subcommand("train-dot", "Train the Dot residual network on a frozen Dash");
    add_common(train_dot);
    add_dash(train_dot);
    auto* sample = app.add_subcommand("sample", "Draw samples with dense Dash or Morse sampling");
    add_common(sample);
    add_dash(sample);
    add_dot(sample);
    auto* bench = app.add_subcommand("bench", "Quality-latency curves, speedups and the exchanged-ratio sweep");
    add_common(bench);
    add_dash(bench);
    add_dot(bench);
    bench->add_flag("--oracle-dot", o.oracle_dot, "Use the Dash itself as the Dot (lossless reference)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfig;
    }

    try {
        return run(command, o);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfig;
    } catch (const DivergenceError& e) {
        std::cerr << "numeric divergence: " << e.what() << "\n";
        return kDivergence;
    } catch (const NumericError& e) {
        std::cerr << "numeric divergence: " << e.what() << "\n";
        return kDivergence;
    } catch (const IntegrityError& e) {
        std::cerr << "integrity error: " << e.what() << "\n";
        return kIntegrity;
    } catch (const EmptyAverageError& e) {
        std::cerr << "no speedup: " << e.what() << "\n";
        return kEmptyAverage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kOther;
    }
}
