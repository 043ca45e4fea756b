#include "morse/harness/config.hpp"

#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include <json.hpp>

namespace morse::harness {

using nlohmann::json;

namespace {

/// Resolves a key path to a 1-based line of the source text by searching for each quoted key
/// in turn, starting after the previous match.
class SourceMap {
public:
    explicit SourceMap(const std::string& text) : text_(text) {}

    std::optional<int> line_of(const std::vector<std::string>& path) const {
        if (path.empty()) return std::nullopt;
        std::size_t at = 0;
        for (const auto& key : path) {
            const std::regex pattern("\"" + escape(key) + "\"\\s*:");
            std::smatch m;
            auto begin = text_.cbegin() + static_cast<std::ptrdiff_t>(at);
            if (!std::regex_search(begin, text_.cend(), m, pattern)) return std::nullopt;
            at += static_cast<std::size_t>(m.position(0));
            at += 1;
        }
        return 1 + static_cast<int>(std::count(text_.begin(), text_.begin() + static_cast<std::ptrdiff_t>(at - 1), '\n'));
    }

private:
    static std::string escape(const std::string& s) {
        static const std::regex special(R"([.^$|()\[\]{}*+?\\])");
        return std::regex_replace(s, special, R"(\$&)");
    }

    const std::string& text_;
};

struct Context {
    std::string origin;
    SourceMap map;
};

std::string join(const std::vector<std::string>& path) {
    std::string s;
    for (const auto& p : path) s += (s.empty() ? "" : ".") + p;
    return s;
}

[[noreturn]] void fail(const Context& ctx, const std::vector<std::string>& path, const std::string& message) {
    const auto line = ctx.map.line_of(path);
    std::ostringstream os;
    os << ctx.origin;
    if (line) os << ":" << *line;
    os << ": " << message;
    throw ConfigError(os.str());
}

class Section {
public:
    Section(const Context& ctx, const json& node, std::vector<std::string> path)
        : ctx_(ctx), node_(node), path_(std::move(path)) {
        if (!node_.is_object()) fail(ctx_, path_, "'" + name() + "' must be an object");
    }

    void allow(std::initializer_list<const char*> keys) const {
        std::set<std::string> allowed(keys.begin(), keys.end());
        for (const auto& [key, value] : node_.items()) {
            if (!allowed.count(key)) {
                fail(ctx_, child(key), "unknown key '" + key + "' in '" + name() + "'");
            }
        }
    }

    bool has(const std::string& key) const { return node_.contains(key) && !node_.at(key).is_null(); }

    template <typename T>
    T get(const std::string& key, T fallback) const {
        if (!has(key)) return fallback;
        return convert<T>(key);
    }

    template <typename T>
    T require(const std::string& key) const {
        if (!node_.contains(key)) fail(ctx_, path_, "missing required key '" + join(child(key)) + "'");
        return convert<T>(key);
    }

    Section section(const std::string& key) const { return Section(ctx_, node_.at(key), child(key)); }

    [[noreturn]] void error(const std::string& key, const std::string& message) const {
        fail(ctx_, child(key), "'" + join(child(key)) + "': " + message);
    }

    std::vector<std::string> child(const std::string& key) const {
        auto p = path_;
        p.push_back(key);
        return p;
    }
    std::string name() const { return path_.empty() ? "<root>" : join(path_); }
    const json& node() const { return node_; }

private:
    template <typename T>
    T convert(const std::string& key) const {
        const json& v = node_.at(key);
        try {
            if constexpr (std::is_same_v<T, bool>) {
                if (!v.is_boolean()) throw std::invalid_argument("expected a boolean");
            } else if constexpr (std::is_integral_v<T>) {
                if (!v.is_number_integer()) throw std::invalid_argument("expected an integer");
            } else if constexpr (std::is_floating_point_v<T>) {
                if (!v.is_number()) throw std::invalid_argument("expected a number");
            } else if constexpr (std::is_same_v<T, std::string>) {
                if (!v.is_string()) throw std::invalid_argument("expected a string");
            }
            return v.get<T>();
        } catch (const std::exception& e) {
            error(key, e.what());
        }
    }

    const Context& ctx_;
    const json& node_;
    std::vector<std::string> path_;
};

template <typename T>
void require_positive(const Section& s, const std::string& key, T value) {
    if (!(value > T(0))) s.error(key, "must be > 0");
}

InputMask parse_mask(const Section& s) {
    s.allow({"x_anchor", "z_anchor", "t_anchor"});
    InputMask m;
    m.use_x_anchor = s.get<bool>("x_anchor", true);
    m.use_z_anchor = s.get<bool>("z_anchor", true);
    m.use_t_anchor = s.get<bool>("t_anchor", true);
    return m;
}

void parse_dataset(const Section& s, DatasetConfig& d) {
    s.allow({"kind", "dim", "mean", "cov_diag", "modes", "radius", "component_std"});
    d.kind = s.require<std::string>("kind");
    static const std::set<std::string> kinds{"gmm8", "gaussian_iso", "gaussian_aniso", "gaussian", "point_mass"};
    if (!kinds.count(d.kind)) s.error("kind", "unknown dataset kind '" + d.kind + "'");
    d.dim = s.get<Index>("dim", 2);
    require_positive(s, "dim", d.dim);
    d.mean = s.get<std::vector<double>>("mean", {});
    d.cov_diag = s.get<std::vector<double>>("cov_diag", {});
    d.modes = s.get<int>("modes", 8);
    d.radius = s.get<double>("radius", 4.0);
    d.component_std = s.get<double>("component_std", 0.3);
    if (d.kind == "gmm8" && d.dim != 2) s.error("dim", "the ring mixture is two-dimensional");
    if (d.kind == "gaussian_aniso" && d.dim != 2) s.error("dim", "the anisotropic Gaussian is two-dimensional");
    if (d.kind == "gaussian" || d.kind == "point_mass") {
        if (static_cast<Index>(d.mean.size()) != d.dim) s.error("mean", "needs exactly 'dim' entries");
    }
    if (d.kind == "gaussian") {
        if (static_cast<Index>(d.cov_diag.size()) != d.dim) s.error("cov_diag", "needs exactly 'dim' entries");
        for (double v : d.cov_diag)
            if (v < 0.0) s.error("cov_diag", "variances must be >= 0");
    }
    require_positive(s, "modes", d.modes);
}

}  // namespace

NoiseSchedule<double> ExperimentConfig::make_schedule() const {
    return make_linear_schedule(schedule.T, schedule.beta_start, schedule.beta_end);
}

std::unique_ptr<Dataset> ExperimentConfig::make_dataset() const {
    const auto& d = dataset;
    if (d.kind == "gmm8") return std::make_unique<RingMixture>(d.modes, d.radius, d.component_std);
    if (d.kind == "gaussian_iso") return make_isotropic_gaussian(d.dim);
    if (d.kind == "gaussian_aniso") return make_anisotropic_gaussian();
    const Vector mu = Eigen::Map<const Vector>(d.mean.data(), static_cast<Index>(d.mean.size()));
    if (d.kind == "point_mass") return make_point_mass(mu);
    Matrix cov = Matrix::Zero(d.dim, d.dim);
    cov.diagonal() = Eigen::Map<const Vector>(d.cov_diag.data(), static_cast<Index>(d.cov_diag.size()));
    return std::make_unique<GaussianDataset>(GaussianDataSpec(mu, cov), "gaussian");
}

std::string to_string(ChainSource c) { return c == ChainSource::FromDash ? "dash" : "previous"; }

ChainSource parse_chain_source(const std::string& s) {
    if (s == "dash") return ChainSource::FromDash;
    if (s == "previous") return ChainSource::FromPrevious;
    throw ConfigError("chain source must be 'dash' or 'previous', got '" + s + "'");
}

std::string to_string(SamplerKind k) { return k == SamplerKind::DDIM ? "ddim" : "ddpm"; }

namespace {

SamplerKind parse_sampler(const Section& s, const std::string& key, SamplerKind fallback) {
    if (!s.has(key)) return fallback;
    const auto v = s.get<std::string>(key, "");
    if (v == "ddim") return SamplerKind::DDIM;
    if (v == "ddpm") return SamplerKind::DDPMAncestral;
    s.error(key, "sampler must be 'ddim' or 'ddpm'");
}

}  // namespace

ExperimentConfig parse_config(const std::string& text, const std::string& origin) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(origin + ": " + e.what());
    }
    const Context ctx{origin, SourceMap(text)};
    const Section top(ctx, root, {});
    top.allow({"seed", "output_dir", "threads", "dataset", "schedule", "sampler", "dash", "train_dash", "dot",
               "train_dot", "morse", "metric", "bench", "sample"});

    ExperimentConfig c;
    c.seed = top.get<std::uint64_t>("seed", 0);
    c.output_dir = top.get<std::string>("output_dir", "out");
    c.threads = top.get<int>("threads", 0);
    if (c.threads < 0) top.error("threads", "must be >= 0 (0 = MORSE_THREADS or 1)");
    if (!root.contains("dataset")) fail(ctx, {}, "missing required key 'dataset'");
    parse_dataset(top.section("dataset"), c.dataset);
    c.sampler = parse_sampler(top, "sampler", SamplerKind::DDIM);

    if (top.has("schedule")) {
        const auto s = top.section("schedule");
        s.allow({"T", "beta_start", "beta_end"});
        c.schedule.T = s.get<int>("T", 1000);
        c.schedule.beta_start = s.get<double>("beta_start", 1e-4);
        c.schedule.beta_end = s.get<double>("beta_end", 0.02);
        try {
            if (!c.make_schedule().terminal_is_noise()) {
                s.error("T", "alpha_T^2 exceeds 1e-3; x_T would not be close to N(0, I)");
            }
        } catch (const ConfigError& e) {
            if (std::string(e.what()).rfind(origin, 0) == 0) throw;
            s.error("beta_start", e.what());
        }
    }

    if (top.has("dash")) {
        const auto s = top.section("dash");
        s.allow({"kind", "hidden", "activation", "time_embed_dim"});
        const auto kind = s.get<std::string>("kind", "mlp");
        if (kind == "mlp") {
            c.dash.kind = DashKind::Mlp;
        } else if (kind == "analytic") {
            c.dash.kind = DashKind::Analytic;
        } else {
            s.error("kind", "dash kind must be 'mlp' or 'analytic'");
        }
        const auto hidden = s.get<std::vector<long>>("hidden", {128, 128, 128});
        c.dash.shape.hidden.assign(hidden.begin(), hidden.end());
        for (auto h : hidden)
            if (h < 1) s.error("hidden", "widths must be >= 1");
        try {
            c.dash.shape.activation = parse_activation(s.get<std::string>("activation", "silu"));
        } catch (const ConfigError& e) {
            s.error("activation", e.what());
        }
        c.dash.shape.time_embed_dim = s.get<int>("time_embed_dim", 32);
        if (c.dash.shape.time_embed_dim < 2 || c.dash.shape.time_embed_dim % 2 != 0) {
            s.error("time_embed_dim", "must be a positive even integer");
        }
    }
    c.dash.shape.data_dim = c.dataset.dim;
    if (c.dash.kind == DashKind::Analytic && c.dataset.kind == "gmm8") {
        fail(ctx, {"dash", "kind"}, "the analytic Dash needs a Gaussian dataset");
    }

    if (top.has("train_dash")) {
        const auto s = top.section("train_dash");
        s.allow({"iterations", "batch", "lr", "beta1", "beta2", "eps"});
        c.train_dash.iterations = s.get<int>("iterations", 2000);
        c.train_dash.batch = s.get<Index>("batch", 256);
        c.train_dash.adam.lr = s.get<double>("lr", 1e-3);
        c.train_dash.adam.beta1 = s.get<double>("beta1", 0.9);
        c.train_dash.adam.beta2 = s.get<double>("beta2", 0.999);
        c.train_dash.adam.eps = s.get<double>("eps", 1e-8);
        require_positive(s, "iterations", c.train_dash.iterations);
        require_positive(s, "batch", c.train_dash.batch);
        require_positive(s, "lr", c.train_dash.adam.lr);
    }
    c.train_dash.seed = c.seed;

    if (top.has("dot")) {
        const auto s = top.section("dot");
        s.allow({"rank", "lora_scale", "lora_init_std", "mask"});
        c.dot.options.rank = s.get<int>("rank", 8);
        c.dot.options.lora_scale = s.get<double>("lora_scale", 1.0);
        c.dot.options.lora_init_std = s.get<double>("lora_init_std", 0.02);
        require_positive(s, "rank", c.dot.options.rank);
        if (s.has("mask")) c.dot.options.mask = parse_mask(s.section("mask"));
        for (Index w : c.dash.shape.hidden)
            if (c.dot.options.rank > w) s.error("rank", "exceeds a base layer width");
        if (c.dot.options.rank > c.dash.shape.data_dim + c.dash.shape.time_embed_dim) {
            s.error("rank", "exceeds the base input width");
        }
    }

    if (top.has("train_dot")) {
        const auto s = top.section("train_dot");
        s.allow({"iterations", "batch", "lr", "max_gap", "train_sampler", "rollout_steps", "validation_size",
                 "ablation_masks"});
        auto& t = c.train_dot.train;
        t.iterations = s.get<int>("iterations", 4000);
        t.batch = s.get<Index>("batch", 256);
        t.adam.lr = s.get<double>("lr", 1e-3);
        if (s.has("max_gap")) {
            t.max_gap = s.get<int>("max_gap", 0);
            if (*t.max_gap < 1) s.error("max_gap", "must be >= 1");
        }
        t.examples.kind = parse_sampler(s, "train_sampler", SamplerKind::DDIM);
        t.examples.rollout_steps = s.get<int>("rollout_steps", 0);
        t.validation_size = s.get<Index>("validation_size", 4096);
        require_positive(s, "iterations", t.iterations);
        require_positive(s, "batch", t.batch);
        require_positive(s, "lr", t.adam.lr);
        require_positive(s, "validation_size", t.validation_size);
        if (t.examples.rollout_steps < 0) s.error("rollout_steps", "must be >= 0");
        if (s.has("ablation_masks")) {
            const json& list = s.node().at("ablation_masks");
            if (!list.is_array()) s.error("ablation_masks", "must be a list of masks");
            for (std::size_t i = 0; i < list.size(); ++i) {
                c.train_dot.ablation_masks.push_back(
                    parse_mask(Section(ctx, list[i], s.child("ablation_masks"))));
            }
        }
    }
    c.train_dot.train.seed = c.seed;

    if (top.has("morse")) {
        const auto s = top.section("morse");
        s.allow({"N", "chain_source", "exchanged_ratios", "dash_counts"});
        c.morse.speed_ratio = s.get<double>("N", 4.0);
        if (!(c.morse.speed_ratio > 1.0)) s.error("N", "speed ratio must be > 1");
        try {
            c.morse.chain = parse_chain_source(s.get<std::string>("chain_source", "dash"));
        } catch (const ConfigError& e) {
            s.error("chain_source", e.what());
        }
        c.morse.exchanged_ratios = s.get<std::vector<double>>("exchanged_ratios", {0.5});
        for (double r : c.morse.exchanged_ratios)
            if (!(r >= 0.0 && r < 1.0)) s.error("exchanged_ratios", "ratios must lie in [0, 1)");
        if (c.morse.exchanged_ratios.empty()) s.error("exchanged_ratios", "needs at least one ratio");
        c.morse.dash_counts = s.get<std::vector<int>>("dash_counts", {});
        for (int d : c.morse.dash_counts)
            if (d < 1) s.error("dash_counts", "dash counts must be >= 1");
    }

    if (top.has("metric")) {
        const auto s = top.section("metric");
        s.allow({"kind", "bandwidth", "target_samples", "blocks"});
        const auto kind = s.get<std::string>("kind", "mmd");
        if (kind == "mmd") {
            c.metric.kind = MetricKind::Mmd;
        } else if (kind == "w2") {
            c.metric.kind = MetricKind::W2;
        } else {
            s.error("kind", "metric must be 'mmd' or 'w2'");
        }
        if (s.has("bandwidth")) {
            const json& b = s.node().at("bandwidth");
            if (b.is_string() && b.get<std::string>() == "median") {
                c.metric.bandwidth.reset();
            } else {
                c.metric.bandwidth = s.get<double>("bandwidth", 1.0);
                if (!(*c.metric.bandwidth > 0.0)) s.error("bandwidth", "must be > 0 or \"median\"");
            }
        }
        c.metric.target_samples = s.get<Index>("target_samples", 20000);
        c.metric.blocks = s.get<int>("blocks", 10);
        if (c.metric.target_samples < 2) s.error("target_samples", "must be >= 2");
        if (c.metric.blocks < 2) s.error("blocks", "must be >= 2");
    }
    if (c.metric.kind == MetricKind::W2 && c.dataset.kind == "gmm8") {
        fail(ctx, {"metric", "kind"}, "the w2 metric needs a Gaussian dataset");
    }

    if (top.has("bench")) {
        const auto s = top.section("bench");
        s.allow({"chains", "grid_sizes", "morse_latencies", "latencies", "sweep_ratios", "sweep_latencies"});
        auto& b = c.bench;
        b.chains = s.get<Index>("chains", b.chains);
        b.grid_sizes = s.get<std::vector<int>>("grid_sizes", b.grid_sizes);
        b.morse_latencies = s.get<std::vector<int>>("morse_latencies", b.morse_latencies);
        b.latencies = s.get<std::vector<double>>("latencies", b.latencies);
        b.sweep_ratios = s.get<std::vector<double>>("sweep_ratios", {});
        b.sweep_latencies = s.get<std::vector<int>>("sweep_latencies", {});
        if (b.chains < 2) s.error("chains", "must be >= 2");
        for (int n : b.grid_sizes)
            if (n < 1 || n > c.schedule.T) s.error("grid_sizes", "grid sizes must lie in [1, T]");
        if (b.grid_sizes.size() < 2) s.error("grid_sizes", "needs at least two grid sizes");
        for (int l : b.morse_latencies)
            if (l < 1) s.error("morse_latencies", "latencies must be >= 1");
        for (double r : b.sweep_ratios)
            if (!(r >= 0.0 && r < 1.0)) s.error("sweep_ratios", "ratios must lie in [0, 1)");
        for (int l : b.sweep_latencies)
            if (l < 1) s.error("sweep_latencies", "latencies must be >= 1");
    }

    if (top.has("sample")) {
        const auto s = top.section("sample");
        s.allow({"chains", "latency"});
        c.sample.chains = s.get<Index>("chains", 1000);
        c.sample.latency = s.get<int>("latency", 8);
        require_positive(s, "chains", c.sample.chains);
        require_positive(s, "latency", c.sample.latency);
    }
    return c;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path + ": cannot open config file");
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str(), path);
}

}  // namespace morse::harness
