#pragma once

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "flowreg/bessel_sphere.hpp"
#include "flowreg/driftfield.hpp"
#include "flowreg/error.hpp"
#include "flowreg/format.hpp"
#include "flowreg/grids_samplers.hpp"
#include "flowreg/metrics.hpp"
#include "flowreg/regularity_probe.hpp"
#include "flowreg/schedules.hpp"
#include "flowreg/targets.hpp"
#include "flowreg/transport_flow.hpp"

#ifndef FLOWREG_GIT_DESCRIBE
#define FLOWREG_GIT_DESCRIBE "unknown"
#endif

namespace flowreg {

using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Spec strings
// ---------------------------------------------------------------------------

namespace detail {

/// "name:k=v,k=v" -> (name, {k: v}).
inline std::pair<std::string, std::map<std::string, double>> parse_spec(const std::string& text) {
    const auto colon = text.find(':');
    std::pair<std::string, std::map<std::string, double>> out{text.substr(0, colon), {}};
    if (colon == std::string::npos) return out;
    std::string rest = text.substr(colon + 1);
    std::size_t pos = 0;
    while (pos <= rest.size()) {
        const auto comma = std::min(rest.find(',', pos), rest.size());
        const std::string item = rest.substr(pos, comma - pos);
        const auto eq = item.find('=');
        if (eq == std::string::npos || eq == 0)
            fail(ErrorCode::ConfigInvalid, "expected key=value in '" + text + "'");
        const std::string key = item.substr(0, eq), raw = item.substr(eq + 1);
        double value = 0.0;
        const auto res = std::from_chars(raw.data(), raw.data() + raw.size(), value);
        if (res.ec != std::errc() || res.ptr != raw.data() + raw.size())
            fail(ErrorCode::ConfigInvalid, "bad number '" + raw + "' in '" + text + "'");
        out.second[key] = value;
        pos = comma + 1;
    }
    return out;
}

inline double take(std::map<std::string, double>& kv, const std::string& key, double fallback) {
    auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    const double v = it->second;
    kv.erase(it);
    return v;
}

inline void expect_empty(const std::map<std::string, double>& kv, const std::string& text) {
    if (!kv.empty()) fail(ErrorCode::ConfigInvalid, "unknown parameter '" + kv.begin()->first + "' in '" + text + "'");
}

}  // namespace detail

/// lipman-linear | lipman-custom:p=P | stochastic-interpolant:delta=D,eta=E | diffusion
inline Schedule parse_family(const std::string& text) {
    auto [name, kv] = detail::parse_spec(text);
    std::optional<Schedule> s;
    if (name == "lipman-linear") s = Schedule::lipman_linear();
    else if (name == "lipman-custom") s = Schedule::lipman_custom(detail::take(kv, "p", 2.0));
    else if (name == "stochastic-interpolant") {
        const double delta = detail::take(kv, "delta", 0.5);
        s = Schedule::stochastic_interpolant(delta, detail::take(kv, "eta", 1.0));
    } else if (name == "diffusion") s = Schedule::rescaled_diffusion();
    else fail(ErrorCode::ConfigInvalid, "unknown family '" + name + "'");
    if (kv.count("gamma")) s->params().gamma = detail::take(kv, "gamma", 0.2);
    detail::expect_empty(kv, text);
    return *s;
}

/// gaussian:s=S[,m=M] | mixture:sep=S,var=V | holder:K=K | quartic:alpha=A |
/// cosine:K=K,omega=W,alpha=A | sphere. `dim` applies to gaussian and sphere.
inline TargetModel parse_target(const std::string& text, int dim) {
    auto [name, kv] = detail::parse_spec(text);
    std::optional<TargetModel> t;
    if (name == "gaussian") {
        const double s = detail::take(kv, "s", 1.0), m = detail::take(kv, "m", 0.0);
        t = TargetModel::gaussian(Vec::Constant(dim, m), s * s);
    } else if (name == "mixture") {
        const double sep = detail::take(kv, "sep", 1.0), var = detail::take(kv, "var", 0.25);
        t = TargetModel::mixture({0.5, 0.5}, {-sep, sep}, var);
    } else if (name == "holder") {
        t = TargetModel::holder_reference(detail::take(kv, "K", 1.0));
    } else if (name == "quartic") {
        t = TargetModel::quadrature(Potential::quartic(detail::take(kv, "alpha", 1.0)), Perturbation::zero(), -16.0,
                                    16.0);
    } else if (name == "cosine") {
        const double K = detail::take(kv, "K", 0.5), w = detail::take(kv, "omega", 1.0);
        t = TargetModel::quadrature(Potential::quadratic(detail::take(kv, "alpha", 1.0)), Perturbation::cosine(K, w),
                                    -16.0, 16.0);
    } else if (name == "sphere") {
        t = TargetModel::sphere(dim);
    } else {
        fail(ErrorCode::ConfigInvalid, "unknown target '" + name + "'");
    }
    detail::expect_empty(kv, text);
    if (t->dim() != dim)
        fail(ErrorCode::ConfigInvalid, "target '" + name + "' is one-dimensional");
    return *t;
}

/// axis:COUNT[:RADIUS] | lattice:RADIUS:COUNT | samples:N
inline ProbeSpec parse_probes(const std::string& text, std::uint64_t seed) {
    std::vector<std::string> parts;
    std::size_t pos = 0;
    while (true) {
        const auto c = text.find(':', pos);
        parts.push_back(text.substr(pos, c - pos));
        if (c == std::string::npos) break;
        pos = c + 1;
    }
    auto num = [&](std::size_t i) {
        double v = 0.0;
        const auto& s = parts.at(i);
        const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
        if (res.ec != std::errc() || res.ptr != s.data() + s.size())
            fail(ErrorCode::ConfigInvalid, "bad probe spec '" + text + "'");
        return v;
    };
    try {
        if (parts[0] == "axis" && (parts.size() == 2 || parts.size() == 3)) {
            Axis1D a{static_cast<int>(num(1)), parts.size() == 3 ? num(2) : 6.0};
            if (a.count >= 1 && a.radius >= 0.0) return a;
        } else if (parts[0] == "lattice" && parts.size() == 3) {
            LatticeBox b{num(1), static_cast<int>(num(2))};
            if (b.count >= 1 && b.radius >= 0.0) return b;
        } else if (parts[0] == "samples" && parts.size() == 2) {
            const double n = num(1);
            if (n >= 1) return TargetSamples{static_cast<std::size_t>(n), seed};
        }
    } catch (const std::out_of_range&) {
    }
    fail(ErrorCode::ConfigInvalid, "bad probe spec '" + text + "'");
}

/// "8..1024" (doubling), "8,16,32" or a single integer.
inline std::vector<int> parse_steps(const std::string& text) {
    std::vector<int> out;
    auto to_int = [&](const std::string& s) {
        int v = 0;
        const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
        if (res.ec != std::errc() || res.ptr != s.data() + s.size() || v < 1)
            fail(ErrorCode::ConfigInvalid, "bad step count '" + s + "'");
        return v;
    };
    if (const auto dots = text.find(".."); dots != std::string::npos) {
        const int lo = to_int(text.substr(0, dots)), hi = to_int(text.substr(dots + 2));
        if (lo > hi) fail(ErrorCode::ConfigInvalid, "empty step range '" + text + "'");
        for (long long n = lo; n <= hi; n *= 2) out.push_back(static_cast<int>(n));
        return out;
    }
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto comma = std::min(text.find(',', pos), text.size());
        out.push_back(to_int(text.substr(pos, comma - pos)));
        pos = comma + 1;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

enum class Experiment { Validate, Regularity, Converge, Transport, Sphere };

inline std::string experiment_name(Experiment e) {
    switch (e) {
        case Experiment::Validate: return "validate";
        case Experiment::Regularity: return "regularity";
        case Experiment::Converge: return "converge";
        case Experiment::Transport: return "transport";
        case Experiment::Sphere: return "sphere";
    }
    return "unknown";
}

inline Experiment parse_experiment(const std::string& s) {
    for (Experiment e : {Experiment::Validate, Experiment::Regularity, Experiment::Converge, Experiment::Transport,
                         Experiment::Sphere})
        if (experiment_name(e) == s) return e;
    fail(ErrorCode::ConfigInvalid, "unknown experiment '" + s + "'");
}

struct ExperimentConfig {
    Experiment experiment = Experiment::Validate;
    std::string family = "lipman-linear";
    std::string target = "gaussian:s=2";
    std::vector<int> dims{1};
    std::vector<int> steps{8, 16, 32, 64, 128, 256, 512, 1024};
    std::optional<double> tau;  // empty: the default stopping rule of the experiment
    std::string probes;         // empty: per-target default
    std::string sampler = "flow";
    int t_refine = 256;
    std::vector<double> t_grid;  // sphere times; empty: 1 - 2^-j, j = 3..12
    int n_points = 100;
    std::uint64_t seed = 0;
    unsigned threads = 1;
    std::string output = "out";
    bool inject_failure = false;
};

namespace detail {

inline const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> keys{"experiment", "family",   "target", "dims",    "steps",
                                               "tau",        "probes",   "sampler", "t_refine", "t_grid",
                                               "n_points",   "seed",     "threads", "output",  "inject_failure"};
    return keys;
}

template <class T>
T get_as(const json& j, const char* key) {
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        fail(ErrorCode::ConfigInvalid, std::string("config key '") + key + "': " + e.what());
    }
}

}  // namespace detail

/// Applies the keys present in `j` on top of `cfg`.
inline void apply_json(ExperimentConfig& cfg, const json& j) {
    if (!j.is_object()) fail(ErrorCode::ConfigInvalid, "config must be a JSON object");
    for (const auto& [key, _] : j.items())
        if (std::find(detail::config_keys().begin(), detail::config_keys().end(), key) == detail::config_keys().end())
            fail(ErrorCode::ConfigInvalid, "unknown config key '" + key + "'");
    using detail::get_as;
    if (j.contains("experiment")) cfg.experiment = parse_experiment(get_as<std::string>(j, "experiment"));
    if (j.contains("family")) cfg.family = get_as<std::string>(j, "family");
    if (j.contains("target")) cfg.target = get_as<std::string>(j, "target");
    if (j.contains("dims")) cfg.dims = get_as<std::vector<int>>(j, "dims");
    if (j.contains("steps")) {
        const json& s = j.at("steps");
        cfg.steps = s.is_string() ? parse_steps(s.get<std::string>()) : get_as<std::vector<int>>(j, "steps");
    }
    if (j.contains("tau")) {
        const json& t = j.at("tau");
        if (t.is_string() && t.get<std::string>() == "paper") cfg.tau.reset();
        else if (t.is_number()) cfg.tau = t.get<double>();
        else fail(ErrorCode::ConfigInvalid, "tau must be \"paper\" or a number");
    }
    if (j.contains("probes")) cfg.probes = get_as<std::string>(j, "probes");
    if (j.contains("sampler")) {
        cfg.sampler = get_as<std::string>(j, "sampler");
        if (cfg.sampler == "ode") cfg.sampler = "flow";
    }
    if (j.contains("t_refine")) cfg.t_refine = get_as<int>(j, "t_refine");
    if (j.contains("t_grid")) cfg.t_grid = get_as<std::vector<double>>(j, "t_grid");
    if (j.contains("n_points")) cfg.n_points = get_as<int>(j, "n_points");
    if (j.contains("seed")) cfg.seed = get_as<std::uint64_t>(j, "seed");
    if (j.contains("threads")) cfg.threads = get_as<unsigned>(j, "threads");
    if (j.contains("output")) cfg.output = get_as<std::string>(j, "output");
    if (j.contains("inject_failure")) cfg.inject_failure = get_as<bool>(j, "inject_failure");
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::ConfigInvalid, "cannot open config " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        fail(ErrorCode::ConfigInvalid, std::string("config parse error: ") + e.what());
    }
    ExperimentConfig cfg;
    apply_json(cfg, j);
    return cfg;
}

inline void validate_config(const ExperimentConfig& cfg) {
    auto bad = [](const std::string& what) { fail(ErrorCode::ConfigInvalid, what); };
    if (cfg.dims.empty()) bad("dims must be nonempty");
    for (int d : cfg.dims)
        if (d < 1) bad("dims must be >= 1");
    if (cfg.steps.empty()) bad("steps must be nonempty");
    for (int n : cfg.steps)
        if (n < 1) bad("steps must be >= 1");
    if (cfg.tau && !(*cfg.tau > 0.0 && *cfg.tau < 1.0) && cfg.sampler != "sde") bad("tau must lie in (0,1)");
    if (cfg.sampler != "flow" && cfg.sampler != "sde") bad("sampler must be flow or sde");
    if (cfg.t_refine < 2) bad("t_refine must be >= 2");
    if (cfg.n_points < 1) bad("n_points must be >= 1");
    for (double t : cfg.t_grid)
        if (!(t > 0.0 && t < 1.0)) bad("t_grid entries must lie in (0,1)");
    (void)parse_family(cfg.family);
    for (int d : cfg.dims) (void)parse_target(cfg.target, d);
    if (!cfg.probes.empty()) (void)parse_probes(cfg.probes, cfg.seed);
}

/// Echo of the experiment-defining keys (threads and output excluded: they do
/// not change results).
inline json config_echo(const ExperimentConfig& cfg) {
    json j;
    j["experiment"] = experiment_name(cfg.experiment);
    j["family"] = cfg.family;
    j["target"] = cfg.target;
    j["dims"] = cfg.dims;
    j["steps"] = cfg.steps;
    if (cfg.tau) j["tau"] = *cfg.tau;
    else j["tau"] = "paper";
    j["probes"] = cfg.probes;
    j["sampler"] = cfg.sampler;
    j["t_refine"] = cfg.t_refine;
    j["t_grid"] = cfg.t_grid;
    j["n_points"] = cfg.n_points;
    j["seed"] = cfg.seed;
    j["inject_failure"] = cfg.inject_failure;
    return j;
}

// ---------------------------------------------------------------------------
// Convergence pipeline (exact Gaussian laws)
// ---------------------------------------------------------------------------

struct ConvergenceCell {
    int d = 1;
    int N = 0;
    double tau = 0.0;
    double h_max = 0.0;
    double w2 = 0.0;
    double bound_ratio = 0.0;
    std::size_t unstable_steps = 0;
};

/// Euler on the probability-flow ODE for N(0, s^2 Id): tau by the flow rule,
/// E = W2(Law(X_N), p*) by Bures, normalized by sqrt(d) log^2 N / N.
inline ConvergenceCell converge_flow_cell(const Schedule& schedule, double s, int d, int N,
                                          std::optional<double> tau = std::nullopt) {
    const StopTimes stop = tau ? StopTimes{*tau, 1.0} : select_tau(SamplerKind::Flow, N, schedule.params().p);
    const GeometricGrid grid = build_geometric_grid(stop.tau, 1.0, N);
    const double var = s * s;
    std::vector<double> slopes(N);
    for (int k = 0; k < N; ++k) slopes[k] = velocity_slope_gaussian(eval_schedule(schedule, grid.nodes[k]), var);
    const double gb0 = schedule.gbar(0.0), f0 = schedule.f().value(0.0);
    const GaussianLaw law = propagate_affine_law(slopes, grid, {Vec::Zero(d), f0 * f0 * var + gb0 * gb0});
    const double E = w2_gaussian_isotropic(law.mean, std::sqrt(law.var), Vec::Zero(d), s, d).value;
    const double lnN = std::log(static_cast<double>(N));
    return {d, N, stop.tau, grid.h_max, E, E * N / (std::sqrt(double(d)) * lnN * lnN),
            stability_violations(slopes, grid).size()};
}

/// Euler-Maruyama on the reverse OU process for N(0, s^2 Id): T = log N,
/// tau = T - 1/N^2, b = sqrt 2, exact Gaussian increments; normalized by
/// sqrt(d) log^3 N / N.
inline ConvergenceCell converge_sde_cell(double s, int d, int N) {
    const StopTimes stop = select_tau(SamplerKind::Diffusion, N);
    const GeometricGrid grid = build_geometric_grid(stop.tau, stop.T, N);
    const ReverseOU ou{stop.T};
    const double var = s * s;
    std::vector<double> slopes(N);
    for (int k = 0; k < N; ++k) slopes[k] = reverse_sde_slope_gaussian(var, ou.theta(grid.nodes[k]));
    const double th0 = ou.theta(0.0);
    const GaussianLaw start{Vec::Zero(d), th0 * th0 * var + 1.0 - th0 * th0};
    const GaussianLaw law =
        propagate_affine_law(slopes, grid, start, increment_variances(DiffusionAmplitude::fixed(std::sqrt(2.0)), grid));
    const double E = w2_gaussian_isotropic(law.mean, std::sqrt(law.var), Vec::Zero(d), s, d).value;
    const double lnN = std::log(static_cast<double>(N));
    return {d, N, stop.tau, grid.h_max, E, E * N / (std::sqrt(double(d)) * lnN * lnN * lnN),
            stability_violations(slopes, grid).size()};
}

struct RateSummary {
    double ratio_variation = 0.0;  // max / min of the normalized error over N
    double top_decade_slope = 0.0; // log-log slope of E vs N over N >= N_max / 10
};

inline RateSummary rate_summary(const std::vector<ConvergenceCell>& cells) {
    require(cells.size() >= 2, ErrorCode::DegenerateFit, "need at least two step counts");
    double lo = INFINITY, hi = 0.0;
    int n_max = 0;
    for (const auto& c : cells) {
        lo = std::min(lo, c.bound_ratio);
        hi = std::max(hi, c.bound_ratio);
        n_max = std::max(n_max, c.N);
    }
    std::vector<double> ns, es;
    for (const auto& c : cells)
        if (10 * c.N >= n_max) ns.push_back(c.N), es.push_back(c.w2);
    return {hi / lo, loglog_fit(ns, es).slope};
}

// ---------------------------------------------------------------------------
// Sphere series
// ---------------------------------------------------------------------------

struct SphereRow {
    double t = 0.0, sigma2 = 0.0;
    double lambda_origin = 0.0, lambda_tan = 0.0, lambda_rad = 0.0;
};

inline std::vector<double> dyadic_times(int j_lo, int j_hi) {
    std::vector<double> ts;
    for (int j = j_lo; j <= j_hi; ++j) ts.push_back(1.0 - std::ldexp(1.0, -j));
    return ts;
}

inline std::vector<SphereRow> sphere_series(int d, const std::vector<double>& ts) {
    std::vector<SphereRow> rows;
    for (double t : ts) {
        const SphereDriftPoint p = sphere_eigenvalues(d, t, 1.0);
        rows.push_back({t, 1.0 - t * t, sphere_origin_jacobian(d, t), p.lambda_tan, p.lambda_rad});
    }
    return rows;
}

struct SphereSlopes {
    double origin = 0.0, radial = 0.0, tangential = 0.0;
};

/// Slopes of log|lambda| against log sigma_t.
inline SphereSlopes sphere_slopes(const std::vector<SphereRow>& rows) {
    std::vector<double> sig, o, r, t;
    for (const auto& row : rows) {
        sig.push_back(std::sqrt(row.sigma2));
        o.push_back(std::abs(row.lambda_origin));
        r.push_back(std::abs(row.lambda_rad));
        t.push_back(std::abs(row.lambda_tan));
    }
    return {loglog_fit(sig, o).slope, loglog_fit(sig, r).slope, loglog_fit(sig, t).slope};
}

// ---------------------------------------------------------------------------
// Runner
// ---------------------------------------------------------------------------

struct Criterion {
    std::string name;
    double value = 0.0;
    bool passed = false;
    std::string requirement;
};

struct RunOutput {
    std::string csv;
    json summary;
    bool passed = false;
};

namespace detail {

inline json criteria_json(const std::vector<Criterion>& cs) {
    json arr = json::array();
    for (const auto& c : cs) {
        json j;
        j["name"] = c.name;
        j["value"] = c.value;
        j["requirement"] = c.requirement;
        j["pass"] = c.passed;
        arr.push_back(j);
    }
    return arr;
}

inline json nullable(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

inline std::string dlabel(int d) { return "[d=" + std::to_string(d) + "]"; }

inline ProbeSpec default_probes(const ExperimentConfig& cfg, int d) {
    if (!cfg.probes.empty()) return parse_probes(cfg.probes, cfg.seed);
    return d == 1 ? ProbeSpec{Axis1D{201, 6.0}} : ProbeSpec{Axis1D{11, 6.0}};
}

/// Drops leading times at which the schedule has no finite derivatives.
inline std::vector<double> evaluable_times(const Schedule& s, std::vector<double> ts) {
    while (!ts.empty()) {
        try {
            const ScheduleValues sv = eval_schedule(s, ts.front());
            if (std::isfinite(sv.a1) && std::isfinite(sv.c1)) break;
        } catch (const Error&) {
        }
        ts.erase(ts.begin());
    }
    return ts;
}

inline double relative_change(double a, double b) {
    const double scale = std::max(std::abs(a), std::abs(b));
    return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

inline RunOutput run_validate(const ExperimentConfig& cfg, json& report, std::vector<Criterion>& crit) {
    const Schedule s = parse_family(cfg.family);
    const ValidationReport rep = validate_assumptions(s);
    CsvWriter csv({"condition", "passed", "witness"});
    for (const auto& c : rep.conditions) {
        csv.row({c.name, c.passed ? "1" : "0", c.witness ? format_double(*c.witness) : ""});
        crit.push_back({c.name, c.witness.value_or(0.0), c.passed, c.detail});
    }
    report["gamma_max"] = nullable(rep.gamma_max);
    report["q_min"] = nullable(rep.q_min);
    report["q_constant"] = nullable(rep.q_constant);
    const TerminalExponent te = terminal_exponent(s, 0.99, 0.9999);
    report["terminal_exponent"] = te.p_hat;
    return {csv.str(), {}, false};
}

inline RunOutput run_regularity(const ExperimentConfig& cfg, json& report, std::vector<Criterion>& crit) {
    const Schedule s = parse_family(cfg.family);
    const double tau = cfg.tau.value_or(1.0 - 1e-4);
    const std::vector<double> times = evaluable_times(s, profile_time_grid(tau, cfg.t_refine));
    CsvWriter csv({"d", "t", "lambda_max", "op_norm", "time_slope"});
    json per_dim = json::array();
    for (int d : cfg.dims) {
        const TargetModel target = parse_target(cfg.target, d);
        const ProbeSpec probes = default_probes(cfg, d);
        const RegularityProfile prof = profile(target, s, times, probes, cfg.threads);
        bool ordered = true;
        for (std::size_t k = 0; k < times.size(); ++k) {
            csv.row({std::to_string(d), format_double(times[k]), format_double(prof.lambda_max[k]),
                     format_double(prof.op_norm[k]), format_double(prof.time_slope[k])});
            ordered = ordered && prof.lambda_max[k] <= prof.op_norm[k] * (1.0 + 1e-12) + 1e-300;
        }
        crit.push_back({"lambda_max<=op_norm" + dlabel(d), 0.0, ordered, "pointwise"});

        json j;
        j["d"] = d;
        j["probes"] = describe(probes);
        const LambdaIntegral I = integral_lambda_max(prof, times.front());
        j["integral_signed"] = I.signed_integral;
        j["integral_positive"] = I.positive_integral;
        for (const auto& [key, values, power] :
             {std::tuple{"op_norm", &prof.op_norm, 1.0}, std::tuple{"time_slope", &prof.time_slope, 2.0}}) {
            try {
                j[std::string(key) + "_exponent"] = exponent_fit(times, *values, 0.9, tau).slope;
            } catch (const Error&) {
                j[std::string(key) + "_exponent"] = nullptr;
            }
            j[std::string(key) + "_envelope"] = envelope(times, *values, 0.5, power);
        }
        if (target.weakly_log_concave()) {
            const RegularityProfile twice = profile(target, s, times, doubled(probes), cfg.threads);
            const double op_change =
                relative_change(envelope(times, prof.op_norm, 0.5, 1.0), envelope(times, twice.op_norm, 0.5, 1.0));
            const double ts_change = relative_change(envelope(times, prof.time_slope, 0.0, 2.0),
                                                     envelope(times, twice.time_slope, 0.0, 2.0));
            crit.push_back({"op_norm envelope probe-stable" + dlabel(d), op_change, op_change < 0.05, "< 0.05"});
            crit.push_back({"time_slope envelope probe-stable" + dlabel(d), ts_change, ts_change < 0.05, "< 0.05"});
        }
        per_dim.push_back(j);
    }
    report["tau"] = tau;
    report["profiles"] = per_dim;
    return {csv.str(), {}, false};
}

inline RunOutput run_converge(const ExperimentConfig& cfg, json& report, std::vector<Criterion>& crit) {
    const bool sde = cfg.sampler == "sde";
    const Schedule s = parse_family(cfg.family);
    const auto [name, kv] = parse_spec(cfg.target);
    if (name != "gaussian" || kv.count("m"))
        fail(ErrorCode::ConfigInvalid, "converge needs a centred gaussian target (exact-law pipeline)");
    const double sd = kv.count("s") ? kv.at("s") : 1.0;
    for (int n : cfg.steps)
        if (n < 3) fail(ErrorCode::ConfigInvalid, "converge needs step counts >= 3");

    const std::size_t nd = cfg.dims.size(), nn = cfg.steps.size();
    std::vector<ConvergenceCell> cells(nd * nn);
    parallel_for(cells.size(), cfg.threads, [&](std::size_t i) {
        const int d = cfg.dims[i / nn], N = cfg.steps[i % nn];
        cells[i] = sde ? converge_sde_cell(sd, d, N) : converge_flow_cell(s, sd, d, N, cfg.tau);
    });

    CsvWriter csv({"d", "N", "tau", "h_max", "w2", "bound_ratio"});
    std::size_t unstable = 0;
    for (const auto& c : cells) {
        csv.row({std::to_string(c.d), std::to_string(c.N), format_double(c.tau), format_double(c.h_max),
                 format_double(c.w2), format_double(c.bound_ratio)});
        unstable += c.unstable_steps;
    }
    const double slope_lo = -1.35, slope_hi = sde ? -0.7 : -0.75;
    for (std::size_t a = 0; a < nd; ++a) {
        const std::vector<ConvergenceCell> row(cells.begin() + a * nn, cells.begin() + (a + 1) * nn);
        if (row.size() < 2) continue;
        const RateSummary r = rate_summary(row);
        const int d = cfg.dims[a];
        crit.push_back({"bound ratio variation" + dlabel(d), r.ratio_variation, r.ratio_variation < 3.0, "< 3"});
        crit.push_back({"top-decade slope" + dlabel(d), r.top_decade_slope,
                        r.top_decade_slope >= slope_lo && r.top_decade_slope <= slope_hi,
                        "[" + format_double(slope_lo) + ", " + format_double(slope_hi) + "]"});
    }
    report["sampler"] = sde ? "reverse-ou" : "probability-flow";
    report["unstable_steps"] = unstable;
    return {csv.str(), {}, false};
}

inline RunOutput run_transport(const ExperimentConfig& cfg, json& report, std::vector<Criterion>& crit) {
    const Schedule s = parse_family(cfg.family);
    const int d = cfg.dims.front();
    const TargetModel target = parse_target(cfg.target, d);
    const double tau = cfg.tau.value_or(1.0 - 1e-4);
    const int N = cfg.steps.back();
    const GeometricGrid grid = build_geometric_grid(tau, 1.0, N);
    const std::vector<double> times = evaluable_times(s, grid.nodes);
    const RegularityProfile prof = profile(target, s, times, default_probes(cfg, d), cfg.threads);
    const double cert = lipschitz_certificate(prof, times.front());

    std::vector<Vec> x0s = sample(TargetModel::gaussian(d, s.gbar(0.0)), cfg.n_points, cfg.seed);
    const std::vector<FlowMapState> states = integrate_flows(target, s, grid, x0s, cfg.threads);
    CsvWriter csv({"index", "x0_norm", "jac_op_norm", "path_log_cert", "x_tau_norm"});
    double max_jac = 0.0;
    for (std::size_t i = 0; i < states.size(); ++i) {
        const double jn = op_norm(states[i].J);
        max_jac = std::max(max_jac, jn);
        csv.row({std::to_string(i), format_double(x0s[i].norm()), format_double(jn),
                 format_double(states[i].log_cert), format_double(states[i].x.norm())});
    }
    const double upper = cert * (1.0 + 10.0 * grid.h_max);
    crit.push_back({"certificate dominance", max_jac, max_jac <= upper, "<= " + format_double(upper)});

    json ratios = json::object();
    if (target.is_gaussian() || std::holds_alternative<Quadrature1D>(target.variant())) {
        const AuditReport audit = poincare_audit(target, cert);
        for (const auto& e : audit.entries) ratios[e.name] = e.ratio;
        crit.push_back({"poincare transfer", audit.max_ratio(), audit.passed(), "<= " + format_double(audit.bound)});
    }
    report["certificate"] = cert;
    report["max_jac_norm"] = max_jac;
    report["poincare_ratios"] = ratios;
    report["h_max"] = grid.h_max;
    report["early_stopping_bound"] = early_stopping_bound(target, eval_schedule(s, tau));
    return {csv.str(), {}, false};
}

inline RunOutput run_sphere(const ExperimentConfig& cfg, json& report, std::vector<Criterion>& crit) {
    const int d = cfg.dims.front();
    require(d >= 2, ErrorCode::ConfigInvalid, "sphere needs dimension >= 2");
    const std::vector<double> ts = cfg.t_grid.empty() ? dyadic_times(3, 12) : cfg.t_grid;
    const std::vector<SphereRow> rows = sphere_series(d, ts);
    CsvWriter csv({"t", "sigma2", "lambda_origin", "lambda_tan_r1", "lambda_rad_r1"});
    for (const auto& r : rows)
        csv.row({format_double(r.t), format_double(r.sigma2), format_double(r.lambda_origin),
                 format_double(r.lambda_tan), format_double(r.lambda_rad)});
    if (rows.size() >= 2) {
        const SphereSlopes sl = sphere_slopes(rows);
        crit.push_back({"origin slope", sl.origin, std::abs(sl.origin + 4.0) <= 0.1, "-4 +- 0.1"});
        crit.push_back({"radial slope", sl.radial, std::abs(sl.radial + 2.0) <= 0.1, "-2 +- 0.1"});
        crit.push_back({"tangential slope", sl.tangential, sl.tangential >= -1.2, ">= -1.2"});
        report["slopes"] = {{"origin", sl.origin}, {"radial", sl.radial}, {"tangential", sl.tangential}};
    }
    return {csv.str(), {}, false};
}

}  // namespace detail

/// Runs one experiment. Numerical errors propagate as flowreg::Error.
inline RunOutput run_experiment(const ExperimentConfig& cfg, const std::string& git_describe = FLOWREG_GIT_DESCRIBE) {
    validate_config(cfg);
    const auto start = std::chrono::steady_clock::now();
    json report = json::object();
    std::vector<Criterion> crit;
    RunOutput out;
    switch (cfg.experiment) {
        case Experiment::Validate: out = detail::run_validate(cfg, report, crit); break;
        case Experiment::Regularity: out = detail::run_regularity(cfg, report, crit); break;
        case Experiment::Converge: out = detail::run_converge(cfg, report, crit); break;
        case Experiment::Transport: out = detail::run_transport(cfg, report, crit); break;
        case Experiment::Sphere: out = detail::run_sphere(cfg, report, crit); break;
    }
    if (cfg.inject_failure) crit.push_back({"injected failure", 1.0, false, "test hook"});
    out.passed = std::all_of(crit.begin(), crit.end(), [](const Criterion& c) { return c.passed; });
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    json& j = out.summary;
    j["experiment"] = experiment_name(cfg.experiment);
    j["config"] = config_echo(cfg);
    j["git_describe"] = git_describe;
    for (auto& [k, v] : report.items()) j[k] = v;
    j["criteria"] = detail::criteria_json(crit);
    j["pass"] = out.passed;
    j["wall_time_s"] = wall;
    return out;
}

/// Writes <out>/<experiment>.csv and <out>/<experiment>.summary.json.
inline void write_outputs(const ExperimentConfig& cfg, const RunOutput& out) {
    namespace fs = std::filesystem;
    const fs::path dir(cfg.output);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) fail(ErrorCode::ConfigInvalid, "cannot create output directory " + dir.string());
    const std::string stem = experiment_name(cfg.experiment);
    std::ofstream(dir / (stem + ".csv"), std::ios::binary) << out.csv;
    std::ofstream(dir / (stem + ".summary.json"), std::ios::binary) << out.summary.dump(2) << '\n';
}

/// 0 pass, 2 invalid configuration, 3 failed criterion or numerical failure.
inline int exit_code_for(const Error& e) { return e.code() == ErrorCode::ConfigInvalid ? 2 : 3; }

}  // namespace flowreg
