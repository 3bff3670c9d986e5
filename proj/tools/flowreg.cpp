#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "flowreg/experiments.hpp"

namespace {

struct Overrides {
    std::optional<std::string> config, out, family, target, dims, steps, tau, probes, sampler, t_grid;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
    std::optional<int> t_refine, dim, n_points;
    bool inject_failure = false;
};

std::vector<double> parse_t_grid(const std::string& text) {
    if (text.rfind("dyadic:", 0) == 0) {
        const std::string range = text.substr(7);
        const auto dots = range.find("..");
        if (dots == std::string::npos) flowreg::fail(flowreg::ErrorCode::ConfigInvalid, "bad t-grid '" + text + "'");
        try {
            return flowreg::dyadic_times(std::stoi(range.substr(0, dots)), std::stoi(range.substr(dots + 2)));
        } catch (const std::exception&) {
            flowreg::fail(flowreg::ErrorCode::ConfigInvalid, "bad t-grid '" + text + "'");
        }
    }
    std::vector<double> ts;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto comma = std::min(text.find(',', pos), text.size());
        const std::string item = text.substr(pos, comma - pos);
        double v = 0.0;
        const auto res = std::from_chars(item.data(), item.data() + item.size(), v);
        if (res.ec != std::errc() || res.ptr != item.data() + item.size())
            flowreg::fail(flowreg::ErrorCode::ConfigInvalid, "bad t-grid value '" + item + "'");
        ts.push_back(v);
        pos = comma + 1;
    }
    return ts;
}

flowreg::ExperimentConfig resolve(flowreg::Experiment exp, const Overrides& o) {
    flowreg::ExperimentConfig cfg;
    if (o.config) cfg = flowreg::load_config(*o.config);
    cfg.experiment = exp;
    if (const char* env = std::getenv("FLOWREG_SEED")) {
        std::uint64_t seed = 0;
        const std::string s(env);
        const auto res = std::from_chars(s.data(), s.data() + s.size(), seed);
        if (res.ec != std::errc() || res.ptr != s.data() + s.size())
            flowreg::fail(flowreg::ErrorCode::ConfigInvalid, "FLOWREG_SEED is not an unsigned integer");
        cfg.seed = seed;
    }
    if (o.seed) cfg.seed = *o.seed;
    if (o.threads) cfg.threads = *o.threads;
    if (o.out) cfg.output = *o.out;
    if (o.family) cfg.family = *o.family;
    if (o.target) cfg.target = *o.target;
    if (o.dims) cfg.dims = flowreg::parse_steps(*o.dims);
    if (o.dim) cfg.dims = {*o.dim};
    if (o.steps) cfg.steps = flowreg::parse_steps(*o.steps);
    if (o.tau) {
        if (*o.tau == "paper") {
            cfg.tau.reset();
        } else {
            try {
                cfg.tau = std::stod(*o.tau);
            } catch (const std::exception&) {
                flowreg::fail(flowreg::ErrorCode::ConfigInvalid, "tau must be 'paper' or a number");
            }
        }
    }
    if (o.probes) cfg.probes = *o.probes;
    if (o.sampler) cfg.sampler = *o.sampler == "ode" ? "flow" : *o.sampler;
    if (o.t_refine) cfg.t_refine = *o.t_refine;
    if (o.t_grid) cfg.t_grid = parse_t_grid(*o.t_grid);
    if (o.n_points) cfg.n_points = *o.n_points;
    if (o.inject_failure) cfg.inject_failure = true;
    cfg.threads = flowreg::resolve_threads(cfg.threads);
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Regularity and sampling-error experiments for flow matching and diffusion drifts"};
    app.require_subcommand(1);
    app.fallthrough();

    Overrides o;
    app.add_option("--config", o.config, "JSON config file");
    app.add_option("--seed", o.seed, "64-bit seed (overrides config and FLOWREG_SEED)");
    app.add_option("--out", o.out, "output directory");
    app.add_option("--threads", o.threads, "worker threads, 0 = hardware concurrency");
    app.add_flag("--inject-failure", o.inject_failure, "append a failing criterion (exit-code test hook)")
        ->group("");

    struct Sub {
        flowreg::Experiment exp;
        const char* help;
    };
    const Sub subs[] = {
        {flowreg::Experiment::Validate, "check a schedule family against its assumptions"},
        {flowreg::Experiment::Regularity, "regularity profiles of the velocity field over time"},
        {flowreg::Experiment::Converge, "exact-law discretization error of the Euler samplers"},
        {flowreg::Experiment::Transport, "flow-map Jacobians, Lipschitz certificate, Poincare audit"},
        {flowreg::Experiment::Sphere, "eigenvalue series of the uniform-sphere drift"},
    };
    std::optional<flowreg::Experiment> chosen;
    for (const Sub& s : subs) {
        CLI::App* sub = app.add_subcommand(flowreg::experiment_name(s.exp), s.help);
        sub->add_option("--family", o.family, "schedule family, e.g. lipman-linear, diffusion");
        sub->add_option("--target", o.target, "target spec, e.g. gaussian:s=2, holder:K=1");
        sub->add_option("--dims", o.dims, "comma-separated dimensions");
        sub->add_option("--dim", o.dim, "single dimension");
        sub->add_option("--steps,--steps-list", o.steps, "step counts: 8..1024 or 8,16,32");
        sub->add_option("--tau", o.tau, "stopping time or 'paper'");
        sub->add_option("--probes", o.probes, "axis:COUNT[:RADIUS], lattice:RADIUS:COUNT or samples:N");
        sub->add_option("--sampler,--mode", o.sampler, "flow (alias ode) or sde");
        sub->add_option("--t-refine", o.t_refine, "geometric refinement steps of the profile time grid");
        sub->add_option("--t-grid", o.t_grid, "sphere times: dyadic:J0..J1 or a comma list");
        sub->add_option("--n-points", o.n_points, "initial points for transport");
        sub->callback([&chosen, e = s.exp] { chosen = e; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "flowreg: " << e.what() << '\n';
        return 2;
    }

    try {
        const flowreg::ExperimentConfig cfg = resolve(*chosen, o);
        const flowreg::RunOutput out = flowreg::run_experiment(cfg);
        flowreg::write_outputs(cfg, out);
        for (const auto& c : out.summary["criteria"])
            std::cout << (c["pass"].get<bool>() ? "PASS " : "FAIL ") << c["name"].get<std::string>() << " = "
                      << c["value"].dump() << " (" << c["requirement"].get<std::string>() << ")\n";
        return out.passed ? 0 : 3;
    } catch (const flowreg::Error& e) {
        std::cerr << "flowreg: " << flowreg::to_string(e.code()) << ": " << e.what() << '\n';
        return flowreg::exit_code_for(e);
    } catch (const std::exception& e) {
        std::cerr << "flowreg: " << e.what() << '\n';
        return 3;
    }
}
