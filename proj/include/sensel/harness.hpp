#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "sensel/baselines.hpp"
#include "sensel/cost.hpp"
#include "sensel/errors.hpp"
#include "sensel/exact_oracle.hpp"
#include "sensel/gaussian_model.hpp"
#include "sensel/gibbs.hpp"
#include "sensel/io.hpp"
#include "sensel/learning.hpp"

namespace sensel {

/// M = AᵀA with A an n×n matrix of iid Uniform[-1, 1] entries. M is exactly symmetric.
inline GaussianModel gen_covariance(int n, std::uint64_t seed)
{
    if (n < 1 || n > kMaxSensors) throw SpecError("gen_covariance: n must be in [1, 64]");
    Rng rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Eigen::MatrixXd a(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) a(i, j) = u(rng);
    }
    Eigen::MatrixXd m(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = i; j < n; ++j) {
            double acc = 0.0;
            for (int k = 0; k < n; ++k) acc += a(k, i) * a(k, j);
            m(i, j) = acc;
            m(j, i) = acc;
        }
    }
    return GaussianModel(std::move(m));
}

inline std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Counter-based seed for (stream, index) under a master seed. Adding replications
/// never changes the seeds of existing ones.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index)
{
    return splitmix64(splitmix64(master ^ splitmix64(stream)) + index);
}

/// Runs fn(i) for i in [0, count) on up to `threads` workers. Results must be written
/// to per-index slots; the first exception is rethrown.
template <class F>
void parallel_for(std::size_t count, int threads, F&& fn)
{
    threads = std::max(1, std::min<int>(threads, static_cast<int>(std::max<std::size_t>(count, 1))));
    if (threads == 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::atomic<bool> failed{false};
    std::vector<std::jthread> pool;
    for (int w = 0; w < threads; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < count; i = next++) {
                if (failed) return;
                try {
                    fn(i);
                } catch (...) {
                    if (!failed.exchange(true)) failure = std::current_exception();
                    return;
                }
            }
        });
    }
    pool.clear();
    if (failure) std::rethrow_exception(failure);
}

struct ModelSource {
    std::optional<std::string> file;
    int n = 12;
    std::uint64_t seed = 1;
};

struct LearningSetup {
    double lambda_star = 2.0;
    double beta = 5.0;
    std::uint64_t steps = 2000;
    double lambda0 = 4.0;
    double b = 0.0;
    double c = 8.0;
    double step0 = 1.0;
    std::uint64_t tail_window = 100;
};

/// A reproducible experiment. `experiment` is one of:
///   fig1: cost vs β for OPTIMAL, exact π_β, finite-run BASICGIBBS and GREEDY;
///   fig2: error vs β on the cardinality slice for OPTIMAL, restricted exact π_β,
///         finite-run fixed-cardinality Gibbs and NEWGREEDY;
///   fig3: λ(t) paths of the learning scheme and their average.
struct ExperimentSpec {
    std::string experiment = "fig1";
    ModelSource model;
    double lambda = 2.3;
    std::vector<double> betas{0.5, 1, 2, 3, 5, 7, 10, 15, 20};
    int nbar = 5;
    std::uint64_t finite_steps = 100;
    int replications = 1;
    std::uint64_t seed = 1;
    LearningSetup learning;
    std::string out_dir;
    int threads = 1;

    nlohmann::json to_json() const
    {
        nlohmann::json m;
        if (model.file) {
            m["file"] = *model.file;
        } else {
            m["generate"] = {{"n", model.n}, {"seed", model.seed}};
        }
        return {{"experiment", experiment},
                {"model", m},
                {"lambda", lambda},
                {"betas", betas},
                {"nbar", nbar},
                {"finite_steps", finite_steps},
                {"replications", replications},
                {"seed", seed},
                {"learning",
                 {{"lambda_star", learning.lambda_star},
                  {"beta", learning.beta},
                  {"steps", learning.steps},
                  {"lambda0", learning.lambda0},
                  {"b", learning.b},
                  {"c", learning.c},
                  {"step0", learning.step0},
                  {"tail_window", learning.tail_window}}},
                {"out", out_dir}};
    }

    static ExperimentSpec from_json(const nlohmann::json& j)
    {
        ExperimentSpec s;
        try {
            s.experiment = j.value("experiment", s.experiment);
            if (j.contains("model")) {
                const auto& m = j.at("model");
                if (m.contains("file")) s.model.file = m.at("file").get<std::string>();
                if (m.contains("generate")) {
                    s.model.n = m.at("generate").value("n", s.model.n);
                    s.model.seed = m.at("generate").value("seed", s.model.seed);
                }
            }
            s.lambda = j.value("lambda", s.lambda);
            s.betas = j.value("betas", s.betas);
            s.nbar = j.value("nbar", s.nbar);
            s.finite_steps = j.value("finite_steps", s.finite_steps);
            s.replications = j.value("replications", s.replications);
            s.seed = j.value("seed", s.seed);
            s.out_dir = j.value("out", s.out_dir);
            s.threads = j.value("threads", s.threads);
            if (j.contains("learning")) {
                const auto& l = j.at("learning");
                auto& d = s.learning;
                d.lambda_star = l.value("lambda_star", d.lambda_star);
                d.beta = l.value("beta", d.beta);
                d.steps = l.value("steps", d.steps);
                d.lambda0 = l.value("lambda0", d.lambda0);
                d.b = l.value("b", d.b);
                d.c = l.value("c", d.c);
                d.step0 = l.value("step0", d.step0);
                d.tail_window = l.value("tail_window", d.tail_window);
            }
        } catch (const nlohmann::json::exception& e) {
            throw SpecError(std::string("experiment spec: ") + e.what());
        }
        return s;
    }

    /// All validation failures, empty when the spec is runnable.
    std::vector<std::string> problems() const
    {
        std::vector<std::string> p;
        if (experiment != "fig1" && experiment != "fig2" && experiment != "fig3") {
            p.push_back("unknown experiment '" + experiment + "' (expected fig1, fig2 or fig3)");
        }
        if (model.file) {
            if (!std::filesystem::exists(*model.file)) p.push_back("model file not found: " + *model.file);
        } else if (model.n < 1 || model.n > kMaxExactGibbs) {
            p.push_back("generated model size must be in [1, " + std::to_string(kMaxExactGibbs) + "]");
        }
        if (replications < 1) p.push_back("replications must be at least 1");
        if (!(lambda >= 0.0)) p.push_back("lambda must be nonnegative");
        if (experiment != "fig3") {
            if (betas.empty()) p.push_back("betas must not be empty");
            for (double b : betas) {
                if (!(b > 0.0)) p.push_back("every beta must be positive");
            }
            if (finite_steps < 1) p.push_back("finite_steps must be at least 1");
        }
        if (experiment == "fig2" && nbar < 0) p.push_back("nbar must be nonnegative");
        if (experiment == "fig3") {
            if (!(learning.beta > 0.0)) p.push_back("learning.beta must be positive");
            if (learning.steps < 1) p.push_back("learning.steps must be at least 1");
            if (!(learning.c > learning.b && learning.b >= 0.0)) p.push_back("need 0 <= learning.b < learning.c");
            if (!(learning.lambda0 >= learning.b && learning.lambda0 <= learning.c)) {
                p.push_back("learning.lambda0 must lie in [b, c]");
            }
            if (!(learning.step0 > 0.0)) p.push_back("learning.step0 must be positive");
        }
        if (threads < 1) p.push_back("threads must be at least 1");
        return p;
    }

    void validate() const
    {
        const auto p = problems();
        if (p.empty()) return;
        std::string msg = "invalid experiment spec:";
        for (const auto& s : p) msg += "\n  - " + s;
        throw SpecError(msg);
    }
};

/// Full-size presets: N = 18 sensors, λ = 2.3, 100-iteration finite runs.
inline ExperimentSpec preset(const std::string& name)
{
    ExperimentSpec s;
    s.model.n = 18;
    s.model.seed = 2017;
    if (name == "fig1") {
        s.experiment = "fig1";
    } else if (name == "fig2") {
        s.experiment = "fig2";
        s.nbar = 10;
        s.model.seed = 2018;
    } else if (name == "fig3") {
        s.experiment = "fig3";
        s.model.seed = 2019;
        s.replications = 1000;
        s.learning.steps = 1000;
        s.learning.tail_window = 100;
    } else {
        throw SpecError("unknown preset '" + name + "'");
    }
    return s;
}

struct Report {
    nlohmann::json summary;
    std::map<std::string, std::string> files;  // file name -> content
};

inline GaussianModel load_model(const ModelSource& src)
{
    if (src.file) return io::load_covariance(*src.file);
    return gen_covariance(src.n, src.seed);
}

namespace detail {

inline Report run_fig1(const ExperimentSpec& spec, const GaussianModel& model, const ErrorTable& table)
{
    using io::fmt;
    const int n = table.dimension();
    const auto h = table.costs(spec.lambda);
    const Optimum opt = exhaustive_optimum(table, spec.lambda);
    const GreedyResult greedy = greedy_unconstrained(model, spec.lambda);

    const std::size_t nb = spec.betas.size();
    const auto reps = static_cast<std::size_t>(spec.replications);
    std::vector<double> finals(nb * reps);
    std::vector<std::uint64_t> seeds(nb * reps);
    parallel_for(nb * reps, spec.threads, [&](std::size_t i) {
        const std::size_t bi = i / reps;
        const std::size_t r = i % reps;
        seeds[i] = derive_seed(spec.seed, bi, r);
        RunOptions ro;
        ro.steps = spec.finite_steps;
        ro.seed = seeds[i];
        ro.stride = spec.finite_steps;
        finals[i] = run_basic_gibbs(table, spec.lambda, spec.betas[bi], ro).state.cost;
    });

    Report rep;
    std::string csv = "beta,optimal_cost,steady_state_cost,finite_gibbs_cost,greedy_cost\n";
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t bi = 0; bi < nb; ++bi) {
        const double beta = spec.betas[bi];
        const auto dist = gibbs_distribution(n, h, beta);
        const double steady = dist.expectation([&](std::uint64_t b) { return h[b]; });
        double fin = 0.0;
        for (std::size_t r = 0; r < reps; ++r) fin += finals[bi * reps + r];
        fin /= static_cast<double>(reps);
        csv += fmt(beta) + ',' + fmt(opt.value) + ',' + fmt(steady) + ',' + fmt(fin) + ',' + fmt(greedy.value) + '\n';
        rows.push_back({{"beta", beta}, {"steady_state_cost", steady}, {"finite_gibbs_cost", fin}});
    }
    rep.files["fig1.csv"] = csv;
    rep.summary = {{"optimum", io::config_json(opt.config)},
                   {"optimal_cost", opt.value},
                   {"greedy", io::config_json(greedy.config)},
                   {"greedy_cost", greedy.value},
                   {"per_beta", rows},
                   {"seeds", seeds}};
    return rep;
}

inline Report run_fig2(const ExperimentSpec& spec, const GaussianModel& model, const ErrorTable& table)
{
    using io::fmt;
    const int n = table.dimension();
    if (spec.nbar > n) throw SpecError("nbar exceeds the number of sensors");
    const Optimum opt = exhaustive_cardinality_optimum(table, spec.nbar);
    const GreedyResult ng = newgreedy_cardinality(model, spec.nbar);

    const std::size_t nb = spec.betas.size();
    const auto reps = static_cast<std::size_t>(spec.replications);
    std::vector<double> finals(nb * reps);
    std::vector<std::uint64_t> seeds(nb * reps);
    parallel_for(nb * reps, spec.threads, [&](std::size_t i) {
        const std::size_t bi = i / reps;
        const std::size_t r = i % reps;
        seeds[i] = derive_seed(spec.seed, bi, r);
        RunOptions ro;
        ro.steps = spec.finite_steps;
        ro.seed = seeds[i];
        ro.stride = spec.finite_steps;
        finals[i] = run_fixed_cardinality_gibbs(table, spec.nbar, spec.betas[bi], ro).state.cost;
    });

    Report rep;
    std::string csv = "beta,optimal_error,steady_state_error,finite_gibbs_error,newgreedy_error\n";
    nlohmann::json rows = nlohmann::json::array();
    const auto& err = table.values();
    for (std::size_t bi = 0; bi < nb; ++bi) {
        const double beta = spec.betas[bi];
        const auto dist = exact_gibbs_cardinality(table, spec.nbar, beta);
        const double steady = dist.expectation([&](std::uint64_t b) { return err[b]; });
        double fin = 0.0;
        for (std::size_t r = 0; r < reps; ++r) fin += finals[bi * reps + r];
        fin /= static_cast<double>(reps);
        csv += fmt(beta) + ',' + fmt(opt.value) + ',' + fmt(steady) + ',' + fmt(fin) + ',' + fmt(ng.value) + '\n';
        rows.push_back({{"beta", beta}, {"steady_state_error", steady}, {"finite_gibbs_error", fin}});
    }
    rep.files["fig2.csv"] = csv;
    rep.summary = {{"optimum", io::config_json(opt.config)},
                   {"optimal_error", opt.value},
                   {"newgreedy", io::config_json(ng.config)},
                   {"newgreedy_error", ng.value},
                   {"newgreedy_filled_with_nonimproving", ng.filled_with_nonimproving},
                   {"per_beta", rows},
                   {"seeds", seeds}};
    return rep;
}

inline Report run_fig3(const ExperimentSpec& spec, const ErrorTable& table)
{
    using io::fmt;
    const auto& ls = spec.learning;
    const ActiveCountResponse f(table, ls.beta);
    const double nbar = f(ls.lambda_star);

    LearningParams params;
    params.nbar_target = nbar;
    params.beta = ls.beta;
    params.step0 = ls.step0;
    params.b = ls.b;
    params.c = ls.c;
    params.lambda0 = ls.lambda0;
    params.validate(table.dimension());

    const auto reps = static_cast<std::size_t>(spec.replications);
    const auto steps = static_cast<std::size_t>(ls.steps);
    std::vector<std::vector<double>> lambdas(reps);
    std::vector<std::vector<int>> pops(reps);
    std::vector<double> hats(reps);
    std::vector<std::uint64_t> seeds(reps);
    parallel_for(reps, spec.threads, [&](std::size_t r) {
        seeds[r] = derive_seed(spec.seed, 0, r);
        const auto run = run_gibbs_learning(table, params, ls.steps, seeds[r], ls.tail_window);
        hats[r] = run.lambda_hat;
        lambdas[r].reserve(steps);
        pops[r].reserve(steps);
        for (const auto& rec : run.state.lambda_trace) {
            lambdas[r].push_back(rec.lambda);
            pops[r].push_back(rec.popcount);
        }
    });

    Report rep;
    std::string csv = "t,lambda_path0,lambda_mean,popcount_mean\n";
    for (std::size_t t = 0; t < steps; ++t) {
        double lam = 0.0;
        double pop = 0.0;
        for (std::size_t r = 0; r < reps; ++r) {
            lam += lambdas[r][t];
            pop += pops[r][t];
        }
        csv += std::to_string(t + 1) + ',' + fmt(lambdas[0][t]) + ',' + fmt(lam / static_cast<double>(reps)) + ',' +
               fmt(pop / static_cast<double>(reps)) + '\n';
    }
    rep.files["fig3.csv"] = csv;
    rep.summary = {{"lambda_star", ls.lambda_star},
                   {"nbar_target", nbar},
                   {"lambda_hat", hats},
                   {"seeds", seeds}};
    return rep;
}

} // namespace detail

/// Runs a validated spec. The summary embeds the spec and every derived seed, so
/// rerunning `summary["spec"]` reproduces the same files.
inline Report run_experiment(const ExperimentSpec& spec)
{
    spec.validate();
    const GaussianModel model = load_model(spec.model);
    const ErrorTable table = tabulate(model, spec.threads);
    Report rep;
    if (spec.experiment == "fig1") {
        rep = detail::run_fig1(spec, model, table);
    } else if (spec.experiment == "fig2") {
        rep = detail::run_fig2(spec, model, table);
    } else {
        rep = detail::run_fig3(spec, table);
    }
    rep.summary["spec"] = spec.to_json();
    rep.summary["n"] = model.dimension();
    return rep;
}

/// Writes each file and summary.json atomically under `dir`.
inline void write_report(const Report& rep, const std::filesystem::path& dir)
{
    for (const auto& [name, content] : rep.files) io::write_atomic(dir / name, content);
    io::write_atomic(dir / "summary.json", rep.summary.dump(2) + "\n");
}

} // namespace sensel
