// sensel: sensor subset selection by Gibbs sampling, with exact oracles and baselines.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "sensel/sensel.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sensel;

namespace {

struct Globals {
    std::uint64_t seed = 1;
    int threads = 1;
    std::string out;
};

struct ModelArgs {
    std::string cov;
    int gen = 0;
    std::uint64_t gen_seed = 1;

    void add(CLI::App* sub)
    {
        sub->add_option("--cov", cov, "Covariance file (CSV or JSON)");
        sub->add_option("--gen", gen, "Generate a random N-sensor covariance M = A^T A instead of --cov");
        sub->add_option("--gen-seed", gen_seed, "Seed for --gen");
    }

    GaussianModel load() const
    {
        if (!cov.empty()) return io::load_covariance(cov);
        if (gen > 0) return gen_covariance(gen, gen_seed);
        throw SpecError("one of --cov FILE or --gen N is required");
    }
};

void emit(const Globals& g, const std::string& stem, const json& summary,
          const std::optional<std::pair<std::string, std::string>>& csv = std::nullopt)
{
    if (!g.out.empty()) {
        const fs::path dir(g.out);
        if (csv) io::write_atomic(dir / csv->first, csv->second);
        io::write_atomic(dir / (stem + ".json"), summary.dump(2) + "\n");
    }
    std::cout << summary.dump(2) << "\n";
}

json chain_summary(const ChainRun& run, double lambda)
{
    return {{"final", io::config_json(run.state.config)},
            {"final_cost", run.state.cost},
            {"best", io::config_json(run.state.best_config)},
            {"best_cost", run.state.best_cost},
            {"lambda", lambda},
            {"steps", run.state.t},
            {"stopped_early", run.stopped_early}};
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Sensor subset selection by Gibbs sampling"};
    app.require_subcommand(1);
    app.fallthrough();

    Globals g;
    app.add_option("--seed", g.seed, "Random seed")->capture_default_str();
    app.add_option("--threads", g.threads, "Worker threads for enumeration and replications")->capture_default_str();
    app.add_option("--out", g.out, "Directory for output files (written atomically)");

    // gen-cov
    auto* gen_cmd = app.add_subcommand("gen-cov", "Generate M = A^T A with A uniform on [-1, 1]");
    int gen_n = 0;
    std::string gen_format = "csv";
    gen_cmd->add_option("--n", gen_n, "Number of sensors")->required();
    gen_cmd->add_option("--format", gen_format, "csv or json")->check(CLI::IsMember({"csv", "json"}));

    // exact
    auto* exact_cmd = app.add_subcommand("exact", "Exhaustive optimum and exact Gibbs distribution");
    ModelArgs exact_model;
    double exact_lambda = 0.0;
    double exact_beta = 1.0;
    int exact_top = 10;
    exact_model.add(exact_cmd);
    exact_cmd->add_option("--lambda", exact_lambda, "Activation price")->required();
    exact_cmd->add_option("--beta", exact_beta, "Inverse temperature")->capture_default_str();
    exact_cmd->add_option("--top-k", exact_top, "Most probable configurations to list")->capture_default_str();

    // gibbs / anneal / gibbs-fixed share run options
    std::uint64_t steps = 10000;
    std::uint64_t stride = 1;
    std::uint64_t patience = 0;
    auto add_run = [&](CLI::App* sub) {
        sub->add_option("--steps", steps, "Number of updates")->capture_default_str();
        sub->add_option("--stride", stride, "Record every K-th step in the trace")->capture_default_str();
        sub->add_option("--patience", patience, "Stop after K steps without improvement (0 = off)");
    };

    auto* gibbs_cmd = app.add_subcommand("gibbs", "Fixed-beta Gibbs sampler");
    ModelArgs gibbs_model;
    double gibbs_lambda = 0.0;
    double gibbs_beta = 1.0;
    gibbs_model.add(gibbs_cmd);
    gibbs_cmd->add_option("--lambda", gibbs_lambda, "Activation price")->required();
    gibbs_cmd->add_option("--beta", gibbs_beta, "Inverse temperature")->required();
    add_run(gibbs_cmd);

    auto* anneal_cmd = app.add_subcommand("anneal", "Gibbs sampler with beta(t) = beta0 log(1 + t)");
    ModelArgs anneal_model;
    double anneal_lambda = 0.0;
    double anneal_beta0 = 0.0;
    anneal_model.add(anneal_cmd);
    anneal_cmd->add_option("--lambda", anneal_lambda, "Activation price")->required();
    anneal_cmd->add_option("--beta0", anneal_beta0, "Schedule scale; default 0.99 / (N Delta)");
    add_run(anneal_cmd);

    auto* fixed_cmd = app.add_subcommand("gibbs-fixed", "Gibbs sampler on configurations with exactly nbar active sensors");
    ModelArgs fixed_model;
    int fixed_nbar = 0;
    double fixed_beta = 1.0;
    fixed_model.add(fixed_cmd);
    fixed_cmd->add_option("--nbar", fixed_nbar, "Number of active sensors")->required();
    fixed_cmd->add_option("--beta", fixed_beta, "Inverse temperature")->required();
    add_run(fixed_cmd);

    // learn
    auto* learn_cmd = app.add_subcommand("learn", "Gibbs sampling with a learned activation price");
    ModelArgs learn_model;
    double learn_nbar = 0.0;
    std::optional<double> learn_b, learn_c, learn_lambda0;
    double learn_beta = 5.0;
    double learn_step0 = 1.0;
    std::uint64_t learn_tail = 0;
    learn_model.add(learn_cmd);
    learn_cmd->add_option("--nbar", learn_nbar, "Target mean number of active sensors")->required();
    learn_cmd->add_option("--beta", learn_beta, "Inverse temperature")->capture_default_str();
    learn_cmd->add_option("--lambda0", learn_lambda0, "Initial price; default midpoint of [b, c]");
    learn_cmd->add_option("--b", learn_b, "Lower projection bound; default 0");
    learn_cmd->add_option("--c", learn_c, "Upper projection bound; default tr(M)");
    learn_cmd->add_option("--step0", learn_step0, "Stepsize scale, a(t) = step0 / t")->capture_default_str();
    learn_cmd->add_option("--tail-window", learn_tail, "Slots averaged for lambda_hat; default max(100, 5%)");
    learn_cmd->add_option("--steps", steps, "Number of slots")->capture_default_str();

    // baselines
    auto* greedy_cmd = app.add_subcommand("greedy", "Single-pass greedy for the unconstrained problem");
    ModelArgs greedy_model;
    double greedy_lambda = 0.0;
    greedy_model.add(greedy_cmd);
    greedy_cmd->add_option("--lambda", greedy_lambda, "Activation price")->required();

    auto* newgreedy_cmd = app.add_subcommand("newgreedy", "Best-first greedy up to nbar sensors");
    ModelArgs newgreedy_model;
    int newgreedy_nbar = 0;
    newgreedy_model.add(newgreedy_cmd);
    newgreedy_cmd->add_option("--nbar", newgreedy_nbar, "Number of sensors")->required();

    // EM
    auto* em_static_cmd = app.add_subcommand("em-static", "Sequential sampling of one snapshot with EM refinement");
    ModelArgs ems_model;
    int ems_nbar = 1;
    double ems_theta0 = 0.0;
    double ems_truth = 1.0;
    ems_model.add(em_static_cmd);
    em_static_cmd->add_option("--nbar", ems_nbar, "Sensors to sample")->required();
    em_static_cmd->add_option("--theta0", ems_theta0, "Initial mean estimate")->capture_default_str();
    em_static_cmd->add_option("--theta-true", ems_truth, "Mean of the hidden snapshot")->capture_default_str();

    auto* em_seq_cmd = app.add_subcommand("em-sequential", "Per-slot selection with EM over iid snapshots");
    ModelArgs emq_model;
    int emq_nbar = 1;
    double emq_theta0 = 0.0;
    double emq_truth = 1.0;
    std::uint64_t emq_slots = 100;
    emq_model.add(em_seq_cmd);
    em_seq_cmd->add_option("--nbar", emq_nbar, "Sensors per slot")->required();
    em_seq_cmd->add_option("--theta0", emq_theta0, "Initial mean estimate")->capture_default_str();
    em_seq_cmd->add_option("--theta-true", emq_truth, "Mean of the snapshot stream")->capture_default_str();
    em_seq_cmd->add_option("--slots", emq_slots, "Number of slots")->capture_default_str();

    // run
    auto* run_cmd = app.add_subcommand("run", "Run an experiment spec (JSON) or a preset");
    std::string run_spec;
    std::string run_preset;
    run_cmd->add_option("--spec", run_spec, "Experiment spec file");
    run_cmd->add_option("--preset", run_preset, "fig1, fig2 or fig3")->check(CLI::IsMember({"fig1", "fig2", "fig3"}));

    // diagnose
    auto* diag_cmd = app.add_subcommand("diagnose", "Exact d_V(mu_t, pi_beta) against the Dobrushin bound");
    ModelArgs diag_model;
    double diag_lambda = 0.0;
    double diag_beta = 1.0;
    int diag_sweeps = 20;
    diag_model.add(diag_cmd);
    diag_cmd->add_option("--lambda", diag_lambda, "Activation price")->required();
    diag_cmd->add_option("--beta", diag_beta, "Inverse temperature")->required();
    diag_cmd->add_option("--sweeps", diag_sweeps, "Sweeps of N steps to propagate")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        RunOptions ro;
        ro.steps = steps;
        ro.seed = g.seed;
        ro.stride = stride;
        ro.patience = patience;

        if (*gen_cmd) {
            const GaussianModel m = gen_covariance(gen_n, g.seed);
            const std::string text = gen_format == "csv" ? io::covariance_csv(m.covariance())
                                                         : io::covariance_json(m.covariance()).dump(2) + "\n";
            if (!g.out.empty()) io::write_atomic(fs::path(g.out) / ("cov." + gen_format), text);
            std::cout << text;
        } else if (*exact_cmd) {
            const GaussianModel m = exact_model.load();
            const ErrorTable table = tabulate(m, g.threads);
            const Optimum opt = exhaustive_optimum(table, exact_lambda);
            const auto dist = gibbs_distribution(m.dimension(), table.costs(exact_lambda), exact_beta);
            std::vector<std::uint64_t> order(dist.probs.size());
            for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
            const auto k = std::min<std::size_t>(static_cast<std::size_t>(std::max(exact_top, 0)), order.size());
            std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                              [&](auto a, auto b) { return dist.probs[a] > dist.probs[b] || (dist.probs[a] == dist.probs[b] && a < b); });
            json top = json::array();
            for (std::size_t i = 0; i < k; ++i) {
                top.push_back({Configuration(m.dimension(), order[i]).to_hex(), dist.probs[order[i]]});
            }
            json out = {{"n", m.dimension()},
                        {"lambda", exact_lambda},
                        {"beta", exact_beta},
                        {"optimum_bits", opt.config.to_hex()},
                        {"optimum_cost", opt.value},
                        {"log_partition", dist.log_partition},
                        {"expected_cost", dist.expectation([&, h = table.costs(exact_lambda)](std::uint64_t b) { return h[b]; })},
                        {"top_k", top}};
            emit(g, "exact", out);
        } else if (*gibbs_cmd) {
            const GaussianModel m = gibbs_model.load();
            const auto run = run_basic_gibbs(m, gibbs_lambda, gibbs_beta, ro);
            json s = chain_summary(run, gibbs_lambda);
            s["beta"] = gibbs_beta;
            s["seed"] = g.seed;
            emit(g, "gibbs", s, std::pair{std::string("gibbs_trace.csv"), io::chain_trace_csv(run.trace)});
        } else if (*anneal_cmd) {
            const GaussianModel m = anneal_model.load();
            const double delta = delta_upper_bound(m, anneal_lambda);
            const double beta0 = anneal_beta0 > 0.0 ? anneal_beta0 : (delta > 0.0 ? 0.99 / (m.dimension() * delta) : 1.0);
            const auto schedule = BetaSchedule::logarithmic(beta0, m.dimension(), delta);
            const auto run = run_modified_gibbs(m, anneal_lambda, schedule, ro);
            json s = chain_summary(run, anneal_lambda);
            s["beta0"] = beta0;
            s["delta"] = delta;
            s["seed"] = g.seed;
            emit(g, "anneal", s, std::pair{std::string("anneal_trace.csv"), io::chain_trace_csv(run.trace)});
        } else if (*fixed_cmd) {
            const GaussianModel m = fixed_model.load();
            const auto run = run_fixed_cardinality_gibbs(m, fixed_nbar, fixed_beta, ro);
            json s = chain_summary(run, 0.0);
            s["nbar"] = fixed_nbar;
            s["beta"] = fixed_beta;
            s["seed"] = g.seed;
            emit(g, "gibbs-fixed", s, std::pair{std::string("gibbs-fixed_trace.csv"), io::chain_trace_csv(run.trace)});
        } else if (*learn_cmd) {
            const GaussianModel m = learn_model.load();
            LearningParams p = LearningParams::defaults_for(m, learn_nbar);
            p.beta = learn_beta;
            p.step0 = learn_step0;
            if (learn_b) p.b = *learn_b;
            if (learn_c) p.c = *learn_c;
            p.lambda0 = learn_lambda0 ? *learn_lambda0 : 0.5 * (p.b + p.c);
            const auto run = run_gibbs_learning(m, p, steps, g.seed, learn_tail);
            json s = {{"lambda_hat", run.lambda_hat},
                      {"tail_mean_popcount", run.tail_mean_popcount},
                      {"tail_window", run.tail_window},
                      {"final", io::config_json(run.state.chain.config)},
                      {"final_lambda", run.state.lambda},
                      {"seed", g.seed}};
            emit(g, "learn", s, std::pair{std::string("learn_trace.csv"), io::learning_trace_csv(run.state.lambda_trace)});
        } else if (*greedy_cmd) {
            const GaussianModel m = greedy_model.load();
            const auto r = greedy_unconstrained(m, greedy_lambda);
            emit(g, "greedy", {{"bits_hex", r.config.to_hex()}, {"n", m.dimension()}, {"cost_or_error", r.value},
                               {"filled_with_nonimproving", r.filled_with_nonimproving}, {"order", r.order}});
        } else if (*newgreedy_cmd) {
            const GaussianModel m = newgreedy_model.load();
            const auto r = newgreedy_cardinality(m, newgreedy_nbar);
            emit(g, "newgreedy", {{"bits_hex", r.config.to_hex()}, {"n", m.dimension()}, {"cost_or_error", r.value},
                                  {"filled_with_nonimproving", r.filled_with_nonimproving}, {"order", r.order}});
        } else if (*em_static_cmd) {
            const GaussianModel m = ems_model.load();
            GaussianSampler draw(m, ems_truth, g.seed);
            const Eigen::VectorXd truth = draw();
            const auto r = em_static_select(CommonMeanGaussian(m, ems_theta0), [&](int j) { return truth(j); }, ems_nbar);
            std::vector<double> recon(r.reconstruction.data(), r.reconstruction.data() + r.reconstruction.size());
            emit(g, "em-static", {{"order", r.order}, {"theta_trace", r.theta_trace}, {"reconstruction", recon},
                                  {"seed", g.seed}});
        } else if (*em_seq_cmd) {
            const GaussianModel m = emq_model.load();
            GaussianSampler draw(m, emq_truth, g.seed);
            SequentialOptions so;
            so.seed = g.seed;
            const auto r = em_sequential_select(CommonMeanGaussian(m, emq_theta0), [&](std::uint64_t) { return draw(); },
                                                emq_nbar, emq_slots, so);
            std::string csv = "slot,bits_hex,theta,selection_error\n";
            std::vector<double> thetas;
            for (const auto& s : r.slots) {
                csv += std::to_string(s.slot) + ',' + s.selection.to_hex() + ',' + io::fmt(s.theta) + ',' +
                       io::fmt(s.selection_error) + '\n';
                thetas.push_back(s.theta);
            }
            emit(g, "em-sequential", {{"theta_trace", thetas}, {"final_theta", r.family.theta()}, {"seed", g.seed}},
                 std::pair{std::string("em-sequential.csv"), csv});
        } else if (*run_cmd) {
            ExperimentSpec spec;
            if (!run_spec.empty()) {
                try {
                    spec = ExperimentSpec::from_json(json::parse(io::read_file(run_spec)));
                } catch (const json::parse_error& e) {
                    throw SpecError(std::string("experiment spec: ") + e.what());
                }
            } else if (!run_preset.empty()) {
                spec = preset(run_preset);
                spec.seed = g.seed;
            } else {
                throw SpecError("run needs --spec FILE or --preset NAME");
            }
            if (!g.out.empty()) spec.out_dir = g.out;
            if (app.count("--threads") > 0) spec.threads = g.threads;
            const Report rep = run_experiment(spec);
            if (!spec.out_dir.empty()) write_report(rep, spec.out_dir);
            std::cout << rep.summary.dump(2) << "\n";
        } else if (*diag_cmd) {
            const GaussianModel m = diag_model.load();
            const int n = m.dimension();
            const ErrorTable table = tabulate(m, g.threads);
            const auto h = table.costs(diag_lambda);
            const auto cm = chain_matrix(n, h, diag_beta);
            const auto pi = gibbs_distribution(n, h, diag_beta);
            const double delta = delta_upper_bound(table, diag_lambda);
            std::vector<double> mu(h.size(), 0.0);
            Rng rng(g.seed);
            mu[rng() & full_mask(n)] = 1.0;
            const double tv0 = tv_distance(mu, pi.probs);
            std::string csv = "t,sweeps,tv,bound\n";
            int violations = 0;
            for (int t = 0; t <= diag_sweeps * n; ++t) {
                if (t > 0) mu = cm.step(mu);
                const double tv = tv_distance(mu, pi.probs);
                const int l = t / n;
                const double bound = dobrushin_bound(diag_beta, n, delta, l) * tv0;
                if (tv > bound + 1e-12) ++violations;
                csv += std::to_string(t) + ',' + std::to_string(l) + ',' + io::fmt(tv) + ',' + io::fmt(bound) + '\n';
            }
            json s = {{"n", n}, {"delta", delta}, {"initial_tv", tv0}, {"violations", violations},
                      {"bound_per_sweep", dobrushin_bound(diag_beta, n, delta, 1)}};
            if (n <= 6) {
                Eigen::MatrixXd sweep = Eigen::MatrixXd::Identity(cm.p.rows(), cm.p.cols());
                for (int i = 0; i < n; ++i) sweep = sweep * cm.p;
                s["dobrushin_coefficient_sweep"] = dobrushin_coefficient(sweep);
            }
            emit(g, "diagnose", s, std::pair{std::string("diagnose.csv"), csv});
        }
    } catch (const SpecError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const NumericalDegeneracyError& e) {
        std::cerr << "numerical degeneracy: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
