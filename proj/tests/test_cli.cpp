#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <sys/wait.h>

#include "sensel/sensel.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

#ifndef SENSEL_CLI
#error "SENSEL_CLI must point at the sensel executable"
#endif

namespace {

struct Result {
    int code;
    std::string out;
};

const fs::path& work_dir()
{
    static const fs::path dir = [] {
        const fs::path d = fs::temp_directory_path() / "sensel_cli_test";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

Result run(const std::string& args)
{
    const fs::path out = work_dir() / "stdout.txt";
    const std::string cmd = std::string(SENSEL_CLI) + " " + args + " > " + out.string() + " 2> " +
                            (work_dir() / "stderr.txt").string();
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, sensel::io::read_file(out)};
}

std::string cov_file()
{
    const fs::path p = work_dir() / "cov.csv";
    if (!fs::exists(p)) sensel::io::write_atomic(p, sensel::io::covariance_csv(sensel::gen_covariance(6, 4).covariance()));
    return p.string();
}

} // namespace

TEST(Cli, GenCovMatchesLibrary)
{
    const auto r = run("gen-cov --n 5 --seed 9");
    ASSERT_EQ(r.code, 0);
    EXPECT_EQ(sensel::io::parse_covariance_csv(r.out), sensel::gen_covariance(5, 9).covariance());
    const auto j = run("gen-cov --n 3 --seed 9 --format json");
    ASSERT_EQ(j.code, 0);
    EXPECT_EQ(json::parse(j.out).at("n"), 3);
}

TEST(Cli, ExactReportsOptimum)
{
    const auto r = run("exact --cov " + cov_file() + " --lambda 1.2 --beta 3 --top-k 4");
    ASSERT_EQ(r.code, 0) << r.out;
    const auto j = json::parse(r.out);
    const auto g = sensel::io::load_covariance(cov_file());
    const auto opt = sensel::exhaustive_optimum(g, 1.2);
    EXPECT_EQ(j.at("optimum_bits"), opt.config.to_hex());
    EXPECT_DOUBLE_EQ(j.at("optimum_cost").get<double>(), opt.value);
    EXPECT_EQ(j.at("top_k").size(), 4u);
    EXPECT_NEAR(j.at("log_partition").get<double>(), sensel::exact_gibbs(g, 1.2, 3.0).log_partition, 1e-12);
}

TEST(Cli, SamplersWriteTraces)
{
    const fs::path out = work_dir() / "samplers";
    const std::string common = " --cov " + cov_file() + " --steps 500 --stride 5 --seed 3 --out " + out.string();
    ASSERT_EQ(run("gibbs --lambda 1 --beta 2" + common).code, 0);
    ASSERT_EQ(run("anneal --lambda 1" + common).code, 0);
    ASSERT_EQ(run("gibbs-fixed --nbar 2 --beta 2" + common).code, 0);
    for (const char* name : {"gibbs", "anneal", "gibbs-fixed"}) {
        const auto csv = sensel::io::read_file(out / (std::string(name) + "_trace.csv"));
        EXPECT_EQ(sensel::io::validate_csv(csv, sensel::io::kChainTraceHeader), 100u) << name;
        EXPECT_TRUE(fs::exists(out / (std::string(name) + ".json")));
    }
}

TEST(Cli, SameSeedSameOutput)
{
    const std::string args = "gibbs --gen 7 --lambda 1 --beta 1 --steps 2000 --seed 11";
    EXPECT_EQ(run(args).out, run(args).out);
}

TEST(Cli, LearnSummaryAndTrace)
{
    const fs::path out = work_dir() / "learn";
    const auto r = run("learn --cov " + cov_file() + " --nbar 2.5 --steps 800 --seed 2 --b 0 --c 6 --lambda0 3 --out " +
                       out.string());
    ASSERT_EQ(r.code, 0);
    const auto j = json::parse(r.out);
    EXPECT_TRUE(j.contains("lambda_hat"));
    EXPECT_TRUE(j.contains("tail_mean_popcount"));
    EXPECT_EQ(sensel::io::validate_csv(sensel::io::read_file(out / "learn_trace.csv"), sensel::io::kLearningTraceHeader),
              800u);
}

TEST(Cli, Baselines)
{
    const auto g = run("greedy --cov " + cov_file() + " --lambda 0.8");
    ASSERT_EQ(g.code, 0);
    const auto gj = json::parse(g.out);
    EXPECT_TRUE(gj.contains("bits_hex"));
    EXPECT_TRUE(gj.contains("cost_or_error"));
    EXPECT_EQ(gj.at("filled_with_nonimproving"), false);
    const auto n = run("newgreedy --cov " + cov_file() + " --nbar 3");
    ASSERT_EQ(n.code, 0);
    EXPECT_EQ(json::parse(n.out).at("order").size(), 3u);
}

TEST(Cli, EmCommands)
{
    const auto s = run("em-static --cov " + cov_file() + " --nbar 3 --theta0 0 --theta-true 2 --seed 5");
    ASSERT_EQ(s.code, 0);
    const auto sj = json::parse(s.out);
    EXPECT_EQ(sj.at("order").size(), 3u);
    EXPECT_EQ(sj.at("theta_trace").size(), 4u);
    EXPECT_EQ(sj.at("reconstruction").size(), 6u);

    const fs::path out = work_dir() / "emseq";
    const auto q = run("em-sequential --cov " + cov_file() + " --nbar 2 --slots 30 --seed 5 --out " + out.string());
    ASSERT_EQ(q.code, 0);
    EXPECT_EQ(sensel::io::validate_csv(sensel::io::read_file(out / "em-sequential.csv"),
                                       "slot,bits_hex,theta,selection_error"),
              30u);
}

TEST(Cli, DiagnoseReportsNoViolations)
{
    const auto r = run("diagnose --gen 4 --lambda 0.5 --beta 1 --sweeps 10");
    ASSERT_EQ(r.code, 0);
    const auto j = json::parse(r.out);
    EXPECT_EQ(j.at("violations"), 0);
    EXPECT_TRUE(j.contains("dobrushin_coefficient_sweep"));
}

TEST(Cli, RunSpecFile)
{
    const fs::path dir = work_dir() / "run";
    sensel::ExperimentSpec spec;
    spec.experiment = "fig2";
    spec.model.n = 6;
    spec.nbar = 2;
    spec.betas = {1.0, 5.0};
    spec.finite_steps = 20;
    sensel::io::write_atomic(work_dir() / "spec.json", spec.to_json().dump(2));
    const auto r = run("run --spec " + (work_dir() / "spec.json").string() + " --out " + dir.string());
    ASSERT_EQ(r.code, 0) << r.out;
    EXPECT_TRUE(fs::exists(dir / "fig2.csv"));
    EXPECT_TRUE(fs::exists(dir / "summary.json"));
    EXPECT_EQ(json::parse(sensel::io::read_file(dir / "summary.json")), json::parse(r.out));
}

TEST(Cli, ExitCodes)
{
    EXPECT_EQ(run("--help").code, 0);
    EXPECT_EQ(run("").code, 2);
    EXPECT_EQ(run("gibbs --gen 4 --beta 1").code, 2);                // missing --lambda
    EXPECT_EQ(run("gibbs --gen 4 --lambda -1 --beta 1").code, 2);    // invalid value
    EXPECT_EQ(run("gibbs --lambda 1 --beta 1").code, 2);             // no model
    EXPECT_EQ(run("exact --gen 31 --lambda 1").code, 2);             // capacity
    EXPECT_EQ(run("anneal --gen 5 --lambda 1 --beta0 10").code, 2);  // schedule constraint
    EXPECT_EQ(run("run --spec /nonexistent.json").code, 2);

    const fs::path bad = work_dir() / "degenerate.csv";
    sensel::io::write_atomic(bad, "1000000,1000000.0005,0\n1000000.0005,1000000,0\n0,0,1\n");
    EXPECT_EQ(run("newgreedy --cov " + bad.string() + " --nbar 2").code, 3);
}
