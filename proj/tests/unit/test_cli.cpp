#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "mfstop/cli.hpp"
#include "mfstop/config.hpp"

namespace fs = std::filesystem;
using namespace mfstop;

namespace {

struct Run {
    int code;
    std::string out, err;
};

Run run(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("mfstop-cli-test-" + std::to_string(::getpid())) / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::size_t lines(const std::string& s) {
    std::size_t n = 0;
    for (char c : s) n += c == '\n';
    return n;
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream(p, std::ios::binary) << text;
}

Json manifest(const fs::path& dir) { return Json::parse(slurp(dir / "manifest.json")); }

}  // namespace

TEST(Cli, UsageErrors) {
    EXPECT_EQ(run({}).code, exit_usage);
    EXPECT_EQ(run({"no-such-command"}).code, exit_usage);
    EXPECT_EQ(run({"rd-solve", "--bogus-flag", "1"}).code, exit_usage);
    EXPECT_EQ(run({"rd-solve", "--lambda", "abc"}).code, exit_usage);
    EXPECT_EQ(run({"--help"}).code, exit_ok);
    EXPECT_EQ(run({"--version"}).code, exit_ok);
}

TEST(Cli, NegativeLambdaIsRejected) {
    const auto dir = scratch("neg");
    const auto r = run({"rd-solve", "--lambda", "-1", "--out", dir.string()});
    EXPECT_EQ(r.code, exit_usage);
    EXPECT_NE(r.err.find("lambda must be positive"), std::string::npos) << r.err;
}

TEST(Cli, RdSolveOutputs) {
    const auto dir = scratch("solve");
    const auto r = run({"rd-solve", "--out", dir.string()});
    ASSERT_EQ(r.code, exit_ok) << r.err;
    const std::string policy = slurp(dir / "policy.csv");
    EXPECT_EQ(policy.substr(0, policy.find('\n')), "mu,phi,aux_value,continuation,reward");
    EXPECT_EQ(lines(policy), 2002u);
    EXPECT_EQ(slurp(dir / "residuals.csv").substr(0, 32), "iter,residual,sup_policy_change\n");
    for (const char* f : {"policy.csv", "residuals.csv", "summary.json", "manifest.json"})
        EXPECT_EQ(slurp(dir / f).find('\r'), std::string::npos) << f;

    const auto summary = Json::parse(slurp(dir / "summary.json"));
    EXPECT_EQ(summary.begin().key(), "command");
    EXPECT_EQ(summary["status"], "ok");
    EXPECT_TRUE(summary["converged"].get<bool>());
    EXPECT_EQ(Json::parse(r.out), summary);

    const auto m = manifest(dir);
    EXPECT_EQ(m["command"], "rd-solve");
    EXPECT_EQ(m["params"]["lambda"], 0.1);
    EXPECT_EQ(m["model"]["grid_points"], 2001);
    EXPECT_EQ(m["exit_code"], 0);
}

TEST(Cli, ReRunsAreByteIdentical) {
    const auto a = scratch("rerun-a"), b = scratch("rerun-b");
    const std::vector<std::string> base{"nagent-eps", "--Ns", "50,200", "--paths", "500",
                                        "--policy", "closed-form", "--seed", "3"};
    auto args_a = base, args_b = base;
    args_a.insert(args_a.end(), {"--out", a.string()});
    args_b.insert(args_b.end(), {"--out", b.string(), "--threads", "3"});
    ASSERT_EQ(run(args_a).code, exit_ok);
    ASSERT_EQ(run(args_b).code, exit_ok);
    EXPECT_EQ(slurp(a / "eps.csv"), slurp(b / "eps.csv"));
    EXPECT_EQ(slurp(a / "summary.json"), slurp(b / "summary.json"));
}

TEST(Cli, ConfigMergesWithFlags) {
    const auto dir = scratch("merge");
    write_file(dir / "cfg.json", R"({"command": "rd-ode", "seed": 9,
        "params": {"lambda": 0.2, "step": 0.01}})");
    const auto r = run({"rd-ode", "--config", (dir / "cfg.json").string(), "--lambda", "0.3",
                        "--out", (dir / "o").string()});
    ASSERT_EQ(r.code, exit_ok) << r.err;
    const auto m = manifest(dir / "o");
    EXPECT_EQ(m["params"]["lambda"], 0.3);
    EXPECT_EQ(m["params"]["step"], 0.01);
    EXPECT_EQ(m["seed"], 9);
    EXPECT_EQ(m["seed_source"], "config");
    EXPECT_EQ(m["config_file"], (dir / "cfg.json").string());
    EXPECT_EQ(lines(slurp(dir / "o" / "ode.csv")), 102u);
}

TEST(Cli, UnknownConfigKeysAreRejected) {
    const auto dir = scratch("unknown");
    write_file(dir / "top.json", R"({"params": {}, "colour": 1})");
    write_file(dir / "param.json", R"({"params": {"lambda": 0.2, "lamda": 0.1}})");
    write_file(dir / "model.json", R"({"model": {"grid_points": 11, "nodes": 4}})");
    write_file(dir / "bad.json", R"({"params": )");
    for (const char* f : {"top.json", "param.json", "model.json", "bad.json"}) {
        const auto r = run({"rd-solve", "--config", (dir / f).string(), "--out", (dir / "o").string()});
        EXPECT_EQ(r.code, exit_usage) << f;
        EXPECT_FALSE(r.err.empty());
    }
    write_file(dir / "wrong.json", R"({"command": "rd-ode"})");
    EXPECT_EQ(run({"rd-solve", "--config", (dir / "wrong.json").string()}).code, exit_usage);
}

TEST(Cli, SeedFallsBackToEnvironment) {
    const auto dir = scratch("seed");
    const std::vector<std::string> args{"nagent-rate", "--Ns", "10,100", "--samples", "100", "--out",
                                        dir.string()};
    ::setenv("MFSTOP_SEED", "1234", 1);
    ASSERT_EQ(run(args).code, exit_ok);
    EXPECT_EQ(manifest(dir)["seed"], 1234);
    EXPECT_EQ(manifest(dir)["seed_source"], "env");
    auto with_flag = args;
    with_flag.insert(with_flag.end(), {"--seed", "5"});
    ASSERT_EQ(run(with_flag).code, exit_ok);
    EXPECT_EQ(manifest(dir)["seed"], 5);
    EXPECT_EQ(manifest(dir)["seed_source"], "flag");
    ::unsetenv("MFSTOP_SEED");
    ASSERT_EQ(run(args).code, exit_ok);
    EXPECT_EQ(manifest(dir)["seed"], 42);
    EXPECT_EQ(manifest(dir)["seed_source"], "default");
    ::setenv("MFSTOP_SEED", "-3", 1);
    EXPECT_EQ(run(args).code, exit_usage);
    ::unsetenv("MFSTOP_SEED");
}

TEST(Cli, NagentRateSummary) {
    const auto dir = scratch("rate");
    const auto r = run({"nagent-rate", "--Ns", "100,1000,10000", "--samples", "20000", "--out", dir.string()});
    ASSERT_EQ(r.code, exit_ok);
    const auto s = Json::parse(slurp(dir / "summary.json"));
    ASSERT_TRUE(s.contains("slope"));
    EXPECT_NEAR(s["slope"].get<double>(), -0.5, 0.1);
    EXPECT_TRUE(s.contains("slope_half_width"));
    EXPECT_EQ(slurp(dir / "rate.csv").substr(0, 18), "N,estimate,stderr\n");
}

TEST(Cli, NonConvergenceExitsTwo) {
    const auto dir = scratch("maxiter");
    const auto r = run({"rd-solve", "--max-iter", "2", "--grid-points", "201", "--out", dir.string()});
    EXPECT_EQ(r.code, exit_not_converged);
    const auto s = Json::parse(slurp(dir / "summary.json"));
    EXPECT_EQ(s["status"], "not_converged");
    EXPECT_EQ(manifest(dir)["exit_code"], 2);
}

TEST(Cli, ThreadsAreRecorded) {
    const auto dir = scratch("threads");
    ASSERT_EQ(run({"rd-ode", "--step", "0.01", "--threads", "2", "--out", dir.string()}).code, exit_ok);
    EXPECT_EQ(manifest(dir)["threads"], 2);
    EXPECT_EQ(run({"rd-ode", "--threads", "-1", "--out", dir.string()}).code, exit_usage);
}

TEST(Cli, SummaryCarriesSchemaRequiredKeys) {
    const auto schema = load_json_file(MFSTOP_SCHEMA_PATH);
    const auto dir = scratch("schema");
    ASSERT_EQ(run({"rd-ode", "--step", "0.01", "--out", dir.string()}).code, exit_ok);
    const auto s = Json::parse(slurp(dir / "summary.json"));
    for (const auto& key : schema["required"]) EXPECT_TRUE(s.contains(key.get<std::string>())) << key;
}
