// Drives the built CLI binary end to end: exit codes, report files,
// byte-level determinism.

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args) {
    const std::string cmd =
        std::string(TREEATTN_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path fresh_dir(const std::string& tag) {
    const fs::path p = fs::temp_directory_path() / ("treeattn_cli_" + tag);
    fs::remove_all(p);
    return p;
}

}  // namespace

TEST(Cli, HelpExitsZero) { EXPECT_EQ(run_cli("--help"), 0); }

TEST(Cli, UnknownFlagIsUsageError) { EXPECT_EQ(run_cli("--no-such-flag"), 2); }

TEST(Cli, BadStrategyIsUsageError) {
    EXPECT_EQ(run_cli("--workload fig2 --strategy zigzag"), 2);
}

TEST(Cli, BadModeIsUsageError) {
    EXPECT_EQ(run_cli("--workload fig2 --mode frobnicate"), 2);
}

TEST(Cli, MissingWorkloadFileFails) {
    const auto out = fresh_dir("missing");
    EXPECT_EQ(run_cli("--workload /nonexistent/w.json --out " + out.string()), 1);
}

TEST(Cli, VerifyPreset) {
    const auto out = fresh_dir("verify");
    ASSERT_EQ(run_cli("--workload fig2 --mode verify --out " + out.string()), 0);
    nlohmann::json j = nlohmann::json::parse(slurp(out / "verify.json"));
    EXPECT_TRUE(j["pass"].get<bool>());
    for (const auto& [name, err] : j["max_rel_error"].items())
        EXPECT_LE(err.get<double>(), 1e-4) << name;
}

TEST(Cli, IoReportsWritten) {
    const auto out = fresh_dir("io");
    ASSERT_EQ(run_cli("--workload few_shot_b20 --mode io --out " + out.string()), 0);
    ASSERT_TRUE(fs::exists(out / "io.csv"));
    nlohmann::json j = nlohmann::json::parse(slurp(out / "io_summary.json"));
    const double red =
        j["flatten"]["kv_reduction_vs_flash-decoding_pct"].get<double>();
    EXPECT_NEAR(red, 90.47, 0.5);
    // CSV has header + (iterations x algorithms) rows.
    std::istringstream csv(slurp(out / "io.csv"));
    std::string line;
    std::getline(csv, line);
    EXPECT_EQ(line, "iteration,algorithm,kv_bytes,q_bytes,mask_bytes,partial_bytes,total");
}

TEST(Cli, BalanceReportsWritten) {
    const auto out = fresh_dir("balance");
    ASSERT_EQ(run_cli("--workload spec_t64 --mode balance --strategy node,flatten --out " +
                      out.string()),
              0);
    nlohmann::json j = nlohmann::json::parse(slurp(out / "balance_summary.json"));
    EXPECT_GT(j["node"]["mean_idle_fraction"].get<double>(),
              j["flatten"]["mean_idle_fraction"].get<double>());
}

TEST(Cli, ByteIdenticalForSameSeed) {
    const auto a = fresh_dir("det_a");
    const auto b = fresh_dir("det_b");
    const std::string args = "--workload fig2 --mode all --seed 11 --out ";
    ASSERT_EQ(run_cli(args + a.string()), 0);
    ASSERT_EQ(run_cli(args + b.string()), 0);
    for (const char* f : {"summary.json", "verify.json", "io.csv", "io_summary.json",
                          "balance.csv", "balance_summary.json"}) {
        EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
    }
}

TEST(Cli, WorkloadSpecFromFile) {
    const auto out = fresh_dir("spec_file");
    fs::create_directories(out);
    const fs::path spec = out / "w.json";
    {
        std::ofstream o(spec);
        o << R"({"kind":"few_shot","prefix_len":200,"branches":4,"iterations":10})";
    }
    EXPECT_EQ(run_cli("--workload " + spec.string() + " --mode verify --sample-every 3 --out " +
                      out.string()),
              0);
}
