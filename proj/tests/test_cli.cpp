#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "smmis/smmis.hpp"

namespace fs = std::filesystem;

namespace {

struct CliResult {
    int code;
    std::string output;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

class Cli : public ::testing::Test {
protected:
    fs::path dir;

    void SetUp() override {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir = fs::temp_directory_path() / (std::string("smmis_cli_") + info->name());
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    void TearDown() override { fs::remove_all(dir); }

    std::string path(const std::string& name) const { return (dir / name).string(); }

    CliResult run(const std::string& args) const {
        const auto log = dir / "output.log";
        const std::string cmd = std::string(SMMIS_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
        const int status = std::system(cmd.c_str());
        return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(log)};
    }

    void write(const std::string& name, const std::string& text) const { std::ofstream(path(name)) << text; }

    std::string target_model(int id) const {
        const auto p = path("target" + std::to_string(id) + ".json");
        EXPECT_EQ(run("model --target-id " + std::to_string(id) + " -o " + p).code, 0);
        return p;
    }
};

std::vector<std::string> lines(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream in(s);
    std::string l;
    while (std::getline(in, l)) out.push_back(l);
    return out;
}

}  // namespace

TEST_F(Cli, NoSubcommandIsUsageError) { EXPECT_EQ(run("").code, 2); }

TEST_F(Cli, SampleSingleNormalWithArits) {
    write("normal.json", R"({"dim":1,"components":[{"coeff":1,"mean":[0],"stddev":[1]}]})");
    const auto r = run("sample " + path("normal.json") + " --method arits --part full -n 10 --seed 1 -o " + path("s.csv"));
    ASSERT_EQ(r.code, 0) << r.output;
    const auto csv = slurp(path("s.csv"));
    const auto ls = lines(csv);
    ASSERT_EQ(ls.size(), 11u);
    EXPECT_EQ(ls[0], "x1,stratum,method");
    EXPECT_EQ(csv.back(), '\n');
}

TEST_F(Cli, SampleMinusOfAllPositiveModel) {
    write("pos.json", R"({"dim":1,"components":[{"coeff":1,"mean":[0],"stddev":[1]}]})");
    const auto r = run("sample " + path("pos.json") + " --method ancestral --part minus -n 10 -o " + path("s.csv"));
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.output.find("negative part empty"), std::string::npos) << r.output;
}

TEST_F(Cli, SampleStratifiedPlusBatch) {
    const auto m = target_model(1);
    ASSERT_EQ(run("sample " + m + " --method stratified --part plus -n 1500 --seed 7 -o " + path("s.csv")).code, 0);
    const auto ls = lines(slurp(path("s.csv")));
    ASSERT_EQ(ls.size(), 1501u);
    EXPECT_EQ(ls[0], "x1,x2,stratum,method");
    const auto n_plus = smmis::difference_form(smmis::rq2_target(1)).positive.size();
    for (std::size_t i = 1; i < ls.size(); ++i) {
        std::istringstream row(ls[i]);
        std::string a, b, k, method;
        std::getline(row, a, ',');
        std::getline(row, b, ',');
        std::getline(row, k, ',');
        std::getline(row, method, ',');
        EXPECT_TRUE(std::isfinite(std::stod(a)) && std::isfinite(std::stod(b)));
        EXPECT_LT(std::stoul(k), n_plus);
        EXPECT_EQ(method, "stratified");
    }
}

TEST_F(Cli, SampleRejectsIncompatibleMethodAndPart) {
    const auto m = target_model(1);
    EXPECT_EQ(run("sample " + m + " --method arits --part plus -n 5 -o " + path("s.csv")).code, 2);
    EXPECT_EQ(run("sample " + m + " --method stratified --part full -n 5 -o " + path("s.csv")).code, 2);
    EXPECT_EQ(run("sample " + m + " --method gibbs --part full -n 5 -o " + path("s.csv")).code, 2);
}

TEST_F(Cli, MalformedModelIsParseError) {
    write("bad.json", "{\"dim\": 1, ");
    EXPECT_EQ(run("sample " + path("bad.json") + " --method arits -n 5 -o " + path("s.csv")).code, 2);
    EXPECT_EQ(run("validate " + path("missing.json")).code, 2);
}

TEST_F(Cli, EstimateExactCollapse) {
    const auto m = target_model(1);
    for (const std::string sampler : {"stratified", "ancestral"}) {
        const auto r = run("estimate " + m + " --target " + m + " --f-one -S 500 -r 4 --seed 3 --sampler " + sampler +
                           " -o " + path("e.csv"));
        ASSERT_EQ(r.code, 0) << r.output;
        const auto v = std::stod(r.output.substr(r.output.find("value=") + 6));
        EXPECT_NEAR(v, 1.0, 1e-12);
        EXPECT_NE(r.output.find(", cov="), std::string::npos);
        const auto ls = lines(slurp(path("e.csv")));
        EXPECT_EQ(ls.size(), 5u);
        EXPECT_EQ(ls[0], smmis::kEstimateCsvHeader);
    }
}

TEST_F(Cli, EstimateSingleReplicationPrintsNoCov) {
    const auto m = target_model(1);
    const auto r = run("estimate " + m + " --f-one -S 100 -r 1");
    ASSERT_EQ(r.code, 0) << r.output;
    EXPECT_NE(r.output.find("value="), std::string::npos);
    EXPECT_EQ(r.output.find("cov="), std::string::npos);
}

TEST_F(Cli, EstimateStarvedBudget) {
    const auto m = target_model(1);
    EXPECT_EQ(run("estimate " + m + " --f-one -S 1").code, 3);
}

TEST_F(Cli, EstimateNeedsExactlyOneIntegrand) {
    const auto m = target_model(1);
    EXPECT_EQ(run("estimate " + m + " -S 100").code, 2);
}

TEST_F(Cli, EstimateIntegrandFile) {
    const auto m = target_model(2);
    write("f.json", R"({"dim":2,"constant":0,"components":[{"weight":1,"mean":[0,0],"stddev":[1,1]}]})");
    const auto r = run("estimate " + m + " --f " + path("f.json") + " -S 2000 -r 20 --seed 1");
    ASSERT_EQ(r.code, 0) << r.output;
    const double truth = 0.0646302826545609;
    const auto v = std::stod(r.output.substr(r.output.find("value=") + 6));
    const auto cov = std::stod(r.output.substr(r.output.find("cov=") + 4));
    EXPECT_LT(std::abs(v - truth), 4 * cov * truth / std::sqrt(20.0)) << r.output;
}

TEST_F(Cli, EstimateValleyPathologyIsDispersedNotFlagged) {
    // The bare perturbed proposal has near-zero valleys where the target has mass:
    // the replications scatter wildly but rarely hit an exact zero of q.
    const auto p = target_model(2);
    const auto q = path("q.json");
    ASSERT_EQ(run("model --target-id 2 --epsilon 0.05 --seed 1 -o " + q).code, 0);
    const std::string common = "estimate " + q + " --target " + p + " --f-one --unnormalized -S 15000 -r 20 --seed 1";
    auto cov_of = [](const std::string& out) { return std::stod(out.substr(out.find("cov=") + 4)); };
    const auto bare = run(common);
    ASSERT_EQ(bare.code, 0) << bare.output;
    EXPECT_GT(cov_of(bare.output), 100.0) << bare.output;
    const auto safe = run(common + " --safe");
    ASSERT_EQ(safe.code, 0) << safe.output;
    EXPECT_LT(cov_of(safe.output), 1e-3 * cov_of(bare.output)) << safe.output;
    const auto alpha_vs_mass = run(common + " --safe --safe-mixing unnormalized");
    ASSERT_EQ(alpha_vs_mass.code, 0) << alpha_vs_mass.output;
    EXPECT_LT(cov_of(alpha_vs_mass.output), 0.2) << alpha_vs_mass.output;
}

TEST_F(Cli, EstimateNegativeProposalExitsWithValleyCode) {
    // 1.5 N(0,1) - N(0,0.5^2) is negative near the origin, where most negative-part draws land.
    write("q.json", R"({"dim":1,"components":[{"coeff":1.5,"mean":[0],"stddev":[1]},
                                                {"coeff":-1,"mean":[0],"stddev":[0.5]}]})");
    write("p.json", R"({"dim":1,"components":[{"coeff":1,"mean":[0],"stddev":[1]}]})");
    const auto r = run("estimate " + path("q.json") + " --target " + path("p.json") + " --f-one -S 2000 -r 4");
    EXPECT_EQ(r.code, 4) << r.output;
    EXPECT_NE(r.output.find("valley"), std::string::npos);
    EXPECT_NE(r.output.find("value=nan"), std::string::npos);
}

TEST_F(Cli, ValidateKnownGoodModel) {
    const auto r = run("validate " + target_model(1));
    EXPECT_EQ(r.code, 0) << r.output;
    EXPECT_EQ(r.output.find("FAIL"), std::string::npos);
    EXPECT_NE(r.output.find("PASS quadrature"), std::string::npos);
}

TEST_F(Cli, ValidateForcedNegativeNormalizer) {
    auto j = smmis::read_json_file(target_model(1));
    j["z_q"]["sign"] = -1;
    write("neg.json", j.dump());
    const auto r = run("validate " + path("neg.json"));
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.output.find("FAIL normalization"), std::string::npos) << r.output;
}

TEST_F(Cli, ValidateSkipsQuadratureInHighDimension) {
    smmis::RngStream rng(1);
    smmis::save_model(path("d16.json"), smmis::init_random_target(16, 2, rng));
    const auto r = run("validate " + path("d16.json"));
    EXPECT_EQ(r.code, 0) << r.output;
    EXPECT_NE(r.output.find("SKIPPED quadrature"), std::string::npos);
    EXPECT_NE(r.output.find("PASS reconstruction"), std::string::npos);
}

TEST_F(Cli, Rq1RowCountMetadataAndDeterminism) {
    write("rq1.json", R"({"dims":[4],"components_K":[2,3],"budgets_deltaex":[500,1000],"budget_arits":200,
                          "n_inits":3,"master_seed":5})");
    ASSERT_EQ(run("rq1 " + path("rq1.json") + " " + path("a") + " --threads 2").code, 0);
    ASSERT_EQ(run("rq1 " + path("rq1.json") + " " + path("b") + " --threads 1").code, 0);
    const auto a = slurp(path("a/rq1.csv")), b = slurp(path("b/rq1.csv"));
    EXPECT_EQ(lines(a).size(), 1u + 2 * 3 * (2 + 1));
    EXPECT_EQ(smmis::strip_time_columns(a), smmis::strip_time_columns(b));
    const auto meta = smmis::read_json_file(path("a/metadata.json"));
    EXPECT_EQ(meta.at("master_seed").get<int>(), 5);
    EXPECT_EQ(meta.at("version").get<std::string>(), smmis::kVersion);
    EXPECT_TRUE(meta.contains("design_modes"));
    EXPECT_EQ(slurp(path("a/metadata.json")).back(), '\n');
    EXPECT_TRUE(fs::exists(path("a/rq1_summary.csv")));
}

TEST_F(Cli, Rq2GroupsPerSafeMode) {
    write("rq2.json", R"({"target_id":1,"epsilons":[0.01,0.05,0.1],"safe_enabled":[false,true],"S":1000,
                          "replications":4,"kl_samples":300,"master_seed":2})");
    ASSERT_EQ(run("rq2 " + path("rq2.json") + " " + path("a")).code, 0);
    ASSERT_EQ(run("rq2 " + path("rq2.json") + " " + path("b")).code, 0);
    const auto a = slurp(path("a/rq2.csv"));
    EXPECT_EQ(lines(a).size(), 1u + 2 * 3);
    EXPECT_EQ(lines(slurp(path("a/rq2_replications.csv"))).size(), 1u + 2 * 3 * 4);
    EXPECT_EQ(smmis::strip_time_columns(a), smmis::strip_time_columns(slurp(path("b/rq2.csv"))));
}

TEST_F(Cli, InvalidConfigIsUsageError) {
    write("bad.json", R"({"dims":[0]})");
    EXPECT_EQ(run("rq1 " + path("bad.json") + " " + path("out")).code, 2);
    write("bad2.json", R"({"target_id":9})");
    EXPECT_EQ(run("rq2 " + path("bad2.json") + " " + path("out")).code, 2);
}
