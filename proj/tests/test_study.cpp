#include <doctest.h>

#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "gridloss/errors.hpp"
#include "gridloss/study.hpp"

using namespace gridloss;
using namespace gridloss::study;

namespace {

namespace fs = std::filesystem;

const std::string kConfigs = std::string(GRIDLOSS_SOURCE_DIR) + "/configs";
const std::string kData15 = std::string(GRIDLOSS_SOURCE_DIR) + "/data/ieee15";

// Scratch directory for configs and command outputs, torn down per test.
struct TempDir {
    fs::path dir;
    explicit TempDir(const std::string& tag) {
        dir = fs::temp_directory_path() /
              ("gridloss_study_" + tag + "_" + std::to_string(::getpid()));
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    ~TempDir() { fs::remove_all(dir); }

    std::string write(const std::string& name, const std::string& content) {
        const auto path = dir / name;
        std::ofstream(path) << content;
        return path.string();
    }
    std::string sub(const std::string& name) const { return (dir / name).string(); }
};

std::string slurp(const fs::path& path) {
    std::ifstream in(path);
    REQUIRE(bool(in));
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// A study config that points at the bundled 15-bus feeder via absolute paths,
// with everything else left to the given fragment.
std::string feeder15_config(const std::string& extra) {
    std::string doc = "{\n  \"feeder\": {\n";
    doc += "    \"buses\": \"" + kData15 + "/buses.csv\",\n";
    doc += "    \"branches\": \"" + kData15 + "/branches.csv\",\n";
    doc += "    \"config\": \"" + kData15 + "/feeder.json\"\n  }";
    if (!extra.empty()) doc += ",\n" + extra;
    doc += "\n}\n";
    return doc;
}

StudyConfig shipped15() { return load_study_config(kConfigs + "/ieee15.json"); }

}  // namespace

TEST_CASE("the shipped 15-bus study config loads fully resolved") {
    const StudyConfig cfg = shipped15();
    CHECK(cfg.network.per_unit);
    CHECK(cfg.network.n_bus() == 15);
    CHECK(cfg.zip.z_p == doctest::Approx(0.2));
    CHECK(cfg.zip.i_p == doctest::Approx(0.15));
    CHECK(cfg.zip.p_p == doctest::Approx(0.65));
    CHECK(cfg.dg.n_dg == 4);
    CHECK(cfg.dg.s_dg_max == doctest::Approx(2.1));  // 2100 kVA on the 1 MVA base
    CHECK(!cfg.dg.allow_q);
    CHECK(cfg.limits.v_min_pu == doctest::Approx(0.95));
    CHECK(cfg.limits.v_max_pu == doctest::Approx(1.05));
    CHECK(cfg.load_increase_factor == doctest::Approx(1.5));
    CHECK(!cfg.freeze_q);
    CHECK(cfg.verify_max_rel_error == doctest::Approx(0.02));
}

TEST_CASE("a minimal config falls back to the documented defaults") {
    TempDir tmp("defaults");
    const StudyConfig cfg = load_study_config(tmp.write("study.json", feeder15_config("")));
    CHECK(cfg.zip.z_p == doctest::Approx(0.4));
    CHECK(cfg.zip.i_p == doctest::Approx(0.3));
    CHECK(cfg.zip.p_p == doctest::Approx(0.3));
    CHECK(cfg.zip.z_q == doctest::Approx(0.4));
    CHECK(cfg.dg.n_dg == 0);
    CHECK(cfg.load_increase_factor == doctest::Approx(1.5));
    CHECK(cfg.verify_max_rel_error == doctest::Approx(0.02));
}

TEST_CASE("config mistakes are reported as config errors") {
    TempDir tmp("badcfg");
    SUBCASE("missing file") {
        CHECK_THROWS_AS(load_study_config(tmp.sub("nope.json")), ConfigError);
    }
    SUBCASE("broken json") {
        CHECK_THROWS_AS(load_study_config(tmp.write("study.json", "{ nope")), ConfigError);
    }
    SUBCASE("missing feeder block") {
        CHECK_THROWS_AS(load_study_config(tmp.write("study.json", "{}")), ConfigError);
    }
    SUBCASE("zip coefficients that do not sum to one") {
        const std::string doc =
            feeder15_config("  \"zip\": {\"z_p\": 0.5, \"i_p\": 0.5, \"p_p\": 0.5}");
        CHECK_THROWS_AS(load_study_config(tmp.write("study.json", doc)), ConfigError);
    }
    SUBCASE("fractional unit count") {
        const std::string doc = feeder15_config("  \"dg\": {\"n_dg\": 2.5}");
        CHECK_THROWS_AS(load_study_config(tmp.write("study.json", doc)), ConfigError);
    }
}

TEST_CASE("base command reports the sagging tail and writes its artifacts") {
    TempDir tmp("base");
    const StudyConfig cfg = shipped15();
    const BaseResult res = run_base(cfg, tmp.sub("out"));

    CHECK(res.row.scenario == "base");
    CHECK(res.row.sweep_losses_kw == doctest::Approx(58.630).epsilon(2e-4));
    CHECK(res.row.min_voltage_pu == doctest::Approx(0.946).epsilon(1e-3));
    CHECK(res.row.max_tightness_gap < 1e-6);
    CHECK(res.buses_below_vmin == std::vector<int>{12, 13, 14, 15});

    for (const char* name :
         {"report.csv", "voltages_base.csv", "branches_base.csv", "summary.json"})
        CHECK(fs::exists(fs::path(tmp.sub("out")) / name));

    const std::string report = slurp(fs::path(tmp.sub("out")) / "report.csv");
    CHECK(report.find("scenario,n_dg,dg_buses") == 0);
    CHECK(report.find("\nbase,0,") != std::string::npos);
}

TEST_CASE("stage 1 with zero units is exactly the base case") {
    const StudyConfig cfg = shipped15();
    const BaseResult base = run_base(cfg);
    const std::vector<Stage1Result> s1 = run_stage1(cfg, {0});
    REQUIRE(s1.size() == 1);
    CHECK(s1[0].row.scenario == "stage1_n0");
    CHECK(s1[0].row.sweep_losses_kw == base.row.sweep_losses_kw);
    CHECK(s1[0].row.dg_buses.empty());
}

TEST_CASE("stage 1 results chain into stage 2 through placements.json") {
    TempDir tmp("chain");
    const std::string out = tmp.sub("out");
    const StudyConfig cfg = shipped15();

    const std::vector<Stage1Result> s1 = run_stage1(cfg, {1}, out);
    REQUIRE(s1.size() == 1);
    CHECK(s1[0].placement.dg_buses == std::vector<int>{3});
    CHECK(*s1[0].row.losses_stage1_kw == doctest::Approx(36.688).epsilon(1e-3));
    CHECK(!s1[0].search.budget_exhausted);
    REQUIRE(fs::exists(fs::path(out) / "placements.json"));

    const std::vector<Stage2Result> s2 = run_stage2(cfg, {1}, out);
    REQUIRE(s2.size() == 1);
    CHECK(s2[0].placement.dg_buses == std::vector<int>{3});
    CHECK(s2[0].row.scenario == "stage2_n1");
    REQUIRE(s2[0].row.losses_stage2_kw.has_value());
    CHECK(*s2[0].row.losses_stage2_kw < *s2[0].row.losses_stage1_kw);
    CHECK(s2[0].row.sweep_losses_kw == doctest::Approx(14.555).epsilon(5e-3));
    CHECK(s2[0].row.min_voltage_pu > 0.95);
}

TEST_CASE("a stale placements file is refused, not silently reused") {
    TempDir tmp("stale");
    const std::string out = tmp.sub("out");
    const StudyConfig cfg = shipped15();
    run_stage1(cfg, {1}, out);

    const fs::path file = fs::path(out) / "placements.json";
    std::string doc = slurp(file);
    const auto pos = doc.find("network_fingerprint");
    REQUIRE(pos != std::string::npos);
    const auto colon = doc.find(':', pos);
    doc.replace(colon + 1, doc.find(',', colon) - colon - 1, " \"deadbeef\"");
    std::ofstream(file) << doc;

    CHECK_THROWS_AS(run_stage2(cfg, {1}, out), ConfigError);
}

TEST_CASE("a unit load factor leaves the load study flat") {
    TempDir tmp("flat");
    StudyConfig cfg = shipped15();
    cfg.dg.n_dg = 2;  // cheaper reference optimization, same mechanics
    const LoadStudyResult res = run_load_study(cfg, 1.0, tmp.sub("out"));

    CHECK(static_cast<int>(res.rows.size()) > 0);
    for (const auto& row : res.rows) {
        CHECK(std::fabs(row.delta_l_no_dg_kw) < 1e-6);
        CHECK(std::fabs(row.delta_l_optimized_kw) < 1e-6);
    }
    CHECK(fs::exists(fs::path(tmp.sub("out")) / "loadstudy.csv"));

    CHECK_THROWS_AS(run_load_study(cfg, 0.0), ConfigError);
}

TEST_CASE("reruns reproduce the report byte for byte") {
    TempDir tmp("determinism");
    const StudyConfig cfg = shipped15();
    run_base(cfg, tmp.sub("a"));
    run_base(cfg, tmp.sub("b"));
    CHECK(slurp(fs::path(tmp.sub("a")) / "report.csv") ==
          slurp(fs::path(tmp.sub("b")) / "report.csv"));
}
