#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "photonstat/config.hpp"
#include "photonstat/correlate.hpp"
#include "photonstat/events.hpp"

using namespace photonstat;
namespace fs = std::filesystem;

namespace {

const char* kCliPath = PHOTONSTAT_CLI_PATH;

struct CliResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

fs::path work_dir() {
    const auto dir = fs::temp_directory_path() / "photonstat_cli_tests";
    fs::create_directories(dir);
    return dir;
}

CliResult run_cli(const std::string& args) {
    const auto dir = work_dir();
    const auto out = dir / "stdout.log";
    const auto err = dir / "stderr.log";
    const std::string cmd = std::string(kCliPath) + " " + args + " > " + out.string() + " 2> " + err.string();
    const int status = std::system(cmd.c_str());
    CliResult r;
    r.exit_code = (status >= 256) ? (status >> 8) & 0xff : status;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
}

void write_file(const fs::path& p, const std::string& content) {
    std::ofstream os(p);
    os << content;
}

const char* kHbtConfig = R"({
  "seed": 424242,
  "duration_ps": 400000000,
  "topology": "hbt",
  "qd": {"t1_ps": 1765.0, "t2_ps": 294.0, "tau1_ps": 600.0, "tau2_ps": 5000.0, "tau3_ps": 30000.0,
          "blink_x": 0.22, "blink_y": 0.05, "beta": 0.1023, "fss_uev": 5.7},
  "detectors": {"response_fwhm_ps": 125.0},
  "hom": {"qd_rate_per_ps": 1e-4}
})";

}  // namespace

TEST_CASE("config parsing rejects unknown keys with a path") {
    Json doc = Json::parse(R"({"seed": 1, "qd": {"t1_ps": 100.0, "bogus": 3}})");
    try {
        parse_experiment_config(doc);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("qd") != std::string::npos);
        CHECK(std::string(e.what()).find("bogus") != std::string::npos);
    }
}

TEST_CASE("config override via dotted path") {
    Json doc = Json::parse(kHbtConfig);
    apply_override(doc, "qd.t2_ps=500");
    apply_override(doc, "topology=hom");
    apply_override(doc, "hom.copolarized=false");
    const auto cfg = parse_experiment_config(doc);
    CHECK(cfg.sim.qd.t2_ps == 500.0);
    CHECK(cfg.sim.topology == Topology::hom);
    CHECK(cfg.sim.hom.copolarized == false);
    CHECK_THROWS_AS(apply_override(doc, "no_equals_sign"), ConfigError);
}

TEST_CASE("config validation errors") {
    Json doc = Json::parse(kHbtConfig);
    apply_override(doc, "duration_ps=0");
    CHECK_THROWS_AS(parse_experiment_config(doc), ConfigError);
    Json doc2 = Json::parse(kHbtConfig);
    apply_override(doc2, "qd.tau1_ps=2000.0");  // above T1, pump rate impossible
    CHECK_THROWS_AS(parse_experiment_config(doc2), ConfigError);
    Json doc3 = Json::parse(kHbtConfig);
    apply_override(doc3, "laser.polarization=\"Z\"");
    CHECK_THROWS_AS(parse_experiment_config(doc3), InputError);
}

TEST_CASE("cli: version") {
    const auto r = run_cli("version");
    CHECK(r.exit_code == 0);
    CHECK(r.out.find("photonstat") != std::string::npos);
}

TEST_CASE("cli: invalid config exits with code 2") {
    const auto dir = work_dir();
    write_file(dir / "bad.json", R"({"duration_ps": 0, "topology": "hbt"})");
    const auto r = run_cli("simulate --config " + (dir / "bad.json").string());
    CHECK(r.exit_code == 2);
    CHECK(r.err.find("duration") != std::string::npos);

    const auto r2 = run_cli("simulate --config " + (dir / "missing.json").string());
    CHECK(r2.exit_code == 3);
}

TEST_CASE("cli: unknown fit model exits with code 2 and lists models") {
    const auto dir = work_dir();
    write_file(dir / "dummy.csv", "tau_ps,value\n0,1\n");
    const auto r = run_cli("fit --model warp-core --data " + (dir / "dummy.csv").string());
    CHECK(r.exit_code == 2);
    CHECK(r.err.find("fringe") != std::string::npos);
    CHECK(r.err.find("lifetime") != std::string::npos);
}

TEST_CASE("cli: simulate is deterministic and correlate consumes its output") {
    const auto dir = work_dir();
    const auto cfgp = dir / "hbt.json";
    write_file(cfgp, kHbtConfig);
    const auto out1 = dir / "run1";
    const auto out2 = dir / "run2";
    fs::remove_all(out1);
    fs::remove_all(out2);

    const auto r1 = run_cli("simulate --config " + cfgp.string() + " --out " + out1.string());
    REQUIRE(r1.exit_code == 0);
    const auto r2 = run_cli("simulate --config " + cfgp.string() + " --out " + out2.string());
    REQUIRE(r2.exit_code == 0);

    REQUIRE(fs::exists(out1 / "hbt.ttag"));
    REQUIRE(fs::exists(out1 / "manifest.json"));
    CHECK(slurp(out1 / "hbt.ttag") == slurp(out2 / "hbt.ttag"));  // byte-identical

    const auto g2p = dir / "g2.csv";
    const auto rc = run_cli("correlate g2 --input " + (out1 / "hbt.ttag").string() + " --a 0 --b 1 --span 100000 --bin 500 --out " + g2p.string());
    REQUIRE(rc.exit_code == 0);
    const auto table = read_g2_csv(g2p.string());
    CHECK(table.tau_ps.size() == 401);
    CHECK(table.meta.count("input_fnv1a64") == 1);

    SECTION("missing channel produces a warning but succeeds") {
        const auto rw = run_cli("correlate g2 --input " + (out1 / "hbt.ttag").string() + " --a 0 --b 6 --span 100000 --bin 500 --out " + (dir / "g2_empty.csv").string());
        CHECK(rw.exit_code == 0);
        CHECK(rw.err.find("channel 6 has no events") != std::string::npos);
    }

    SECTION("bad magic bytes exit with the format code and name the file") {
        write_file(dir / "garbage.ttag", "MAGICFAIL????????");
        const auto rb = run_cli("correlate g2 --input " + (dir / "garbage.ttag").string() + " --out " + (dir / "x.csv").string());
        CHECK(rb.exit_code == 4);
        CHECK(rb.err.find("garbage.ttag") != std::string::npos);
    }
}

TEST_CASE("cli: michelson simulate then fringe fit") {
    const auto dir = work_dir();
    const auto cfgp = dir / "mi.json";
    write_file(cfgp, R"({
      "seed": 7,
      "duration_ps": 1000000,
      "topology": "michelson",
      "qd": {"t1_ps": 1765.0, "t2_ps": 1058.0, "tau1_ps": 600.0, "fss_uev": 18.5},
      "michelson": {"delay_min_ps": 0, "delay_max_ps": 2500, "delay_step_ps": 50,
                     "phase_steps": 16, "photons_per_step": 3000, "contrast_a0": 0.97}
    })");
    const auto out = dir / "mi_out";
    fs::remove_all(out);
    const auto rs = run_cli("simulate --config " + cfgp.string() + " --out " + out.string());
    REQUIRE(rs.exit_code == 0);
    REQUIRE(fs::exists(out / "michelson_fringes.csv"));

    const auto report = dir / "fringe_report.json";
    const auto rf = run_cli("fit --model fringe --data " + (out / "michelson_fringes.csv").string() + " --out " +
                            report.string() + " --curve-out " + (dir / "fringe_curve.csv").string());
    REQUIRE(rf.exit_code == 0);
    const auto j = Json::parse(slurp(report));
    CHECK(j.at("converged").get<bool>());
    CHECK(j.at("params").at("t2_ps").get<double>() == Catch::Approx(1058.0).epsilon(0.15));
    CHECK(j.at("params").at("delta_e_uev").get<double>() == Catch::Approx(18.5).epsilon(0.03));
    CHECK(fs::exists(dir / "fringe_curve.csv"));
}

TEST_CASE("cli: golden histogram is reproduced bit-exactly") {
    const fs::path golden_dir = fs::path(PHOTONSTAT_SOURCE_DIR) / "tests" / "golden";
    const auto cfgp = golden_dir / "hbt_small.json";
    const auto goldenp = golden_dir / "hbt_small_g2.csv";
    REQUIRE(fs::exists(cfgp));
    REQUIRE(fs::exists(goldenp));
    const auto dir = work_dir();
    const auto out = dir / "golden_run";
    fs::remove_all(out);
    const auto rs = run_cli("simulate --config " + cfgp.string() + " --out " + out.string());
    REQUIRE(rs.exit_code == 0);
    const auto g2p = dir / "golden_g2.csv";
    const auto rc = run_cli("correlate g2 --input " + (out / "hbt.ttag").string() +
                            " --a 0 --b 1 --span 50000 --bin 250 --out " + g2p.string());
    REQUIRE(rc.exit_code == 0);
    // drop the meta lines that legitimately differ (input path), compare the rest
    auto strip_paths = [](const std::string& text) {
        std::stringstream in(text), out2;
        std::string line;
        while (std::getline(in, line))
            if (line.rfind("# meta: input=", 0) != 0) out2 << line << '\n';
        return out2.str();
    };
    CHECK(strip_paths(slurp(g2p)) == strip_paths(slurp(goldenp)));
}
