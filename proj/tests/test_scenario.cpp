#include "stirap/scenario.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

using namespace stirap;
using Catch::Approx;
namespace fs = std::filesystem;

namespace {

fs::path config_dir() {
  const char* dir = std::getenv("STIRAP_CONFIG_DIR");
  return dir ? fs::path(dir) : fs::path("configs");
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch_dir() {
  const auto dir = fs::temp_directory_path() / "stirap_scenario_tests";
  fs::create_directories(dir);
  return dir;
}

const char* kMinimal = R"({
  "format_version": 1,
  "system": {"n_levels": 3},
  "pulses": {"steps": [{"type": "stirap", "pump_channel": 0, "stokes_channel": 1}]},
  "initial": {"level": 0}
})";

std::vector<std::string> errors_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.errors();
  }
  return {};
}

bool mentions(const std::vector<std::string>& errors, const std::string& needle) {
  for (const auto& e : errors)
    if (e.find(needle) != std::string::npos) return true;
  return false;
}

RunOptions quiet() {
  RunOptions o;
  o.write_outputs = false;
  o.estimate_error = false;
  return o;
}

}  // namespace

TEST_CASE("minimal config takes defaults") {
  const auto cfg = parse_config(kMinimal);
  CHECK(cfg.system.n_levels == 3);
  CHECK(cfg.pulses.omega0 == kPeakRabi);
  CHECK(cfg.pulses.delay == kDefaultDelay);
  CHECK(cfg.system.excited_lifetime == kExcitedLifetime);
  CHECK(cfg.numeric.steps == kDefaultSteps);
  CHECK(cfg.logic.task == LogicTask::None);
}

TEST_CASE("empty config lists every required field") {
  const auto errors = errors_of("");
  CHECK(mentions(errors, "format_version"));
  CHECK(mentions(errors, "system"));
  CHECK(mentions(errors, "pulses"));
  CHECK(mentions(errors, "initial"));
}

TEST_CASE("config errors") {
  SECTION("even level count reported at its key path with its line") {
    const auto errors = errors_of(R"({
  "format_version": 1,
  "system": {"n_levels": 4},
  "pulses": {"steps": [{"type": "stirap", "pump_channel": 0, "stokes_channel": 1}]},
  "initial": {"level": 0}
})");
    REQUIRE_FALSE(errors.empty());
    CHECK(mentions(errors, "system.n_levels (line 3)"));
    CHECK(mentions(errors, "odd"));
  }
  SECTION("unknown keys are rejected") {
    auto errors = errors_of(R"({"format_version": 1, "sytem": {}})");
    CHECK(mentions(errors, "sytem"));
    CHECK(mentions(errors, "unknown key"));
    errors = errors_of(R"({"format_version": 1, "system": {"n_levels": 3, "colour": 1},
      "pulses": {"steps": []}, "initial": {"level": 0}})");
    CHECK(mentions(errors, "system.colour"));
  }
  SECTION("syntax errors carry line and column") {
    const auto errors = errors_of("{\n  \"format_version\": 1,\n  \"system\": {\"n_levels\": 3,}\n}");
    REQUIRE(errors.size() == 1);
    CHECK(errors[0].rfind("line 3", 0) == 0);
  }
  SECTION("wrong types") {
    const auto errors = errors_of(R"({"format_version": "one", "system": {"n_levels": -3},
      "pulses": {"steps": [{"type": "stirap", "pump_channel": 0, "stokes_channel": 1}]}, "initial": {"level": 0}})");
    CHECK(mentions(errors, "format_version"));
    CHECK(mentions(errors, "system.n_levels"));
  }
  SECTION("semantic checks") {
    CHECK(mentions(errors_of(R"({"format_version": 1, "system": {"n_levels": 3},
      "pulses": {"steps": [{"type": "stirap", "pump_channel": 2, "stokes_channel": 3}]}, "initial": {"level": 0}})"),
                   "pulses.steps[0].pump_channel"));
    CHECK(mentions(errors_of(R"({"format_version": 1, "system": {"n_levels": 3},
      "pulses": {"steps": [{"type": "stirap", "pump_channel": 0, "stokes_channel": 1}]}, "initial": {"level": 5}})"),
                   "initial.level"));
    CHECK(mentions(errors_of(R"({"format_version": 2, "system": {"n_levels": 3},
      "pulses": {"steps": [{"type": "stirap", "pump_channel": 0, "stokes_channel": 1}]}, "initial": {"level": 0}})"),
                   "unsupported version"));
    CHECK(mentions(errors_of(R"({"format_version": 1, "system": {"n_levels": 3},
      "pulses": {"steps": [{"type": "warp", "pump_channel": 0, "stokes_channel": 1}]}, "initial": {"level": 0}})"),
                   "unknown value 'warp'"));
    CHECK(mentions(errors_of(R"({"format_version": 1, "system": {"n_levels": 3},
      "pulses": {"steps": [{"type": "stirap", "pump_channel": 0, "stokes_channel": 1}]},
      "initial": {"level": 0, "weights": [1, 0, 0]}})"),
                   "exactly one of"));
    CHECK(mentions(errors_of(R"({"format_version": 1, "system": {"n_levels": 5},
      "pulses": {"steps": [{"type": "stirap", "pump_channel": 0, "stokes_channel": 1}]}, "initial": {"level": 0},
      "logic": {"task": "tff"}})"),
                   "logic.task"));
  }
}

TEST_CASE("bundled configs parse and round-trip") {
  std::size_t count = 0;
  for (const auto& entry : fs::directory_iterator(config_dir())) {
    if (entry.path().extension() != ".cfg") continue;
    INFO(entry.path().string());
    const auto cfg = load_config(entry.path());
    CHECK(parse_config(serialize_config(cfg)) == cfg);
    ++count;
  }
  CHECK(count >= 6);
}

TEST_CASE("round-trip property over generated configs") {
  std::mt19937 rng(2024);
  std::uniform_real_distribution<double> u(0.1, 5.0);
  for (int trial = 0; trial < 200; ++trial) {
    ScenarioConfig cfg;
    cfg.name = "trial" + std::to_string(trial);
    cfg.system.n_levels = 3 + 2 * static_cast<std::size_t>(trial % 3);
    cfg.system.detuning = u(rng);
    if (trial % 4 == 0) {
      cfg.system.detunings = std::vector<double>(cfg.system.n_levels, 0.0);
      (*cfg.system.detunings)[1] = u(rng);
    }
    if (trial % 5 == 0) cfg.system.lossy_levels = std::vector<std::size_t>{1};
    cfg.system.closed = trial % 2;
    cfg.pulses.omega0 = 10 * u(rng);
    cfg.pulses.delay = u(rng);
    StepConfig step;
    step.type = trial % 3 ? FragmentKind::Stirap : FragmentKind::Fstirap;
    if (step.type == FragmentKind::Fstirap) step.alpha = u(rng) / 4.0;
    if (trial % 7 == 0) step.sigma = u(rng);
    cfg.pulses.steps = {step};
    if (trial % 2)
      cfg.initial.level = 0;
    else
      cfg.initial.weights = std::vector<double>(cfg.system.n_levels, u(rng));
    if (trial % 6 == 0) cfg.numeric.dt = 1e-3 * u(rng);
    cfg.outputs.pairs = {{0, 2}};
    if (trial % 3 == 0) cfg.outputs.trajectory = "x.csv";
    REQUIRE(validate_config(cfg).empty());
    CHECK(parse_config(serialize_config(cfg)) == cfg);
  }
}

TEST_CASE("cascade5 runs a two-step transfer") {
  const auto cfg = load_config(config_dir() / "cascade5.cfg");
  const auto rec = run_scenario(cfg, quiet());
  CHECK(rec.config == cfg);
  REQUIRE(rec.steps.size() == 2);
  CHECK(rec.steps[0].populations[2] >= 0.98);
  CHECK(rec.final_populations[4] >= 0.98);
  REQUIRE(rec.diagnostics.min_dark_overlap.has_value());
  CHECK(*rec.diagnostics.min_dark_overlap >= 0.95);
  REQUIRE(rec.steps[1].predicted.has_value());
}

TEST_CASE("recorded adiabaticity metric matches the config") {
  for (const char* name : {"cascade5", "coherence_shift7", "stirap3"}) {
    const auto cfg = load_config(config_dir() / (std::string(name) + ".cfg"));
    const auto rec = run_scenario(cfg, quiet());
    REQUIRE(rec.steps.size() == cfg.pulses.steps.size());
    for (std::size_t k = 0; k < rec.steps.size(); ++k) {
      const auto& s = cfg.pulses.steps[k];
      const double sigma = s.sigma.value_or(cfg.pulses.sigma);
      const double omega0 = s.omega0.value_or(cfg.pulses.omega0);
      const double half = 0.5 * s.delay.value_or(cfg.pulses.delay);  // in widths
      const double g_near = std::exp(-0.5 * half * half);
      double pump = omega0 * g_near, stokes = omega0 * g_near;
      if (s.type == FragmentKind::Fstirap) {
        const double alpha = s.alpha.value_or(std::numbers::pi / 4);
        pump = omega0 * std::sin(alpha) * g_near;
        stokes = 2.0 * omega0 * std::cos(alpha) * g_near;
      }
      const double omega = std::sqrt(pump * pump + stokes * stokes);
      CHECK(rec.steps[k].adiabaticity.metric == Approx(omega * sigma).epsilon(1e-12));
    }
  }
}

TEST_CASE("coherence_shift7 cascade yields 0001") {
  const auto rec = run_scenario(load_config(config_dir() / "coherence_shift7.cfg"), quiet());
  REQUIRE(rec.siso.has_value());
  CHECK(rec.siso->clocks.back().word.to_string() == "0001");
}

TEST_CASE("tff config passes all four rows") {
  const auto rec = run_scenario(load_config(config_dir() / "tff.cfg"), quiet());
  REQUIRE(rec.conformance.has_value());
  CHECK(rec.conformance->rows.size() == 4);
  CHECK(rec.conformance->all_pass());
}

TEST_CASE("run records carry diagnostics") {
  auto cfg = load_config(config_dir() / "stirap3.cfg");
  RunOptions opts = quiet();
  opts.estimate_error = true;
  const auto rec = run_scenario(cfg, opts);
  CHECK(rec.diagnostics.final_norm < 1.0);
  CHECK(rec.diagnostics.final_norm > 0.98);
  CHECK(rec.diagnostics.error_estimate > 0.0);
  CHECK(rec.diagnostics.error_estimate < 1e-6);
  CHECK(rec.diagnostics.steps == cfg.numeric.steps);
  const auto j = to_json(rec);
  CHECK(j["config"] == to_json(cfg));
  CHECK(j["steps"][0]["label"] == "step-i");
}

TEST_CASE("trajectory export") {
  const auto dir = scratch_dir();
  SECTION("3-level header") {
    CHECK(trajectory_header(3, {{0, 2}}) == "t,rho_00,rho_11,rho_22,re_rho_02,im_rho_02,omega_ch0,omega_ch1");
  }
  SECTION("zero samples give a header-only file") {
    Trajectory traj;
    traj.program = idle_program(0.0, 1.0);
    ObservableSeries series;
    series.populations.resize(0, 3);
    series.pairs = {{0, 2}};
    export_trajectory(traj, series, dir / "empty.csv");
    CHECK(read_file(dir / "empty.csv") == "t,rho_00,rho_11,rho_22,re_rho_02,im_rho_02,omega_ch0,omega_ch1\n");
  }
  SECTION("rows, decimation and determinism") {
    auto cfg = load_config(config_dir() / "stirap3.cfg");
    cfg.outputs.trajectory = "run.csv";
    cfg.outputs.record = "run.json";
    cfg.numeric.samples = 500;
    RunOptions opts;
    opts.output_dir = dir;
    opts.estimate_error = false;
    run_scenario(cfg, opts);
    const auto first = read_file(dir / "run.csv");
    run_scenario(cfg, opts);
    CHECK(read_file(dir / "run.csv") == first);

    std::istringstream lines(first);
    std::string line;
    std::size_t rows = 0;
    std::getline(lines, line);
    while (std::getline(lines, line)) {
      ++rows;
      CHECK(std::count(line.begin(), line.end(), ',') == 7);
    }
    CHECK(rows == 500);

    const auto record = json::parse(read_file(dir / "run.json"));
    CHECK(parse_config(record["config"].dump()) == cfg);
  }
  SECTION("unwritable path") {
    Trajectory traj;
    ObservableSeries series;
    CHECK_THROWS(export_trajectory(traj, series, dir / "no_such_dir" / "x.csv"));
  }
}

TEST_CASE("decimation keeps both ends") {
  const auto idx = decimate(20001, 2000);
  CHECK(idx.size() == 2000);
  CHECK(idx.front() == 0);
  CHECK(idx.back() == 20000);
  CHECK(decimate(10, 2000).size() == 10);
  CHECK(decimate(0, 2000).empty());
}

TEST_CASE("sweeps") {
  const auto cfg = load_config(config_dir() / "stirap3.cfg");
  SECTION("empty value list gives an empty table") {
    CHECK(sweep(cfg, "pulses.delay", {}).empty());
    CHECK(sweep_table_csv("pulses.delay", {}) == "pulses.delay,efficiency,min_dark_overlap,adiabaticity_metric\n");
  }
  SECTION("efficiency rises with the Rabi frequency") {
    const auto rows = sweep(cfg, "pulses.omega0", {1.0, 3.0, 10.0, 30.0}, 2);
    REQUIRE(rows.size() == 4);
    for (std::size_t i = 1; i < rows.size(); ++i) {
      CHECK(rows[i].efficiency > rows[i - 1].efficiency);
      CHECK(rows[i].adiabaticity_metric > rows[i - 1].adiabaticity_metric);
    }
    CHECK(rows[0].efficiency < 0.9);
    CHECK(rows[3].efficiency >= 0.99);
  }
  SECTION("results do not depend on the thread count") {
    const auto a = sweep(cfg, "pulses.delay", {0.8, 1.2, 1.6}, 1);
    const auto b = sweep(cfg, "pulses.delay", {0.8, 1.2, 1.6}, 3);
    CHECK(sweep_table_csv("d", a) == sweep_table_csv("d", b));
  }
  SECTION("indexed paths") {
    const auto fstirap3_reverse = load_config(config_dir() / "fstirap3_reverse.cfg");
    const auto changed = with_parameter(fstirap3_reverse, "pulses.steps.0.alpha", 0.3);
    CHECK(changed.pulses.steps[0].alpha == 0.3);
    CHECK(with_parameter(cfg, "numeric.steps", 4000).numeric.steps == 4000);
  }
  SECTION("invalid paths and values") {
    CHECK_THROWS_AS(with_parameter(cfg, "pulses.nope", 1.0), ConfigError);
    CHECK_THROWS_AS(with_parameter(cfg, "system.closed", 1.0), ConfigError);
    CHECK_THROWS_AS(with_parameter(cfg, "pulses.steps.9.alpha", 1.0), ConfigError);
    CHECK_THROWS_AS(with_parameter(cfg, "pulses.delay", -1.0), ConfigError);
    CHECK_THROWS_AS(with_parameter(cfg, "numeric.steps", 2.5), ConfigError);
    CHECK_THROWS_AS(with_parameter(cfg, "", 1.0), ConfigError);
  }
}
