// stirap: run adiabatic-passage scenarios, parameter sweeps and logic checks.
//
// Exit codes: 0 success, 1 invalid input (or a failed conformance check),
// 2 numerical failure.

#include "stirap/scenario.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

namespace {

using namespace stirap;

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 1;
constexpr int kExitNumerical = 2;

void print_populations(const std::vector<double>& pops) {
  for (std::size_t j = 0; j < pops.size(); ++j) std::printf(" rho_%zu%zu=%.6f", j, j, pops[j]);
  std::printf("\n");
}

void print_conformance(const ConformanceReport& report) {
  for (const auto& row : report.rows) {
    const auto& m = row.measured;
    std::printf("%s %s=%d Q=%d expected Q+=%d Qbar=%d %-6s got Q+=%s Qbar=%s %-9s rho00=%.4f rho22=%.4f Re(rho02)=%+.4f %s\n",
                row.table.c_str(), row.table == "TFF" ? "T" : "D", row.input, row.present, row.expected_next,
                row.expected_q_bar, to_string(row.expected_remark), m.next ? std::to_string(*m.next).c_str() : "?",
                m.q_bar ? std::to_string(*m.q_bar).c_str() : "?", to_string(m.remark), m.readout.rho00,
                m.readout.rho22, m.readout.re_rho02, row.pass ? "PASS" : "FAIL");
  }
  std::printf("%zu/%zu rows pass\n", report.passed(), report.rows.size());
}

void print_siso(const SisoResult& result) {
  for (const auto& c : result.clocks) std::printf("%-9s t=%9.4f word=%s\n", c.label.c_str(), c.time, c.word.to_string().c_str());
}

void write_json(const std::string& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out << j.dump(2) << '\n';
}

int simulate(const std::string& cfg_path, const std::string& output_dir, bool no_outputs) {
  const auto cfg = load_config(cfg_path);
  RunOptions options;
  options.output_dir = output_dir;
  options.write_outputs = !no_outputs;
  const auto rec = run_scenario(cfg, options);

  std::printf("scenario %s: %zu levels, %zu steps\n", cfg.name.empty() ? cfg_path.c_str() : cfg.name.c_str(),
              cfg.system.n_levels, rec.steps.size());
  for (const auto& s : rec.steps) {
    std::printf("%-9s t=%9.4f metric=%8.3f", s.label.c_str(), s.marker_time, s.adiabaticity.metric);
    print_populations(s.populations);
  }
  std::printf("final    ");
  print_populations(rec.final_populations);
  std::printf("norm=%.9f max|norm-1|=%.3e error_estimate=%.3e dt=%.3e", rec.diagnostics.final_norm,
              rec.diagnostics.max_norm_deviation, rec.diagnostics.error_estimate, rec.diagnostics.dt);
  if (rec.diagnostics.min_dark_overlap) std::printf(" min_dark_overlap=%.6f", *rec.diagnostics.min_dark_overlap);
  std::printf("\n");
  if (rec.conformance) print_conformance(*rec.conformance);
  if (rec.siso) print_siso(*rec.siso);
  if (rec.trajectory_path) std::printf("trajectory: %s\n", rec.trajectory_path->c_str());
  if (!no_outputs && cfg.outputs.record)
    std::printf("record: %s\n", (std::filesystem::path(output_dir) / *cfg.outputs.record).string().c_str());
  return kExitOk;
}

int run_sweep(const std::string& cfg_path, const std::string& param, const std::vector<double>& values,
              const std::string& out_path, unsigned threads) {
  const auto cfg = load_config(cfg_path);
  const auto table = sweep_table_csv(param, sweep(cfg, param, values, threads));
  if (out_path.empty()) {
    std::cout << table;
  } else {
    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw std::runtime_error(out_path + ": cannot open for writing");
    out << table;
  }
  return kExitOk;
}

int verify_logic(const std::string& cfg_path, const std::string& record_path) {
  const auto cfg = load_config(cfg_path);
  const auto ctx = make_context(cfg);
  json record;
  record["config"] = to_json(cfg);
  bool ok = true;
  switch (cfg.logic.task) {
    case LogicTask::None:
      std::fprintf(stderr, "%s: logic.task is 'none', nothing to verify\n", cfg_path.c_str());
      return kExitInvalid;
    case LogicTask::Tff:
    case LogicTask::Dff: {
      const auto report = cfg.logic.task == LogicTask::Tff ? verify_tff_table(ctx) : verify_dff_table(ctx);
      print_conformance(report);
      record["conformance"] = to_json(report);
      ok = report.all_pass();
      break;
    }
    case LogicTask::Siso: {
      const auto result = siso_shift(make_level_word(cfg.logic.data_in, cfg.system.n_levels), cfg.system.n_levels,
                                     cfg.logic.direction, cfg.logic.mode, ctx);
      print_siso(result);
      record["siso"] = to_json(result);
      break;
    }
  }
  if (!record_path.empty()) write_json(record_path, record);
  return ok ? kExitOk : kExitInvalid;
}

int truth_table(const SimContext& ctx, const std::string& record_path) {
  const auto report = verify_truth_tables(ctx);
  print_conformance(report);
  bool involution = true;
  for (int q : {0, 1}) {
    const auto runs = tff_run(q, {1, 1}, ctx);
    const bool back = runs.back().next && *runs.back().next == q;
    involution = involution && back;
    std::printf("TFF T=1,1 from Q=%d -> Q=%s %s\n", q, runs.back().next ? std::to_string(*runs.back().next).c_str() : "?",
                back ? "PASS" : "FAIL");
  }
  if (!record_path.empty()) {
    json record;
    record["conformance"] = to_json(report);
    record["double_toggle_returns"] = involution;
    write_json(record_path, record);
  }
  return report.all_pass() && involution ? kExitOk : kExitInvalid;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adiabatic passage simulator for multilevel chains"};
  app.require_subcommand(1);

  std::string cfg_path;
  std::string output_dir = ".";
  bool no_outputs = false;
  auto* sim = app.add_subcommand("simulate", "Run a scenario config and write its outputs");
  sim->add_option("config", cfg_path, "Scenario config (JSON)")->required();
  sim->add_option("-o,--output-dir", output_dir, "Directory for the files named in the config's outputs");
  sim->add_flag("--no-outputs", no_outputs, "Do not write trajectory or record files");

  std::string param;
  std::string values_text;
  std::string sweep_out;
  unsigned threads = 0;
  auto* sw = app.add_subcommand("sweep", "Rerun a scenario over values of one config field");
  sw->add_option("config", cfg_path, "Scenario config (JSON)")->required();
  sw->add_option("--param", param, "Dotted field path, e.g. pulses.delay or pulses.steps.0.alpha")->required();
  sw->add_option("--values", values_text, "Comma-separated values (may be empty)")->required();
  sw->add_option("--out", sweep_out, "Write the summary table here instead of stdout");
  sw->add_option("-j,--threads", threads, "Worker threads (0 = hardware concurrency)");

  std::string record_path;
  auto* vl = app.add_subcommand("verify-logic", "Check the config's logic task (flip-flop table or shift register)");
  vl->add_option("config", cfg_path, "Scenario config (JSON)")->required();
  vl->add_option("--record", record_path, "Machine-readable JSON record");

  SimContext ctx;
  auto* tt = app.add_subcommand("truth-table", "Verify all TFF and DFF rows with the default physical parameters");
  tt->add_option("--omega0", ctx.omega0, "Peak Rabi frequency");
  tt->add_option("--delay", ctx.delay, "Stokes-pump delay in units of sigma");
  tt->add_option("--population-high", ctx.encoding.population_high, "Population threshold for a 1");
  tt->add_option("--coherence-high", ctx.encoding.coherence_high, "|Re rho02| threshold for a 1");
  tt->add_flag("--closed", ctx.closed, "Ignore spontaneous decay");
  tt->add_option("--record", record_path, "Machine-readable JSON record");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInvalid;
  }

  try {
    if (sim->parsed()) return simulate(cfg_path, output_dir, no_outputs);
    if (sw->parsed()) {
      std::vector<double> values;
      std::stringstream ss(values_text);
      std::string item;
      while (std::getline(ss, item, ',')) {
        if (item.find_first_not_of(" \t") == std::string::npos) continue;
        std::size_t used = 0;
        double v = 0.0;
        try {
          v = std::stod(item, &used);
        } catch (const std::exception&) {
          used = 0;
        }
        if (used == 0 || item.find_first_not_of(" \t", used) != std::string::npos)
          throw ValidationError("--values: '" + item + "' is not a number");
        values.push_back(v);
      }
      return run_sweep(cfg_path, param, values, sweep_out, threads);
    }
    if (vl->parsed()) return verify_logic(cfg_path, record_path);
    if (tt->parsed()) {
      require_valid(ctx.encoding);
      return truth_table(ctx, record_path);
    }
  } catch (const ConfigError& e) {
    for (const auto& err : e.errors()) std::fprintf(stderr, "error: %s\n", err.c_str());
    return kExitInvalid;
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitInvalid;
  } catch (const NumericalFailure& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitInvalid;
  }
  return kExitOk;
}
