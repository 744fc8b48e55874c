#ifndef STIRAP_SCENARIO_HPP
#define STIRAP_SCENARIO_HPP

// Scenario configs (JSON, format_version 1), the scenario runner, trajectory
// CSV export and parameter sweeps. This is the layer the `stirap` command
// line tool is built on.

#include "stirap/analysis.hpp"
#include "stirap/chain.hpp"
#include "stirap/logic.hpp"
#include "stirap/propagator.hpp"
#include "stirap/pulses.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace stirap {

using json = nlohmann::ordered_json;

inline constexpr int kFormatVersion = 1;

// ---------------------------------------------------------------------------
// Config types

struct SystemConfig {
  std::size_t n_levels = 3;
  double detuning = 0.0;  // one-photon detuning on every excited level
  std::optional<std::vector<double>> detunings;  // explicit per-level list, overrides `detuning`
  std::optional<std::vector<std::size_t>> lossy_levels;
  double excited_lifetime = kExcitedLifetime;
  double ground_lifetime = kGroundLifetime;
  bool closed = false;

  bool operator==(const SystemConfig&) const = default;
};

struct StepConfig {
  FragmentKind type = FragmentKind::Stirap;
  std::size_t pump_channel = 0;
  std::size_t stokes_channel = 1;
  std::optional<double> omega0;
  std::optional<double> sigma;
  std::optional<double> delay;
  std::optional<double> alpha;

  bool operator==(const StepConfig&) const = default;
};

struct PulseConfig {
  double omega0 = kPeakRabi;
  double sigma = 1.0;
  double delay = kDefaultDelay;  // units of sigma
  double gap = kDefaultGap;      // units of sigma
  std::vector<StepConfig> steps;

  bool operator==(const PulseConfig&) const = default;
};

struct InitialConfig {
  std::optional<std::size_t> level;
  std::optional<std::vector<double>> weights;  // real amplitudes, normalized on use

  bool operator==(const InitialConfig&) const = default;
};

enum class LogicTask { None, Tff, Dff, Siso };

struct LogicConfig {
  LogicTask task = LogicTask::None;
  RegisterMode mode = RegisterMode::Population;
  ShiftDirection direction = ShiftDirection::Right;
  std::string data_in;
  double population_high = 0.9;
  double coherence_high = 0.4;

  bool operator==(const LogicConfig&) const = default;
};

struct NumericConfig {
  std::size_t steps = kDefaultSteps;
  std::optional<double> dt;  // overrides `steps`
  std::size_t samples = 2000;

  bool operator==(const NumericConfig&) const = default;
};

struct OutputConfig {
  std::optional<std::string> trajectory;
  std::optional<std::string> record;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;

  bool operator==(const OutputConfig&) const = default;
};

struct ScenarioConfig {
  int format_version = kFormatVersion;
  std::string name;
  SystemConfig system;
  PulseConfig pulses;
  InitialConfig initial;
  LogicConfig logic;
  NumericConfig numeric;
  OutputConfig outputs;

  bool operator==(const ScenarioConfig&) const = default;
};

/// Parse or validation failure; `errors` lists every problem found.
class ConfigError : public ValidationError {
 public:
  explicit ConfigError(std::vector<std::string> errors)
      : ValidationError(join(errors)), errors_(std::move(errors)) {}

  const std::vector<std::string>& errors() const { return errors_; }

 private:
  static std::string join(const std::vector<std::string>& errors) {
    std::string s;
    for (const auto& e : errors) s += (s.empty() ? "" : "\n") + e;
    return s;
  }
  std::vector<std::string> errors_;
};

// ---------------------------------------------------------------------------
// Names

inline const char* to_string(FragmentKind k) { return k == FragmentKind::Stirap ? "stirap" : "fstirap"; }
inline const char* to_string(LogicTask t) {
  switch (t) {
    case LogicTask::None: return "none";
    case LogicTask::Tff: return "tff";
    case LogicTask::Dff: return "dff";
    case LogicTask::Siso: return "siso";
  }
  return "?";
}
inline const char* to_string(RegisterMode m) { return m == RegisterMode::Population ? "population" : "coherence"; }
inline const char* to_string(ShiftDirection d) { return d == ShiftDirection::Right ? "right" : "left"; }

// ---------------------------------------------------------------------------
// Serialization

inline json to_json(const ScenarioConfig& cfg) {
  json j;
  j["format_version"] = cfg.format_version;
  j["name"] = cfg.name;

  json sys;
  sys["n_levels"] = cfg.system.n_levels;
  sys["detuning"] = cfg.system.detuning;
  if (cfg.system.detunings) sys["detunings"] = *cfg.system.detunings;
  if (cfg.system.lossy_levels) sys["lossy_levels"] = *cfg.system.lossy_levels;
  sys["excited_lifetime"] = cfg.system.excited_lifetime;
  sys["ground_lifetime"] = cfg.system.ground_lifetime;
  sys["closed"] = cfg.system.closed;
  j["system"] = sys;

  json pulses;
  pulses["omega0"] = cfg.pulses.omega0;
  pulses["sigma"] = cfg.pulses.sigma;
  pulses["delay"] = cfg.pulses.delay;
  pulses["gap"] = cfg.pulses.gap;
  pulses["steps"] = json::array();
  for (const auto& s : cfg.pulses.steps) {
    json step;
    step["type"] = to_string(s.type);
    step["pump_channel"] = s.pump_channel;
    step["stokes_channel"] = s.stokes_channel;
    if (s.omega0) step["omega0"] = *s.omega0;
    if (s.sigma) step["sigma"] = *s.sigma;
    if (s.delay) step["delay"] = *s.delay;
    if (s.alpha) step["alpha"] = *s.alpha;
    pulses["steps"].push_back(step);
  }
  j["pulses"] = pulses;

  json init = json::object();
  if (cfg.initial.level) init["level"] = *cfg.initial.level;
  if (cfg.initial.weights) init["weights"] = *cfg.initial.weights;
  j["initial"] = init;

  json logic;
  logic["task"] = to_string(cfg.logic.task);
  logic["mode"] = to_string(cfg.logic.mode);
  logic["direction"] = to_string(cfg.logic.direction);
  logic["data_in"] = cfg.logic.data_in;
  logic["population_high"] = cfg.logic.population_high;
  logic["coherence_high"] = cfg.logic.coherence_high;
  j["logic"] = logic;

  json numeric;
  numeric["steps"] = cfg.numeric.steps;
  if (cfg.numeric.dt) numeric["dt"] = *cfg.numeric.dt;
  numeric["samples"] = cfg.numeric.samples;
  j["numeric"] = numeric;

  json out;
  if (cfg.outputs.trajectory) out["trajectory"] = *cfg.outputs.trajectory;
  if (cfg.outputs.record) out["record"] = *cfg.outputs.record;
  out["pairs"] = json::array();
  for (const auto& [a, b] : cfg.outputs.pairs) out["pairs"].push_back({a, b});
  j["outputs"] = out;
  return j;
}

inline std::string serialize_config(const ScenarioConfig& cfg) { return to_json(cfg).dump(2) + "\n"; }

// ---------------------------------------------------------------------------
// Parsing

namespace config_detail {

/// Line of the first occurrence of "key" in the source text, for error context.
inline std::optional<std::size_t> line_of_key(const std::string& text, const std::string& key) {
  const auto pos = text.find("\"" + key + "\"");
  if (pos == std::string::npos) return std::nullopt;
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(pos), '\n'));
}

class Reader {
 public:
  explicit Reader(const std::string& text) : text_(text) {}

  std::vector<std::string> errors;

  void fail(const std::string& path, const std::string& msg) {
    const auto dot = path.find_last_of('.');
    auto key = dot == std::string::npos ? path : path.substr(dot + 1);
    key = key.substr(0, key.find('['));
    std::string where = path;
    if (auto line = line_of_key(text_, key)) where += " (line " + std::to_string(*line) + ")";
    errors.push_back(where + ": " + msg);
  }

  /// Rejects keys outside `allowed`. Returns false when `node` is not an object.
  bool object(const json& node, const std::string& path, std::initializer_list<const char*> allowed) {
    if (!node.is_object()) {
      fail(path, "expected an object");
      return false;
    }
    for (const auto& [key, value] : node.items()) {
      bool known = false;
      for (const char* a : allowed) known = known || key == a;
      if (!known) fail(join(path, key), "unknown key");
    }
    return true;
  }

  template <class T>
  void read(const json& node, const std::string& path, const char* key, T& out, bool required = false) {
    if (!node.contains(key)) {
      if (required) fail(join(path, key), "missing required field");
      return;
    }
    convert(node.at(key), join(path, key), out);
  }

  template <class T>
  void read(const json& node, const std::string& path, const char* key, std::optional<T>& out) {
    if (!node.contains(key)) return;
    T value{};
    if (convert(node.at(key), join(path, key), value)) out = std::move(value);
  }

  static std::string join(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
  }

  bool convert(const json& v, const std::string& path, double& out) {
    if (!v.is_number()) return fail(path, "expected a number"), false;
    out = v.get<double>();
    if (!std::isfinite(out)) return fail(path, "must be finite"), false;
    return true;
  }
  bool convert(const json& v, const std::string& path, std::size_t& out) {
    if (!v.is_number_integer() || v.get<long long>() < 0) return fail(path, "expected a nonnegative integer"), false;
    out = v.get<std::size_t>();
    return true;
  }
  bool convert(const json& v, const std::string& path, int& out) {
    if (!v.is_number_integer()) return fail(path, "expected an integer"), false;
    out = v.get<int>();
    return true;
  }
  bool convert(const json& v, const std::string& path, bool& out) {
    if (!v.is_boolean()) return fail(path, "expected true or false"), false;
    out = v.get<bool>();
    return true;
  }
  bool convert(const json& v, const std::string& path, std::string& out) {
    if (!v.is_string()) return fail(path, "expected a string"), false;
    out = v.get<std::string>();
    return true;
  }
  template <class T>
  bool convert(const json& v, const std::string& path, std::vector<T>& out) {
    if (!v.is_array()) return fail(path, "expected an array"), false;
    out.clear();
    bool ok = true;
    for (std::size_t i = 0; i < v.size(); ++i) {
      T item{};
      ok = convert(v[i], path + "[" + std::to_string(i) + "]", item) && ok;
      out.push_back(item);
    }
    return ok;
  }
  bool convert(const json& v, const std::string& path, std::pair<std::size_t, std::size_t>& out) {
    if (!v.is_array() || v.size() != 2) return fail(path, "expected a pair [j, k]"), false;
    return convert(v[0], path + "[0]", out.first) && convert(v[1], path + "[1]", out.second);
  }

 private:
  const std::string& text_;
};

template <class E>
bool read_enum(Reader& r, const json& node, const std::string& path, const char* key, E& out,
               std::initializer_list<std::pair<const char*, E>> names) {
  std::string s;
  if (!node.contains(key)) return false;
  if (!r.convert(node.at(key), Reader::join(path, key), s)) return false;
  for (const auto& [name, value] : names)
    if (s == name) {
      out = value;
      return true;
    }
  std::string allowed;
  for (const auto& [name, value] : names) allowed += (allowed.empty() ? "" : ", ") + std::string(name);
  r.fail(Reader::join(path, key), "unknown value '" + s + "' (expected one of: " + allowed + ")");
  return false;
}

}  // namespace config_detail

/// Semantic checks on a structurally parsed config. Returns human-readable
/// errors keyed by the config path.
inline std::vector<std::string> validate_config(const ScenarioConfig& cfg) {
  std::vector<std::string> errors;
  auto fail = [&](const std::string& path, const std::string& msg) { errors.push_back(path + ": " + msg); };

  if (cfg.format_version != kFormatVersion)
    fail("format_version", "unsupported version " + std::to_string(cfg.format_version));

  const auto n = cfg.system.n_levels;
  LevelChain chain = LevelChain::uniform(n, cfg.system.detuning);
  if (cfg.system.detunings) chain.detunings = *cfg.system.detunings;
  if (cfg.system.lossy_levels) chain.lossy_levels = {cfg.system.lossy_levels->begin(), cfg.system.lossy_levels->end()};
  for (const auto& issue : validate_chain(chain).issues) {
    std::string key = "system.n_levels";
    if (issue.find("detunings") != std::string::npos) key = "system.detunings";
    if (issue.find("lossy") != std::string::npos) key = "system.lossy_levels";
    fail(key, issue);
  }
  if (!(cfg.system.excited_lifetime > 0.0)) fail("system.excited_lifetime", "must be > 0");
  if (!(cfg.system.ground_lifetime > 0.0)) fail("system.ground_lifetime", "must be > 0");

  const auto& p = cfg.pulses;
  if (!(p.omega0 >= 0.0)) fail("pulses.omega0", "must be >= 0");
  if (!(p.sigma > 0.0)) fail("pulses.sigma", "must be > 0");
  if (!(p.delay > 0.0)) fail("pulses.delay", "must be > 0");
  if (!(p.gap > 0.0)) fail("pulses.gap", "must be > 0");
  if (p.steps.empty()) fail("pulses.steps", "at least one step is required");
  for (std::size_t i = 0; i < p.steps.size(); ++i) {
    const auto& s = p.steps[i];
    const auto path = "pulses.steps[" + std::to_string(i) + "]";
    if (s.pump_channel + 1 >= n) fail(path + ".pump_channel", "channel out of range for " + std::to_string(n) + " levels");
    if (s.stokes_channel + 1 >= n) fail(path + ".stokes_channel", "channel out of range for " + std::to_string(n) + " levels");
    const auto dist = s.pump_channel > s.stokes_channel ? s.pump_channel - s.stokes_channel : s.stokes_channel - s.pump_channel;
    if (dist != 1) fail(path, "pump and Stokes channels must be adjacent");
    if (s.omega0 && !(*s.omega0 >= 0.0)) fail(path + ".omega0", "must be >= 0");
    if (s.sigma && !(*s.sigma > 0.0)) fail(path + ".sigma", "must be > 0");
    if (s.delay && !(*s.delay > 0.0)) fail(path + ".delay", "must be > 0");
    if (s.alpha && !(*s.alpha >= 0.0 && *s.alpha <= std::numbers::pi / 2)) fail(path + ".alpha", "must lie in [0, pi/2]");
    if (s.alpha && s.type == FragmentKind::Stirap) fail(path + ".alpha", "only fractional STIRAP steps take an angle");
  }

  const auto& init = cfg.initial;
  if (init.level.has_value() == init.weights.has_value()) {
    fail("initial", "exactly one of 'level' or 'weights' is required");
  } else if (init.level && *init.level >= n) {
    fail("initial.level", "level out of range for " + std::to_string(n) + " levels");
  } else if (init.weights) {
    if (init.weights->size() != n) fail("initial.weights", "needs one weight per level");
    double norm = 0.0;
    for (double w : *init.weights) norm += w * w;
    if (!(norm > 0.0)) fail("initial.weights", "weights must not all be zero");
  }

  const auto& logic = cfg.logic;
  if (!(logic.population_high > 0.5 && logic.population_high < 1.0))
    fail("logic.population_high", "must lie in (0.5, 1)");
  if (!(logic.coherence_high > 0.0 && logic.coherence_high <= 0.5))
    fail("logic.coherence_high", "must lie in (0, 0.5]");
  if ((logic.task == LogicTask::Tff || logic.task == LogicTask::Dff) && n != 3)
    fail("logic.task", "flip-flops run on a 3-level system");
  if (logic.task == LogicTask::Siso) {
    if (logic.data_in.size() != (n + 1) / 2) {
      fail("logic.data_in", "needs " + std::to_string((n + 1) / 2) + " bits for " + std::to_string(n) + " levels");
    } else {
      const auto ones = std::count(logic.data_in.begin(), logic.data_in.end(), '1');
      if (logic.data_in.find_first_not_of("01") != std::string::npos) fail("logic.data_in", "only 0 and 1 allowed");
      if (logic.mode == RegisterMode::Population && ones != 1) fail("logic.data_in", "population mode needs exactly one 1");
      if (logic.mode == RegisterMode::Coherence && (ones < 1 || ones > 2))
        fail("logic.data_in", "coherence mode needs one or two 1s");
    }
  }

  if (cfg.numeric.steps < 1) fail("numeric.steps", "must be >= 1");
  if (cfg.numeric.dt && !(*cfg.numeric.dt > 0.0)) fail("numeric.dt", "must be > 0");
  if (cfg.numeric.samples < 2) fail("numeric.samples", "must be >= 2");
  for (std::size_t i = 0; i < cfg.outputs.pairs.size(); ++i) {
    const auto& [a, b] = cfg.outputs.pairs[i];
    if (a >= n || b >= n) fail("outputs.pairs[" + std::to_string(i) + "]", "level out of range");
  }
  return errors;
}

/// Parses and validates a JSON scenario. Throws ConfigError listing every
/// problem, with the offending key path and source line where known.
inline ScenarioConfig parse_config(const std::string& text) {
  using config_detail::Reader;
  json root;
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) {
    root = json::object();
  } else {
    try {
      root = json::parse(text);
    } catch (const json::parse_error& e) {
      std::size_t line = 1, col = 1;
      for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
        if (text[i] == '\n') {
          ++line;
          col = 1;
        } else {
          ++col;
        }
      }
      throw ConfigError({"line " + std::to_string(line) + ", column " + std::to_string(col) + ": " + e.what()});
    }
  }

  Reader r(text);
  ScenarioConfig cfg;
  if (!r.object(root, "", {"format_version", "name", "system", "pulses", "initial", "logic", "numeric", "outputs"}))
    throw ConfigError(r.errors);
  r.read(root, "", "format_version", cfg.format_version, true);
  r.read(root, "", "name", cfg.name);

  if (!root.contains("system")) {
    r.fail("system", "missing required field");
  } else if (const auto& s = root["system"];
             r.object(s, "system", {"n_levels", "detuning", "detunings", "lossy_levels", "excited_lifetime",
                                    "ground_lifetime", "closed"})) {
    r.read(s, "system", "n_levels", cfg.system.n_levels, true);
    r.read(s, "system", "detuning", cfg.system.detuning);
    r.read(s, "system", "detunings", cfg.system.detunings);
    r.read(s, "system", "lossy_levels", cfg.system.lossy_levels);
    r.read(s, "system", "excited_lifetime", cfg.system.excited_lifetime);
    r.read(s, "system", "ground_lifetime", cfg.system.ground_lifetime);
    r.read(s, "system", "closed", cfg.system.closed);
  }

  if (!root.contains("pulses")) {
    r.fail("pulses", "missing required field");
  } else if (const auto& p = root["pulses"]; r.object(p, "pulses", {"omega0", "sigma", "delay", "gap", "steps"})) {
    r.read(p, "pulses", "omega0", cfg.pulses.omega0);
    r.read(p, "pulses", "sigma", cfg.pulses.sigma);
    r.read(p, "pulses", "delay", cfg.pulses.delay);
    r.read(p, "pulses", "gap", cfg.pulses.gap);
    if (!p.contains("steps")) {
      r.fail("pulses.steps", "missing required field");
    } else if (!p["steps"].is_array()) {
      r.fail("pulses.steps", "expected an array");
    } else {
      for (std::size_t i = 0; i < p["steps"].size(); ++i) {
        const auto& node = p["steps"][i];
        const auto path = "pulses.steps[" + std::to_string(i) + "]";
        StepConfig step;
        if (!r.object(node, path, {"type", "pump_channel", "stokes_channel", "omega0", "sigma", "delay", "alpha"}))
          continue;
        if (!node.contains("type")) r.fail(path + ".type", "missing required field");
        config_detail::read_enum(r, node, path, "type", step.type,
                                 {{"stirap", FragmentKind::Stirap}, {"fstirap", FragmentKind::Fstirap}});
        r.read(node, path, "pump_channel", step.pump_channel, true);
        r.read(node, path, "stokes_channel", step.stokes_channel, true);
        r.read(node, path, "omega0", step.omega0);
        r.read(node, path, "sigma", step.sigma);
        r.read(node, path, "delay", step.delay);
        r.read(node, path, "alpha", step.alpha);
        cfg.pulses.steps.push_back(step);
      }
    }
  }

  if (!root.contains("initial")) {
    r.fail("initial", "missing required field");
  } else if (const auto& i = root["initial"]; r.object(i, "initial", {"level", "weights"})) {
    r.read(i, "initial", "level", cfg.initial.level);
    r.read(i, "initial", "weights", cfg.initial.weights);
  }

  if (root.contains("logic")) {
    const auto& l = root["logic"];
    if (r.object(l, "logic", {"task", "mode", "direction", "data_in", "population_high", "coherence_high"})) {
      config_detail::read_enum(r, l, "logic", "task", cfg.logic.task,
                               {{"none", LogicTask::None}, {"tff", LogicTask::Tff}, {"dff", LogicTask::Dff},
                                {"siso", LogicTask::Siso}});
      config_detail::read_enum(r, l, "logic", "mode", cfg.logic.mode,
                               {{"population", RegisterMode::Population}, {"coherence", RegisterMode::Coherence}});
      config_detail::read_enum(r, l, "logic", "direction", cfg.logic.direction,
                               {{"right", ShiftDirection::Right}, {"left", ShiftDirection::Left}});
      r.read(l, "logic", "data_in", cfg.logic.data_in);
      r.read(l, "logic", "population_high", cfg.logic.population_high);
      r.read(l, "logic", "coherence_high", cfg.logic.coherence_high);
    }
  }

  if (root.contains("numeric")) {
    const auto& nm = root["numeric"];
    if (r.object(nm, "numeric", {"steps", "dt", "samples"})) {
      r.read(nm, "numeric", "steps", cfg.numeric.steps);
      r.read(nm, "numeric", "dt", cfg.numeric.dt);
      r.read(nm, "numeric", "samples", cfg.numeric.samples);
    }
  }

  if (root.contains("outputs")) {
    const auto& o = root["outputs"];
    if (r.object(o, "outputs", {"trajectory", "record", "pairs"})) {
      r.read(o, "outputs", "trajectory", cfg.outputs.trajectory);
      r.read(o, "outputs", "record", cfg.outputs.record);
      r.read(o, "outputs", "pairs", cfg.outputs.pairs);
    }
  }

  if (!r.errors.empty()) throw ConfigError(r.errors);
  auto semantic = validate_config(cfg);
  if (!semantic.empty()) {
    for (auto& e : semantic) {
      const auto colon = e.find(':');
      const auto path = e.substr(0, colon);
      const auto dot = path.find_last_of('.');
      auto key = dot == std::string::npos ? path : path.substr(dot + 1);
      key = key.substr(0, key.find('['));
      if (auto line = config_detail::line_of_key(text, key))
        e = path + " (line " + std::to_string(*line) + ")" + e.substr(colon);
    }
    throw ConfigError(semantic);
  }
  return cfg;
}

inline ScenarioConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError({path.string() + ": cannot open config"});
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

// ---------------------------------------------------------------------------
// Building the physical objects from a config

inline LevelChain make_chain(const ScenarioConfig& cfg) {
  LevelChain chain = LevelChain::uniform(cfg.system.n_levels, cfg.system.detuning);
  if (cfg.system.detunings) chain.detunings = *cfg.system.detunings;
  if (cfg.system.lossy_levels) chain.lossy_levels = {cfg.system.lossy_levels->begin(), cfg.system.lossy_levels->end()};
  require_valid(chain);
  return chain;
}

inline DecayModel make_decay(const ScenarioConfig& cfg, const LevelChain& chain) {
  if (cfg.system.closed) return DecayModel::closed(chain.n_levels);
  return make_decay_model(cfg.system.excited_lifetime, cfg.system.ground_lifetime, chain);
}

inline std::vector<PulseFragment> make_fragments(const ScenarioConfig& cfg) {
  std::vector<PulseFragment> fragments;
  for (const auto& s : cfg.pulses.steps) {
    const double sigma = s.sigma.value_or(cfg.pulses.sigma);
    const double omega0 = s.omega0.value_or(cfg.pulses.omega0);
    const double delay = s.delay.value_or(cfg.pulses.delay) * sigma;
    if (s.type == FragmentKind::Stirap) {
      fragments.push_back(build_stirap_pair(s.pump_channel, s.stokes_channel, 0.0, delay, sigma, omega0));
    } else {
      fragments.push_back(build_fstirap(s.pump_channel, s.stokes_channel, 0.0, delay, sigma, omega0,
                                        s.alpha.value_or(std::numbers::pi / 4)));
    }
  }
  return fragments;
}

inline PulseProgram make_program(const ScenarioConfig& cfg) {
  return compose_program(make_fragments(cfg), cfg.pulses.gap * cfg.pulses.sigma);
}

inline StateVector make_initial_state(const ScenarioConfig& cfg) {
  const auto n = cfg.system.n_levels;
  if (cfg.initial.level) return basis_state(n, *cfg.initial.level);
  StateVector c(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) c(static_cast<Eigen::Index>(i)) = (*cfg.initial.weights)[i];
  return c / c.norm();
}

inline double make_dt(const ScenarioConfig& cfg, const PulseProgram& program) {
  if (cfg.numeric.dt) return *cfg.numeric.dt;
  return (program.t_end - program.t_start) / static_cast<double>(cfg.numeric.steps);
}

inline SimContext make_context(const ScenarioConfig& cfg) {
  SimContext ctx;
  ctx.omega0 = cfg.pulses.omega0;
  ctx.sigma = cfg.pulses.sigma;
  ctx.delay = cfg.pulses.delay;
  ctx.gap = cfg.pulses.gap;
  ctx.detuning = cfg.system.detuning;
  ctx.excited_lifetime = cfg.system.excited_lifetime;
  ctx.ground_lifetime = cfg.system.ground_lifetime;
  ctx.closed = cfg.system.closed;
  ctx.steps = cfg.numeric.steps;
  ctx.encoding = {cfg.logic.population_high, cfg.logic.coherence_high};
  for (const auto& s : cfg.pulses.steps)
    if (s.type == FragmentKind::Fstirap && s.alpha) {
      ctx.fstirap_alpha = *s.alpha;
      break;
    }
  return ctx;
}

/// Default coherence pairs to export: every pair of even (ground) levels.
inline std::vector<std::pair<std::size_t, std::size_t>> ground_pairs(std::size_t n_levels) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t j = 0; j < n_levels; j += 2)
    for (std::size_t k = j + 2; k < n_levels; k += 2) pairs.emplace_back(j, k);
  return pairs;
}

// ---------------------------------------------------------------------------
// Export

/// Evenly spaced indices 0 .. size-1 (both ends included), at most `samples` of them.
inline std::vector<std::size_t> decimate(std::size_t size, std::size_t samples) {
  std::vector<std::size_t> idx;
  if (size == 0) return idx;
  if (size <= samples || samples < 2) {
    idx.resize(size);
    for (std::size_t i = 0; i < size; ++i) idx[i] = i;
    return idx;
  }
  for (std::size_t k = 0; k < samples; ++k) idx.push_back(k * (size - 1) / (samples - 1));
  return idx;
}

inline std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string trajectory_header(std::size_t n_levels, const std::vector<std::pair<std::size_t, std::size_t>>& pairs) {
  std::string h = "t";
  for (std::size_t j = 0; j < n_levels; ++j) h += ",rho_" + std::to_string(j) + std::to_string(j);
  for (const auto& [j, k] : pairs) {
    const auto tag = std::to_string(j) + std::to_string(k);
    h += ",re_rho_" + tag + ",im_rho_" + tag;
  }
  for (std::size_t c = 0; c + 1 < n_levels; ++c) h += ",omega_ch" + std::to_string(c);
  return h;
}

/// Writes t, populations, Re/Im of each recorded coherence and every channel's
/// Rabi frequency, one row per (decimated) sample, 17 significant digits.
inline void export_trajectory(const Trajectory& traj, const ObservableSeries& series, const std::filesystem::path& path,
                              std::size_t samples = 2000) {
  const auto n_levels = static_cast<std::size_t>(series.populations.cols());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(path.string() + ": cannot open for writing");
  out << trajectory_header(n_levels, series.pairs) << '\n';
  for (std::size_t i : decimate(series.size(), samples)) {
    const auto row = static_cast<Eigen::Index>(i);
    const double t = series.times[i];
    out << format_number(t);
    for (Eigen::Index j = 0; j < series.populations.cols(); ++j) out << ',' << format_number(series.populations(row, j));
    for (Eigen::Index p = 0; p < series.coherence_re.cols(); ++p)
      out << ',' << format_number(series.coherence_re(row, p)) << ',' << format_number(series.coherence_im(row, p));
    for (std::size_t c = 0; c + 1 < n_levels; ++c) out << ',' << format_number(traj.program.rabi(c, t));
    out << '\n';
  }
  if (!out) throw std::runtime_error(path.string() + ": write failed");
}

// ---------------------------------------------------------------------------
// Running

struct StepReport {
  std::string label;
  double marker_time = 0.0;
  AdiabaticityReport adiabaticity;
  std::vector<double> populations;                  // at the marker
  std::optional<CoherencePrediction> predicted;     // forward cascades on N <= 7 only
  std::vector<std::pair<std::pair<std::size_t, std::size_t>, double>> measured_coherence;  // |rho_jk| at the marker
};

struct RunDiagnostics {
  double final_norm = 0.0;
  double max_norm_deviation = 0.0;  // max | ||c||^2 - 1 | over the trajectory
  double error_estimate = 0.0;      // Richardson estimate of the end-state error
  std::optional<double> min_dark_overlap;
  std::size_t steps = 0;
  double dt = 0.0;
};

struct RunRecord {
  ScenarioConfig config;
  std::vector<StepReport> steps;
  std::vector<double> final_populations;
  RunDiagnostics diagnostics;
  std::optional<std::string> trajectory_path;
  std::optional<ConformanceReport> conformance;
  std::optional<SisoResult> siso;
  Trajectory trajectory;
  ObservableSeries series;
};

struct RunOptions {
  bool write_outputs = true;
  std::filesystem::path output_dir = ".";
  bool estimate_error = true;
};

inline json to_json(const ConformanceReport& report) {
  json rows = json::array();
  for (const auto& row : report.rows) {
    json r;
    r["table"] = row.table;
    r["input"] = row.input;
    r["present"] = row.present;
    r["expected_next"] = row.expected_next;
    r["expected_q_bar"] = row.expected_q_bar;
    r["expected_remark"] = to_string(row.expected_remark);
    r["next"] = row.measured.next ? json(*row.measured.next) : json(nullptr);
    r["q_bar"] = row.measured.q_bar ? json(*row.measured.q_bar) : json(nullptr);
    r["remark"] = to_string(row.measured.remark);
    r["rho00"] = row.measured.readout.rho00;
    r["rho11"] = row.measured.readout.rho11;
    r["rho22"] = row.measured.readout.rho22;
    r["re_rho02"] = row.measured.readout.re_rho02;
    r["im_rho02"] = row.measured.readout.im_rho02;
    r["norm"] = row.measured.readout.norm;
    r["pass"] = row.pass;
    rows.push_back(r);
  }
  json j;
  j["passed"] = report.passed();
  j["total"] = report.rows.size();
  j["rows"] = rows;
  return j;
}

inline json to_json(const SisoResult& result) {
  json clocks = json::array();
  for (const auto& c : result.clocks) {
    json cl;
    cl["label"] = c.label;
    cl["time"] = c.time;
    cl["word"] = c.word.to_string();
    cl["bit_labels"] = c.word.labels;
    cl["populations"] = std::vector<double>(c.populations.data(), c.populations.data() + c.populations.size());
    clocks.push_back(cl);
  }
  return json{{"clocks", clocks}};
}

inline json to_json(const RunRecord& rec) {
  json j;
  j["config"] = to_json(rec.config);
  json steps = json::array();
  for (const auto& s : rec.steps) {
    json st;
    st["label"] = s.label;
    st["marker_time"] = s.marker_time;
    st["adiabaticity"] = {{"delta", s.adiabaticity.delta},
                          {"omega_rms", s.adiabaticity.omega_rms},
                          {"sigma", s.adiabaticity.sigma},
                          {"metric", s.adiabaticity.metric}};
    st["populations"] = s.populations;
    if (s.predicted) {
      const auto& p = *s.predicted;
      st["predicted_coherence"] = {{"rho02", p.rho02}, {"rho04", p.rho04}, {"rho06", p.rho06},
                                   {"rho24", p.rho24}, {"rho46", p.rho46}, {"rho26", p.rho26}};
    }
    json measured = json::object();
    for (const auto& [pair, value] : s.measured_coherence)
      measured["rho" + std::to_string(pair.first) + std::to_string(pair.second)] = value;
    st["measured_coherence"] = measured;
    steps.push_back(st);
  }
  j["steps"] = steps;
  j["final_populations"] = rec.final_populations;
  j["diagnostics"] = {{"final_norm", rec.diagnostics.final_norm},
                      {"max_norm_deviation", rec.diagnostics.max_norm_deviation},
                      {"error_estimate", rec.diagnostics.error_estimate},
                      {"min_dark_overlap", rec.diagnostics.min_dark_overlap ? json(*rec.diagnostics.min_dark_overlap)
                                                                            : json(nullptr)},
                      {"steps", rec.diagnostics.steps},
                      {"dt", rec.diagnostics.dt}};
  j["trajectory_path"] = rec.trajectory_path ? json(*rec.trajectory_path) : json(nullptr);
  if (rec.conformance) j["conformance"] = to_json(*rec.conformance);
  if (rec.siso) j["siso"] = to_json(*rec.siso);
  return j;
}

inline RunRecord run_scenario(const ScenarioConfig& cfg, const RunOptions& options = {}) {
  if (auto errors = validate_config(cfg); !errors.empty()) throw ConfigError(errors);
  const auto chain = make_chain(cfg);
  const auto decay = make_decay(cfg, chain);
  const auto fragments = make_fragments(cfg);
  const auto program = compose_program(fragments, cfg.pulses.gap * cfg.pulses.sigma);
  const auto initial = make_initial_state(cfg);
  const double dt = make_dt(cfg, program);
  const auto n = chain.n_levels;

  RunRecord rec;
  rec.config = cfg;
  rec.trajectory = propagate(initial, chain, program, decay, dt);
  auto pairs = cfg.outputs.pairs.empty() ? ground_pairs(n) : cfg.outputs.pairs;
  rec.series = observables(rec.trajectory, pairs);

  const bool forward = is_forward_cascade(program, n) && initial.isApprox(basis_state(n, 0));
  for (std::size_t k = 0; k < fragments.size(); ++k) {
    StepReport s;
    s.label = program.step_markers[k].label;
    s.marker_time = program.step_markers[k].time;
    const std::size_t excited = std::min(fragments[k].info.pump_channel, fragments[k].info.stokes_channel) + 1;
    s.adiabaticity = fragment_adiabaticity(fragments[k], chain.detunings[excited]);
    const auto idx = static_cast<Eigen::Index>(rec.series.index_at(s.marker_time));
    for (std::size_t j = 0; j < n; ++j) s.populations.push_back(rec.series.populations(idx, static_cast<Eigen::Index>(j)));
    for (std::size_t p = 0; p < pairs.size(); ++p)
      s.measured_coherence.push_back(
          {pairs[p], std::hypot(rec.series.coherence_re(idx, static_cast<Eigen::Index>(p)),
                                rec.series.coherence_im(idx, static_cast<Eigen::Index>(p)))});
    if (forward) s.predicted = predicted_coherences(mixing_angles(program, s.marker_time, (n - 1) / 2));
    rec.steps.push_back(std::move(s));
  }

  const auto& final_state = rec.trajectory.final_state();
  for (std::size_t j = 0; j < n; ++j) rec.final_populations.push_back(std::norm(final_state(static_cast<Eigen::Index>(j))));
  rec.diagnostics.final_norm = final_state.squaredNorm();
  for (const auto& c : rec.trajectory.states)
    rec.diagnostics.max_norm_deviation = std::max(rec.diagnostics.max_norm_deviation, std::abs(c.squaredNorm() - 1.0));
  rec.diagnostics.steps = rec.trajectory.size() - 1;
  rec.diagnostics.dt = (program.t_end - program.t_start) / static_cast<double>(rec.diagnostics.steps);
  if (options.estimate_error) {
    const auto coarse = propagate(initial, chain, program, decay, 2.0 * rec.diagnostics.dt);
    rec.diagnostics.error_estimate = (coarse.final_state() - final_state).cwiseAbs().maxCoeff() / 15.0;
  }
  if (forward) {
    const auto overlap = dark_state_overlap(rec.trajectory);
    rec.diagnostics.min_dark_overlap = *std::min_element(overlap.begin(), overlap.end());
  }

  const auto ctx = make_context(cfg);
  switch (cfg.logic.task) {
    case LogicTask::None: break;
    case LogicTask::Tff: rec.conformance = verify_tff_table(ctx); break;
    case LogicTask::Dff: rec.conformance = verify_dff_table(ctx); break;
    case LogicTask::Siso:
      rec.siso = siso_shift(make_level_word(cfg.logic.data_in, n), n, cfg.logic.direction, cfg.logic.mode, ctx);
      break;
  }

  if (options.write_outputs) {
    if (cfg.outputs.trajectory) {
      const auto path = options.output_dir / *cfg.outputs.trajectory;
      export_trajectory(rec.trajectory, rec.series, path, cfg.numeric.samples);
      rec.trajectory_path = path.string();
    }
    if (cfg.outputs.record) {
      const auto path = options.output_dir / *cfg.outputs.record;
      std::ofstream out(path, std::ios::binary);
      if (!out) throw std::runtime_error(path.string() + ": cannot open for writing");
      out << to_json(rec).dump(2) << '\n';
    }
  }
  return rec;
}

// ---------------------------------------------------------------------------
// Sweeps

/// Returns a copy of `cfg` with the scalar at a dotted path (e.g.
/// "pulses.delay" or "pulses.steps.0.alpha") replaced by `value`.
inline ScenarioConfig with_parameter(const ScenarioConfig& cfg, const std::string& path, double value) {
  json j = to_json(cfg);
  json* node = &j;
  std::string token;
  std::stringstream ss(path);
  std::vector<std::string> tokens;
  while (std::getline(ss, token, '.')) tokens.push_back(token);
  if (tokens.empty()) throw ConfigError({"sweep: empty parameter path"});
  for (std::size_t i = 0; i + 1 < tokens.size(); ++i) {
    const auto& t = tokens[i];
    if (node->is_array()) {
      std::size_t idx = 0;
      try {
        idx = std::stoul(t);
      } catch (...) {
        throw ConfigError({"sweep: '" + path + "' expects an index at '" + t + "'"});
      }
      if (idx >= node->size()) throw ConfigError({"sweep: index " + t + " out of range in '" + path + "'"});
      node = &(*node)[idx];
    } else if (node->is_object() && node->contains(t)) {
      node = &(*node)[t];
    } else {
      throw ConfigError({"sweep: '" + path + "' does not address a config field"});
    }
  }
  const auto& leaf = tokens.back();
  if (!node->is_object()) throw ConfigError({"sweep: '" + path + "' does not address a scalar field"});
  if (node->contains(leaf) && !(*node)[leaf].is_number())
    throw ConfigError({"sweep: '" + path + "' is not a numeric field"});
  const auto& current = node->contains(leaf) ? (*node)[leaf] : json();
  if (current.is_number_integer() || current.is_number_unsigned()) {
    if (value != std::floor(value) || value < 0) throw ConfigError({"sweep: '" + path + "' takes nonnegative integers"});
    (*node)[leaf] = static_cast<std::size_t>(value);
  } else {
    (*node)[leaf] = value;
  }
  try {
    return parse_config(j.dump());
  } catch (const ConfigError& e) {
    auto errors = e.errors();
    errors.insert(errors.begin(), "sweep: setting '" + path + "' = " + format_number(value) + " is invalid");
    throw ConfigError(errors);
  }
}

struct SweepRow {
  double value = 0.0;
  double efficiency = 0.0;  // final population of the last step's target level
  std::optional<double> min_dark_overlap;
  double adiabaticity_metric = 0.0;  // smallest over steps
};

inline SweepRow summarize(double value, const RunRecord& rec) {
  SweepRow row;
  row.value = value;
  const auto target = make_fragments(rec.config).back().info.target_level();
  row.efficiency = rec.final_populations[target];
  row.min_dark_overlap = rec.diagnostics.min_dark_overlap;
  row.adiabaticity_metric = std::numeric_limits<double>::infinity();
  for (const auto& s : rec.steps) row.adiabaticity_metric = std::min(row.adiabaticity_metric, s.adiabaticity.metric);
  return row;
}

/// One run per value, fanned out over worker threads. Rows come back in
/// the order of `values`; outputs of the individual runs are not written.
inline std::vector<SweepRow> sweep(const ScenarioConfig& cfg, const std::string& path, const std::vector<double>& values,
                                   unsigned threads = 0) {
  std::vector<ScenarioConfig> configs;
  for (double v : values) configs.push_back(with_parameter(cfg, path, v));
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());

  std::vector<SweepRow> rows(values.size());
  RunOptions options;
  options.write_outputs = false;
  options.estimate_error = false;
  for (std::size_t start = 0; start < configs.size(); start += threads) {
    std::vector<std::future<SweepRow>> batch;
    for (std::size_t i = start; i < std::min(configs.size(), start + threads); ++i)
      batch.push_back(std::async(std::launch::async, [&, i] { return summarize(values[i], run_scenario(configs[i], options)); }));
    for (std::size_t i = 0; i < batch.size(); ++i) rows[start + i] = batch[i].get();
  }
  return rows;
}

inline std::string sweep_table_csv(const std::string& parameter, const std::vector<SweepRow>& rows) {
  std::string out = parameter + ",efficiency,min_dark_overlap,adiabaticity_metric\n";
  for (const auto& r : rows) {
    out += format_number(r.value) + "," + format_number(r.efficiency) + "," +
           (r.min_dark_overlap ? format_number(*r.min_dark_overlap) : std::string("nan")) + "," +
           format_number(r.adiabaticity_metric) + "\n";
  }
  return out;
}

}  // namespace stirap

#endif  // STIRAP_SCENARIO_HPP
