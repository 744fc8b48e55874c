#ifndef STIRAP_LOGIC_HPP
#define STIRAP_LOGIC_HPP

// Sequential logic on top of the propagator: toggle and delay flip-flops on
// a Lambda system, and serial-in serial-out shift registers on longer chains,
// encoded either in populations or in ground-state coherences.
//
// Every result here comes from a simulation run; no table lookups.

#include "stirap/analysis.hpp"
#include "stirap/chain.hpp"
#include "stirap/propagator.hpp"
#include "stirap/pulses.hpp"

#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

namespace stirap {

struct LogicEncoding {
  double population_high = 0.9;  // rho_jj >= this reads as 1
  double coherence_high = 0.4;   // |Re rho_jk| >= this reads as 1
};

inline void require_valid(const LogicEncoding& enc) {
  if (!(enc.population_high > 0.5 && enc.population_high < 1.0))
    throw ValidationError("population_high must lie in (0.5, 1)");
  if (!(enc.coherence_high > 0.0 && enc.coherence_high <= 0.5))
    throw ValidationError("coherence_high must lie in (0, 0.5]");
}

/// Physical parameters shared by every simulated logic operation.
struct SimContext {
  double omega0 = kPeakRabi;
  double sigma = 1.0;
  double delay = kDefaultDelay;
  double gap = kDefaultGap;
  double detuning = 0.0;
  double excited_lifetime = kExcitedLifetime;
  double ground_lifetime = kGroundLifetime;
  bool closed = false;  // ignore decay entirely
  double fstirap_alpha = std::numbers::pi / 4;
  std::size_t steps = kDefaultSteps;
  LogicEncoding encoding;

  LevelChain chain(std::size_t n_levels) const { return LevelChain::uniform(n_levels, detuning); }

  DecayModel decay(const LevelChain& chain) const {
    if (closed) return DecayModel::closed(chain.n_levels);
    return make_decay_model(excited_lifetime, ground_lifetime, chain);
  }

  double dt(const PulseProgram& program) const {
    return (program.t_end - program.t_start) / static_cast<double>(steps);
  }

  /// Counterintuitive pair moving population from `from` to the even level `to`
  /// two sites away, in either direction.
  PulseFragment transfer(std::size_t from, std::size_t to, double t_center = 0.0) const {
    const auto [pump, stokes] = transfer_channels(from, to);
    return build_stirap_pair(pump, stokes, t_center, delay * sigma, sigma, omega0);
  }

  PulseFragment split(std::size_t from, std::size_t to, double t_center = 0.0) const {
    const auto [pump, stokes] = transfer_channels(from, to);
    return build_fstirap(pump, stokes, t_center, delay * sigma, sigma, omega0, fstirap_alpha);
  }

  static std::pair<std::size_t, std::size_t> transfer_channels(std::size_t from, std::size_t to) {
    if (to == from + 2) return {from, from + 1};
    if (from == to + 2) return {from - 1, to};
    throw ValidationError("transfers move population exactly two levels");
  }
};

inline int read_population_bit(const ObservableSeries& series, std::size_t level, double t,
                               const LogicEncoding& enc) {
  return series.population(level, t) >= enc.population_high ? 1 : 0;
}

inline int read_coherence_bit(const ObservableSeries& series, std::pair<std::size_t, std::size_t> pair, double t,
                              const LogicEncoding& enc) {
  return std::abs(series.coherence(pair.first, pair.second, t).real()) >= enc.coherence_high ? 1 : 0;
}

enum class Remark { Hold, Toggle, Set, Reset, Undefined };

inline const char* to_string(Remark r) {
  switch (r) {
    case Remark::Hold: return "Hold";
    case Remark::Toggle: return "Toggle";
    case Remark::Set: return "Set";
    case Remark::Reset: return "Reset";
    case Remark::Undefined: return "Undefined";
  }
  return "?";
}

/// Observables of the Lambda system at the end of one flip-flop clock.
struct FlipFlopReadout {
  double rho00 = 0.0;
  double rho11 = 0.0;
  double rho22 = 0.0;
  double re_rho02 = 0.0;
  double im_rho02 = 0.0;
  double norm = 0.0;
};

struct FlipFlopResult {
  int present = 0;
  std::optional<int> next;   // empty when the readout is ambiguous
  std::optional<int> q_bar;
  Remark remark = Remark::Undefined;
  FlipFlopReadout readout;
};

namespace detail {

inline FlipFlopReadout readout_of(const StateVector& c) {
  const cplx rho02 = c(0) * std::conj(c(2));
  return {std::norm(c(0)), std::norm(c(1)), std::norm(c(2)), rho02.real(), rho02.imag(), c.squaredNorm()};
}

/// 0 for population localized in |0>, 1 for |2>, empty otherwise.
inline std::optional<int> population_state(const StateVector& c, const LogicEncoding& enc) {
  const bool zero = std::norm(c(0)) >= enc.population_high;
  const bool two = std::norm(c(2)) >= enc.population_high;
  if (zero == two) return std::nullopt;
  return two ? 1 : 0;
}

inline StateVector run_lambda(const StateVector& initial, const PulseProgram& program, const SimContext& ctx) {
  const auto chain = ctx.chain(3);
  return propagate(initial, chain, program, ctx.decay(chain), ctx.dt(program)).final_state();
}

inline void require_bit(int bit, const char* what) {
  if (bit != 0 && bit != 1) throw ValidationError(std::string(what) + " must be 0 or 1");
}

}  // namespace detail

/// Toggle flip-flop driven from an arbitrary Lambda-system state. Each entry
/// of `pulses` is one clock (1 = STIRAP PULSE applied, 0 = idle for the
/// same duration). The pulse ordering follows the current stored bit: forward
/// |0> -> |2> when Q = 0, reverse |2> -> |0> when Q = 1.
inline std::vector<FlipFlopResult> tff_run(int present, const std::vector<int>& pulses, const SimContext& ctx) {
  detail::require_bit(present, "present bit");
  require_valid(ctx.encoding);
  StateVector state = basis_state(3, present == 1 ? 2 : 0);
  std::vector<FlipFlopResult> out;
  int q = present;
  for (int pulse : pulses) {
    detail::require_bit(pulse, "T input");
    const auto stored = detail::population_state(state, ctx.encoding);
    if (!stored) throw ValidationError("flip-flop state is not a localized population; cannot clock it");
    q = *stored;
    const auto fragment = q == 0 ? ctx.transfer(0, 2) : ctx.transfer(2, 0);
    auto program = compose_program({fragment}, ctx.gap * ctx.sigma);
    if (pulse == 0) program = idle_program(program.t_start, program.t_end);
    state = detail::run_lambda(state, program, ctx);

    FlipFlopResult r;
    r.present = q;
    r.next = detail::population_state(state, ctx.encoding);
    if (r.next) {
      r.q_bar = 1 - *r.next;
      r.remark = *r.next == q ? Remark::Hold : Remark::Toggle;
    }
    r.readout = detail::readout_of(state);
    out.push_back(r);
  }
  return out;
}

inline FlipFlopResult tff_step(int present, int pulse_on, const SimContext& ctx) {
  return tff_run(present, {pulse_on}, ctx).front();
}

/// Delay flip-flop: D = 0 applies STIRAP, D = 1 fractional STIRAP, ordered
/// for the stored population (|0> for Q = 0, |2> for Q = 1). Q(t+1) is the
/// |0>-|2> coherence bit; Q-bar is 1 when the population ends localized.
inline FlipFlopResult dff_step(int d, int present, const SimContext& ctx) {
  detail::require_bit(d, "D input");
  detail::require_bit(present, "present bit");
  require_valid(ctx.encoding);
  const std::size_t from = present == 1 ? 2 : 0;
  const std::size_t to = 2 - from;
  const auto fragment = d == 0 ? ctx.transfer(from, to) : ctx.split(from, to);
  const auto program = compose_program({fragment}, ctx.gap * ctx.sigma);
  const auto chain = ctx.chain(3);
  const auto traj = propagate(basis_state(3, from), chain, program, ctx.decay(chain), ctx.dt(program));
  const auto series = observables(traj, {{0, 2}});

  FlipFlopResult r;
  r.present = present;
  r.next = read_coherence_bit(series, {0, 2}, program.t_end, ctx.encoding);
  const bool localized = read_population_bit(series, 0, program.t_end, ctx.encoding) == 1 ||
                         read_population_bit(series, 2, program.t_end, ctx.encoding) == 1;
  r.q_bar = localized ? 1 : 0;
  r.remark = *r.next == 1 ? Remark::Set : Remark::Reset;
  r.readout = detail::readout_of(traj.final_state());
  return r;
}

struct ConformanceRow {
  std::string table;  // "TFF" or "DFF"
  int input = 0;      // T or D
  int present = 0;
  int expected_next = 0;
  int expected_q_bar = 0;
  Remark expected_remark = Remark::Undefined;
  FlipFlopResult measured;
  bool pass = false;
};

struct ConformanceReport {
  std::vector<ConformanceRow> rows;

  std::size_t passed() const {
    std::size_t n = 0;
    for (const auto& r : rows) n += r.pass ? 1 : 0;
    return n;
  }
  bool all_pass() const { return passed() == rows.size(); }
};

inline bool row_matches(const ConformanceRow& row) {
  const auto& m = row.measured;
  return m.next && *m.next == row.expected_next && m.q_bar && *m.q_bar == row.expected_q_bar &&
         m.remark == row.expected_remark;
}

inline ConformanceReport verify_tff_table(const SimContext& ctx) {
  ConformanceReport report;
  for (int t : {0, 1})
    for (int q : {0, 1}) {
      ConformanceRow row{"TFF", t, q, t ^ q, 1 - (t ^ q), t == 0 ? Remark::Hold : Remark::Toggle, {}, false};
      row.measured = tff_step(q, t, ctx);
      row.pass = row_matches(row);
      report.rows.push_back(row);
    }
  return report;
}

inline ConformanceReport verify_dff_table(const SimContext& ctx) {
  ConformanceReport report;
  for (int d : {0, 1})
    for (int q : {0, 1}) {
      ConformanceRow row{"DFF", d, q, d, 1 - d, d == 1 ? Remark::Set : Remark::Reset, {}, false};
      row.measured = dff_step(d, q, ctx);
      row.pass = row_matches(row);
      report.rows.push_back(row);
    }
  return report;
}

/// All rows of both characteristic tables, TFF first.
inline ConformanceReport verify_truth_tables(const SimContext& ctx) {
  auto report = verify_tff_table(ctx);
  auto dff = verify_dff_table(ctx);
  report.rows.insert(report.rows.end(), dff.rows.begin(), dff.rows.end());
  return report;
}

// ---------------------------------------------------------------------------
// Shift registers

struct DataWord {
  std::vector<int> bits;
  std::vector<std::string> labels;  // one per bit, e.g. "0","2","4" or "P00","P02"

  std::string to_string() const {
    std::string s;
    for (int b : bits) s += b ? '1' : '0';
    return s;
  }
  std::size_t ones() const {
    std::size_t n = 0;
    for (int b : bits) n += b ? 1 : 0;
    return n;
  }
  bool operator==(const DataWord& other) const { return bits == other.bits; }
};

/// Word over the even (ground) levels |0>,|2>,... of an N-level chain,
/// e.g. "100" for population in |0> of a 5-level system.
inline DataWord make_level_word(const std::string& bits, std::size_t n_levels) {
  if (bits.size() != (n_levels + 1) / 2)
    throw ValidationError("data word '" + bits + "' needs " + std::to_string((n_levels + 1) / 2) + " bits");
  DataWord w;
  for (std::size_t i = 0; i < bits.size(); ++i) {
    if (bits[i] != '0' && bits[i] != '1') throw ValidationError("data word must contain only 0 and 1");
    w.bits.push_back(bits[i] == '1' ? 1 : 0);
    w.labels.push_back(std::to_string(2 * i));
  }
  return w;
}

enum class ShiftDirection { Right, Left };
enum class RegisterMode { Population, Coherence };

struct ShiftClock {
  std::string label;        // "in" for the initial word, then the step label
  double time = 0.0;
  DataWord word;
  Eigen::VectorXd populations;
};

struct SisoResult {
  std::vector<DataWord> words;  // initial word followed by one word per clock
  std::vector<ShiftClock> clocks;
  PulseProgram program;
  Trajectory trajectory;
};

namespace detail {

inline std::vector<std::size_t> ones_of(const DataWord& w) {
  std::vector<std::size_t> levels;
  for (std::size_t i = 0; i < w.bits.size(); ++i)
    if (w.bits[i]) levels.push_back(2 * i);
  return levels;
}

inline std::size_t toward(std::size_t level, ShiftDirection dir) { return dir == ShiftDirection::Right ? level + 2 : level - 2; }

inline std::string pair_label(std::size_t j, std::size_t k) {
  return "rho" + std::to_string(j) + std::to_string(k);
}

}  // namespace detail

/// Serial-in serial-out shift register on an odd N-level chain.
///
/// Population mode: data_in has exactly one 1; each clock is a STIRAP pair
/// moving the population one ground level in `direction` until it reaches the
/// end of the chain. Words are read over |0>,|2>,... at every step marker.
///
/// Coherence mode with a single 1 at level s: the first clock is a
/// fractional STIRAP splitting s into s and its neighbour, later clocks drag
/// that half onward with STIRAP. Words are P_ss followed by the coherence
/// bits of (s, s+-2), (s, s+-4), ... ("P00 P02 P04 P06" from |0>).
///
/// Coherence mode with two 1s at levels a < b: the register starts in
/// (|a> + |b>)/sqrt(2), and each clock moves one member of the pair by one
/// ground level (the leading member first) until the pair sits at the chain
/// end. Words mark the two levels sharing the surviving coherence.
inline SisoResult siso_shift(const DataWord& data_in, std::size_t n_levels, ShiftDirection direction,
                             RegisterMode mode, const SimContext& ctx) {
  const auto chain = ctx.chain(n_levels);
  require_valid(chain);
  require_valid(ctx.encoding);
  if (data_in.bits.size() != (n_levels + 1) / 2)
    throw ValidationError("data word length does not match the chain's ground levels");
  const auto ones = detail::ones_of(data_in);
  const std::size_t last = n_levels - 1;
  const bool right = direction == ShiftDirection::Right;
  auto at_end = [&](std::size_t level) { return right ? level == last : level == 0; };

  StateVector initial = StateVector::Zero(static_cast<Eigen::Index>(n_levels));
  std::vector<PulseFragment> fragments;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  std::vector<std::string> labels;
  bool pair_word = false;
  std::size_t source = 0;

  if (mode == RegisterMode::Population) {
    if (ones.size() != 1) throw ValidationError("population register input must contain exactly one 1");
    source = ones.front();
    initial(static_cast<Eigen::Index>(source)) = 1.0;
    for (std::size_t level = source; !at_end(level); level = detail::toward(level, direction))
      fragments.push_back(ctx.transfer(level, detail::toward(level, direction)));
  } else if (ones.size() == 1) {
    source = ones.front();
    if (at_end(source)) throw ValidationError("coherence register input sits at the end it would shift towards");
    initial(static_cast<Eigen::Index>(source)) = 1.0;
    std::size_t level = source;
    fragments.push_back(ctx.split(level, detail::toward(level, direction)));
    labels.push_back("P" + std::to_string(source) + std::to_string(source));
    for (level = detail::toward(level, direction);; level = detail::toward(level, direction)) {
      pairs.emplace_back(std::min(source, level), std::max(source, level));
      labels.push_back("P" + std::to_string(source) + std::to_string(level));
      if (at_end(level)) break;
      fragments.push_back(ctx.transfer(level, detail::toward(level, direction)));
    }
  } else if (ones.size() == 2) {
    pair_word = true;
    std::size_t lead = right ? ones[1] : ones[0];
    std::size_t trail = right ? ones[0] : ones[1];
    initial(static_cast<Eigen::Index>(ones[0])) = 1.0 / std::sqrt(2.0);
    initial(static_cast<Eigen::Index>(ones[1])) = 1.0 / std::sqrt(2.0);
    for (; !at_end(lead); lead = detail::toward(lead, direction))
      fragments.push_back(ctx.transfer(lead, detail::toward(lead, direction)));
    const std::size_t stop = right ? last - 2 : 2;
    for (; trail != stop; trail = detail::toward(trail, direction))
      fragments.push_back(ctx.transfer(trail, detail::toward(trail, direction)));
    for (std::size_t j = 0; j < n_levels; j += 2)
      for (std::size_t k = j + 2; k < n_levels; k += 2) pairs.emplace_back(j, k);
  } else {
    throw ValidationError("coherence register input must contain one or two 1s");
  }

  SisoResult result;
  if (fragments.empty()) {
    result.words.push_back(data_in);
    result.clocks.push_back({"in", 0.0, data_in, initial.cwiseAbs2().real()});
    return result;
  }

  result.program = compose_program(fragments, ctx.gap * ctx.sigma);
  result.trajectory = propagate(initial, chain, result.program, ctx.decay(chain), ctx.dt(result.program));
  const auto series = observables(result.trajectory, pairs);
  const auto& enc = ctx.encoding;

  auto read_word = [&](double t) {
    DataWord w;
    if (mode == RegisterMode::Population) {
      for (std::size_t level = 0; level < n_levels; level += 2) {
        w.bits.push_back(read_population_bit(series, level, t, enc));
        w.labels.push_back(std::to_string(level));
      }
    } else if (!pair_word) {
      w.labels = labels;
      w.bits.push_back(read_population_bit(series, source, t, enc));
      for (const auto& p : pairs) w.bits.push_back(read_coherence_bit(series, p, t, enc));
    } else {
      w.bits.assign((n_levels + 1) / 2, 0);
      for (std::size_t level = 0; level < n_levels; level += 2) w.labels.push_back(std::to_string(level));
      for (const auto& p : pairs)
        if (read_coherence_bit(series, p, t, enc)) {
          w.bits[p.first / 2] = 1;
          w.bits[p.second / 2] = 1;
        }
    }
    return w;
  };

  auto record = [&](const std::string& label, double t) {
    const auto w = read_word(t);
    result.words.push_back(w);
    result.clocks.push_back({label, t, w, series.populations.row(static_cast<Eigen::Index>(series.index_at(t))).transpose()});
  };
  record("in", result.program.t_start);
  for (const auto& marker : result.program.step_markers) record(marker.label, marker.time);
  return result;
}

}  // namespace stirap

#endif  // STIRAP_LOGIC_HPP
