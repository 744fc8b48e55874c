#ifndef STIRAP_PULSES_HPP
#define STIRAP_PULSES_HPP

// Gaussian pulse envelopes, STIRAP / fractional-STIRAP fragments and their
// composition into multi-step pulse programs.

#include "stirap/chain.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

namespace stirap {

struct GaussianPulse {
  double center = 0.0;
  double width = 1.0;
  double peak = 0.0;
};

/// peak * exp(-(t - center)^2 / (2 width^2)), never truncated.
inline double envelope_value(const GaussianPulse& pulse, double t) {
  const double x = (t - pulse.center) / pulse.width;
  return pulse.peak * std::exp(-0.5 * x * x);
}

struct PulseChannel {
  std::size_t channel_index = 0;
  std::vector<GaussianPulse> envelopes;

  double value(double t) const {
    double sum = 0.0;
    for (const auto& e : envelopes) sum += envelope_value(e, t);
    return sum;
  }
};

enum class FragmentKind { Stirap, Fstirap };

/// Parameters a fragment was built from. Kept alongside the envelopes so the
/// analysis and reporting code can recover pump/Stokes roles after composition.
struct FragmentInfo {
  FragmentKind kind = FragmentKind::Stirap;
  std::size_t pump_channel = 0;
  std::size_t stokes_channel = 1;
  double t_center = 0.0;
  double delay = 0.0;
  double sigma = 1.0;
  double omega0 = 0.0;
  double alpha = std::numbers::pi / 2;  // final mixing angle; pi/2 for full transfer

  /// Level initially holding the population that this fragment moves.
  std::size_t source_level() const {
    return pump_channel < stokes_channel ? pump_channel : pump_channel + 1;
  }
  /// Level receiving the population on full transfer.
  std::size_t target_level() const {
    return stokes_channel > pump_channel ? stokes_channel + 1 : stokes_channel;
  }
};

struct PulseFragment {
  FragmentInfo info;
  std::vector<PulseChannel> channels;

  double first_center() const {
    double c = std::numeric_limits<double>::infinity();
    for (const auto& ch : channels)
      for (const auto& e : ch.envelopes) c = std::min(c, e.center);
    return c;
  }
  double last_center() const {
    double c = -std::numeric_limits<double>::infinity();
    for (const auto& ch : channels)
      for (const auto& e : ch.envelopes) c = std::max(c, e.center);
    return c;
  }
  double max_width() const {
    double w = 0.0;
    for (const auto& ch : channels)
      for (const auto& e : ch.envelopes) w = std::max(w, e.width);
    return w;
  }
  void shift(double offset) {
    info.t_center += offset;
    for (auto& ch : channels)
      for (auto& e : ch.envelopes) e.center += offset;
  }
};

struct StepMarker {
  std::string label;
  double time = 0.0;
};

/// "step-i", "step-ii", ... for 1-based step numbers.
inline std::string step_label(std::size_t step) {
  static const char* const numerals[] = {"i",   "ii",   "iii", "iv", "v",
                                         "vi",  "vii",  "viii", "ix", "x"};
  if (step >= 1 && step <= 10) return std::string("step-") + numerals[step - 1];
  return "step-" + std::to_string(step);
}

struct PulseProgram {
  std::vector<PulseChannel> channels;
  double t_start = 0.0;
  double t_end = 1.0;
  std::vector<StepMarker> step_markers;  // one per step, at the step's trailing boundary
  std::vector<FragmentInfo> steps;

  double rabi(std::size_t channel, double t) const {
    double sum = 0.0;
    for (const auto& ch : channels)
      if (ch.channel_index == channel) sum += ch.value(t);
    return sum;
  }

  std::vector<ChannelDrive> drives(double t) const {
    std::vector<ChannelDrive> out;
    out.reserve(channels.size());
    for (const auto& ch : channels) out.push_back({ch.channel_index, ch.value(t)});
    return out;
  }

  double peak_rabi() const {
    double p = 0.0;
    for (const auto& ch : channels)
      for (const auto& e : ch.envelopes) p = std::max(p, e.peak);
    return p;
  }

  /// Index of the step active at time t: the first step whose marker is not
  /// yet passed, clamped to the last step. Returns 0 for a program without steps.
  std::size_t active_step(double t) const {
    for (std::size_t k = 0; k < step_markers.size(); ++k)
      if (t <= step_markers[k].time) return k;
    return step_markers.empty() ? 0 : step_markers.size() - 1;
  }
};

inline void require_valid(const PulseProgram& program) {
  if (!(program.t_start < program.t_end)) throw ValidationError("program window must satisfy t_start < t_end");
  for (const auto& ch : program.channels) {
    if (ch.envelopes.empty()) throw ValidationError("pulse channel without envelopes");
    for (const auto& e : ch.envelopes) {
      if (!(e.width > 0.0)) throw ValidationError("pulse width must be > 0");
      if (!(e.peak >= 0.0)) throw ValidationError("pulse peak must be >= 0");
      if (e.center < program.t_start || e.center > program.t_end)
        throw ValidationError("pulse center outside program window");
    }
  }
  for (std::size_t k = 1; k < program.step_markers.size(); ++k)
    if (!(program.step_markers[k - 1].time < program.step_markers[k].time))
      throw ValidationError("step markers must be strictly increasing");
}

inline void require_valid(const PulseProgram& program, const LevelChain& chain) {
  require_valid(program);
  for (const auto& ch : program.channels)
    if (ch.channel_index + 1 >= chain.n_levels)
      throw ValidationError("pulse channel " + std::to_string(ch.channel_index) + " out of range for " +
                            std::to_string(chain.n_levels) + " levels");
}

namespace detail {

inline void check_pair(std::size_t pump_channel, std::size_t stokes_channel, double delay, double sigma,
                       double omega0) {
  const auto gap = pump_channel > stokes_channel ? pump_channel - stokes_channel : stokes_channel - pump_channel;
  if (gap != 1) throw ValidationError("pump and Stokes channels must be adjacent");
  if (!(delay > 0.0)) throw ValidationError("pulse delay must be > 0");
  if (!(sigma > 0.0)) throw ValidationError("pulse width must be > 0");
  if (!(omega0 >= 0.0)) throw ValidationError("peak Rabi frequency must be >= 0");
}

}  // namespace detail

/// Counterintuitive pair: Stokes centred at t_center - delay/2, pump at
/// t_center + delay/2. The pump couples the populated level; for a forward
/// transfer |k> -> |k+2> that is channel k with Stokes on k+1, for the
/// reverse transfer |k+2> -> |k> it is channel k+1 with Stokes on k.
inline PulseFragment build_stirap_pair(std::size_t pump_channel, std::size_t stokes_channel, double t_center,
                                       double delay, double sigma, double omega0) {
  detail::check_pair(pump_channel, stokes_channel, delay, sigma, omega0);
  PulseFragment f;
  f.info = {FragmentKind::Stirap, pump_channel, stokes_channel, t_center, delay, sigma, omega0, std::numbers::pi / 2};
  f.channels.push_back({stokes_channel, {{t_center - delay / 2, sigma, omega0}}});
  f.channels.push_back({pump_channel, {{t_center + delay / 2, sigma, omega0}}});
  return f;
}

/// Fractional STIRAP with one pump and two Stokes envelopes:
///   pump   = omega0 sin(alpha) g(t - t_center - delay/2)
///   Stokes = omega0 cos(alpha) [g(t - t_center + delay/2) + g(t - t_center - delay/2)]
/// Pump and the coincident Stokes vanish together, so the mixing angle
/// tends to alpha. alpha = pi/2 is the plain STIRAP pair.
inline PulseFragment build_fstirap(std::size_t pump_channel, std::size_t stokes_channel, double t_center,
                                   double delay, double sigma, double omega0, double alpha) {
  detail::check_pair(pump_channel, stokes_channel, delay, sigma, omega0);
  if (!(alpha >= 0.0 && alpha <= std::numbers::pi / 2))
    throw ValidationError("fractional STIRAP angle must lie in [0, pi/2]");
  if (alpha == std::numbers::pi / 2) return build_stirap_pair(pump_channel, stokes_channel, t_center, delay, sigma, omega0);

  PulseFragment f;
  f.info = {FragmentKind::Fstirap, pump_channel, stokes_channel, t_center, delay, sigma, omega0, alpha};
  const double late = t_center + delay / 2;
  const double stokes = omega0 * std::cos(alpha);
  f.channels.push_back({stokes_channel, {{t_center - delay / 2, sigma, stokes}, {late, sigma, stokes}}});
  f.channels.push_back({pump_channel, {{late, sigma, omega0 * std::sin(alpha)}}});
  return f;
}

inline constexpr double kDefaultDelay = 1.2;  // in units of sigma
inline constexpr double kDefaultGap = 6.0;    // in units of sigma
inline constexpr double kPadding = 5.0;       // in units of sigma

/// Places fragments back to back so that the first envelope of each starts
/// `gap` after the last envelope of the previous one. The first fragment
/// keeps its own timing. Markers sit midway between neighbouring fragments,
/// the last one at t_end; the window is padded by 5 widths on each side.
inline PulseProgram compose_program(std::vector<PulseFragment> fragments, double gap = kDefaultGap) {
  if (fragments.empty()) throw ValidationError("compose_program needs at least one fragment");
  for (std::size_t k = 1; k < fragments.size(); ++k) {
    const double offset = fragments[k - 1].last_center() + gap - fragments[k].first_center();
    fragments[k].shift(offset);
  }

  double width = 0.0;
  for (const auto& f : fragments) width = std::max(width, f.max_width());

  PulseProgram program;
  program.t_start = fragments.front().first_center() - kPadding * width;
  program.t_end = fragments.back().last_center() + kPadding * width;
  for (std::size_t k = 0; k < fragments.size(); ++k) {
    for (const auto& ch : fragments[k].channels) {
      auto it = std::find_if(program.channels.begin(), program.channels.end(),
                             [&](const PulseChannel& c) { return c.channel_index == ch.channel_index; });
      if (it == program.channels.end()) {
        program.channels.push_back(ch);
      } else {
        it->envelopes.insert(it->envelopes.end(), ch.envelopes.begin(), ch.envelopes.end());
      }
    }
    const double boundary = k + 1 < fragments.size()
                                ? 0.5 * (fragments[k].last_center() + fragments[k + 1].first_center())
                                : program.t_end;
    program.step_markers.push_back({step_label(k + 1), boundary});
    program.steps.push_back(fragments[k].info);
  }
  std::sort(program.channels.begin(), program.channels.end(),
            [](const PulseChannel& a, const PulseChannel& b) { return a.channel_index < b.channel_index; });
  return program;
}

/// A program with no drives over [t_start, t_end].
inline PulseProgram idle_program(double t_start, double t_end) {
  PulseProgram program;
  program.t_start = t_start;
  program.t_end = t_end;
  return program;
}

struct AdiabaticityReport {
  double delta = 0.0;
  double omega_rms = 0.0;
  double sigma = 1.0;
  double metric = 0.0;
};

/// ||Delta| - sqrt(Delta^2 + Omega^2)| sigma, reducing to Omega sigma on resonance.
inline AdiabaticityReport adiabaticity_metric(double delta, double omega, double sigma) {
  if (!(sigma > 0.0)) throw ValidationError("sigma must be > 0");
  const double metric = delta == 0.0 ? std::abs(omega) * sigma
                                     : std::abs(std::abs(delta) - std::hypot(delta, omega)) * sigma;
  return {delta, omega, sigma, metric};
}

/// Adiabaticity metric for one fragment, with Omega = sqrt(Omega_p^2 + Omega_s^2)
/// taken at the pulse overlap (the fragment's t_center).
inline AdiabaticityReport fragment_adiabaticity(const PulseFragment& fragment, double delta) {
  double pump = 0.0;
  double stokes = 0.0;
  for (const auto& ch : fragment.channels) {
    if (ch.channel_index == fragment.info.pump_channel) pump += ch.value(fragment.info.t_center);
    if (ch.channel_index == fragment.info.stokes_channel) stokes += ch.value(fragment.info.t_center);
  }
  return adiabaticity_metric(delta, std::hypot(pump, stokes), fragment.info.sigma);
}

}  // namespace stirap

#endif  // STIRAP_PULSES_HPP
