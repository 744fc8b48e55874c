#ifndef STIRAP_ANALYSIS_HPP
#define STIRAP_ANALYSIS_HPP

// Adiabatic picture of the forward cascade on 3-, 5- and 7-level chains:
// mixing angles, step-wise dark states, predicted coherence magnitudes and
// the overlap of a propagated state with the instantaneous dark state.
//
// Lambda-unit k (1-based) has its pump on channel 2(k-1) and its Stokes on
// channel 2(k-1)+1, and tan(theta_k) = Omega_pump / Omega_Stokes.

#include "stirap/chain.hpp"
#include "stirap/propagator.hpp"
#include "stirap/pulses.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

namespace stirap {

struct MixingAngles {
  std::vector<double> theta;  // theta_1 .. theta_n, each in [0, pi/2]

  double operator[](std::size_t k) const { return k < theta.size() ? theta[k] : 0.0; }
};

enum class StepLabel { I = 1, II = 2, III = 3 };

inline std::size_t step_number(StepLabel step) { return static_cast<std::size_t>(step); }

inline StepLabel step_from_number(std::size_t step) {
  if (step < 1 || step > 3) throw ValidationError("dark-state analysis covers steps i..iii only");
  return static_cast<StepLabel>(step);
}

/// Asymptotic angles of the coherence cascade (FSTIRAP then STIRAPs) once a
/// step has completed.
inline MixingAngles step_table_angles(StepLabel step) {
  constexpr double q = std::numbers::pi / 4;
  constexpr double h = std::numbers::pi / 2;
  switch (step) {
    case StepLabel::I: return {{q, 0.0, 0.0}};
    case StepLabel::II: return {{q, h, 0.0}};
    case StepLabel::III: return {{q, h, h}};
  }
  return {};
}

namespace detail {

struct UnitEnvelopes {
  std::vector<GaussianPulse> pump;
  std::vector<GaussianPulse> stokes;
};

inline UnitEnvelopes unit_envelopes(const PulseProgram& program, std::size_t unit) {
  UnitEnvelopes out;
  for (const auto& ch : program.channels) {
    for (const auto& e : ch.envelopes) {
      if (e.peak <= 0.0) continue;
      if (ch.channel_index == 2 * unit) out.pump.push_back(e);
      if (ch.channel_index == 2 * unit + 1) out.stokes.push_back(e);
    }
  }
  return out;
}

/// Limit of atan(pump/Stokes) as t -> -inf (future = false) or +inf. The
/// widest Gaussian dominates a tail; among equal widths the earliest centre
/// dominates the past and the latest dominates the future. Ties add.
inline double asymptotic_angle(const UnitEnvelopes& unit, bool future) {
  auto dominates = [future](const GaussianPulse& a, const GaussianPulse& b) {
    if (a.width != b.width) return a.width > b.width;
    return future ? a.center > b.center : a.center < b.center;
  };
  const GaussianPulse* best = nullptr;
  for (const auto* list : {&unit.pump, &unit.stokes})
    for (const auto& e : *list)
      if (!best || dominates(e, *best)) best = &e;
  if (!best) return 0.0;

  auto weight = [&](const std::vector<GaussianPulse>& list) {
    double w = 0.0;
    for (const auto& e : list)
      if (e.width == best->width && e.center == best->center) w += e.peak;
    return w;
  };
  return std::atan2(weight(unit.pump), weight(unit.stokes));
}

}  // namespace detail

/// Number of Lambda units spanned by the program's channels.
inline std::size_t unit_count(const PulseProgram& program) {
  std::size_t n = 0;
  for (const auto& ch : program.channels) n = std::max(n, ch.channel_index / 2 + 1);
  return n;
}

/// theta_k = atan2(Omega_pump, Omega_Stokes). Where both envelopes of a unit
/// are below 1e-12 of the program's peak Rabi frequency the ratio is 0/0 and
/// the angle is frozen at its asymptote on that side of the unit's pulses.
inline MixingAngles mixing_angles(const PulseProgram& program, double t, std::size_t n_units) {
  const double floor = 1e-12 * program.peak_rabi();
  MixingAngles angles;
  angles.theta.resize(n_units, 0.0);
  for (std::size_t k = 0; k < n_units; ++k) {
    const auto unit = detail::unit_envelopes(program, k);
    double pump = 0.0;
    double stokes = 0.0;
    for (const auto& e : unit.pump) pump += envelope_value(e, t);
    for (const auto& e : unit.stokes) stokes += envelope_value(e, t);
    if (pump > floor || stokes > floor) {
      angles.theta[k] = std::clamp(std::atan2(pump, stokes), 0.0, std::numbers::pi / 2);
      continue;
    }
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto* list : {&unit.pump, &unit.stokes})
      for (const auto& e : *list) {
        lo = std::min(lo, e.center);
        hi = std::max(hi, e.center);
      }
    const bool future = (unit.pump.empty() && unit.stokes.empty()) ? false : t > 0.5 * (lo + hi);
    angles.theta[k] = detail::asymptotic_angle(unit, future);
  }
  return angles;
}

inline MixingAngles mixing_angles(const PulseProgram& program, double t) {
  return mixing_angles(program, t, unit_count(program));
}

/// Dark state of the forward cascade after `step` (Lambda units 1..step
/// active). Has no amplitude on the excited levels and a nonnegative |0>
/// coefficient.
inline StateVector dark_state(const MixingAngles& angles, StepLabel step, std::size_t n_levels) {
  if (n_levels != 3 && n_levels != 5 && n_levels != 7)
    throw ValidationError("dark-state formulas are defined for 3, 5 and 7 levels");
  if (step_number(step) > (n_levels - 1) / 2) throw ValidationError("step exceeds the number of Lambda units");

  const double c1 = std::cos(angles[0]), s1 = std::sin(angles[0]);
  const double c2 = std::cos(angles[1]), s2 = std::sin(angles[1]);
  const double c3 = std::cos(angles[2]), s3 = std::sin(angles[2]);
  StateVector a = StateVector::Zero(static_cast<Eigen::Index>(n_levels));
  switch (step) {
    case StepLabel::I:
      a(0) = c1;
      a(2) = -s1;
      break;
    case StepLabel::II:
      a(0) = c1;
      a(2) = -s1 * c2;
      a(4) = s1 * s2;
      break;
    case StepLabel::III:
      a(0) = c1;
      a(2) = -s1 * c2;
      a(4) = s1 * s2 * c3;
      a(6) = -s1 * s2 * s3;
      break;
  }
  return a;
}

struct CoherencePrediction {
  double rho02 = 0.0;
  double rho04 = 0.0;
  double rho06 = 0.0;
  double rho24 = 0.0;
  double rho46 = 0.0;
  double rho26 = 0.0;

  /// Magnitude for an even-level pair, or 0 for pairs the cascade never populates.
  double magnitude(std::size_t j, std::size_t k) const {
    if (j > k) std::swap(j, k);
    if (j == 0 && k == 2) return rho02;
    if (j == 0 && k == 4) return rho04;
    if (j == 0 && k == 6) return rho06;
    if (j == 2 && k == 4) return rho24;
    if (j == 4 && k == 6) return rho46;
    if (j == 2 && k == 6) return rho26;
    return 0.0;
  }
};

inline CoherencePrediction predicted_coherences(const MixingAngles& angles) {
  const double c1 = std::cos(angles[0]), s1 = std::sin(angles[0]);
  const double c2 = std::cos(angles[1]), s2 = std::sin(angles[1]);
  const double c3 = std::cos(angles[2]), s3 = std::sin(angles[2]);
  CoherencePrediction p;
  p.rho02 = std::abs(c1 * s1 * c2);
  p.rho04 = std::abs(c1 * s1 * s2 * c3);
  p.rho06 = std::abs(c1 * s1 * s2 * s3);
  p.rho24 = std::abs(s1 * c2 * s1 * s2 * c3);
  p.rho46 = std::abs(s1 * s1 * s2 * s2 * c3 * s3);
  p.rho26 = std::abs(s1 * s1 * c2 * s2 * s3);
  return p;
}

struct Spectrum {
  Eigen::VectorXd eigenvalues;    // ascending
  Eigen::MatrixXcd eigenvectors;  // columns, orthonormal
};

inline Spectrum instantaneous_spectrum(const HamiltonianMatrix& h) {
  if (h.rows() != h.cols()) throw ValidationError("Hamiltonian must be square");
  if ((h - h.adjoint()).cwiseAbs().maxCoeff() > 1e-12) throw ValidationError("Hamiltonian is not Hermitian");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(h);
  if (solver.info() != Eigen::Success) throw NumericalFailure("eigendecomposition failed");
  return {solver.eigenvalues(), solver.eigenvectors()};
}

/// True when the program is a forward cascade the dark-state formulas
/// describe: step k drives Lambda unit k with its pump on channel 2(k-1).
inline bool is_forward_cascade(const PulseProgram& program, std::size_t n_levels) {
  if (n_levels != 3 && n_levels != 5 && n_levels != 7) return false;
  if (program.steps.empty() || program.steps.size() > (n_levels - 1) / 2) return false;
  for (std::size_t k = 0; k < program.steps.size(); ++k)
    if (program.steps[k].pump_channel != 2 * k || program.steps[k].stokes_channel != 2 * k + 1) return false;
  return true;
}

/// |<a_0(t)|psi(t)>|^2 / <psi|psi> along a trajectory, with the active step
/// taken from the program's step markers. Programs without steps use step i.
inline std::vector<double> dark_state_overlap(const Trajectory& traj) {
  const auto& program = traj.program;
  std::vector<double> out;
  if (traj.states.empty()) return out;
  const auto n_levels = static_cast<std::size_t>(traj.states.front().size());
  const std::size_t n_units = (n_levels - 1) / 2;
  out.reserve(traj.size());
  for (std::size_t i = 0; i < traj.size(); ++i) {
    const double t = traj.times[i];
    const auto step = step_from_number(std::min(program.active_step(t) + 1, n_units));
    const StateVector a = dark_state(mixing_angles(program, t, n_units), step, n_levels);
    const auto& psi = traj.states[i];
    const double norm = psi.squaredNorm();
    out.push_back(norm > 0.0 ? std::norm(a.dot(psi)) / norm : 0.0);
  }
  return out;
}

}  // namespace stirap

#endif  // STIRAP_ANALYSIS_HPP
