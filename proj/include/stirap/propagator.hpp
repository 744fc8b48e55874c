#ifndef STIRAP_PROPAGATOR_HPP
#define STIRAP_PROPAGATOR_HPP

// Amplitude propagation of i dc/dt = H(t) c - i Gamma c over a pulse program.
//
// Three backends share one interface:
//   propagate             fixed-step classical RK4 (production path)
//   propagate_expm_oracle exact exponentials of frozen generators (test oracle)
//   propagate_density     density-matrix RK4 with pure dephasing (optional)

#include "stirap/chain.hpp"
#include "stirap/pulses.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <utility>
#include <vector>

namespace stirap {

using StateVector = Eigen::VectorXcd;

struct Trajectory {
  std::vector<double> times;
  std::vector<StateVector> states;
  PulseProgram program;

  std::size_t size() const { return times.size(); }
  const StateVector& final_state() const { return states.back(); }
};

/// Unit amplitude on one level.
inline StateVector basis_state(std::size_t n_levels, std::size_t level) {
  if (level >= n_levels) throw ValidationError("level " + std::to_string(level) + " out of range");
  StateVector c = StateVector::Zero(static_cast<Eigen::Index>(n_levels));
  c(static_cast<Eigen::Index>(level)) = 1.0;
  return c;
}

/// Internal steps used by default: the window is split into 2e4 steps.
inline constexpr std::size_t kDefaultSteps = 20000;

inline double default_dt(const PulseProgram& program) {
  return (program.t_end - program.t_start) / static_cast<double>(kDefaultSteps);
}

namespace detail {

inline Eigen::VectorXd decay_vector(const DecayModel& decay) {
  return Eigen::Map<const Eigen::VectorXd>(decay.amplitude_decay.data(),
                                           static_cast<Eigen::Index>(decay.amplitude_decay.size()));
}

inline void check_inputs(const StateVector& initial, const LevelChain& chain, const PulseProgram& program,
                         const DecayModel& decay, double dt) {
  require_valid(chain);
  require_valid(program, chain);
  require_valid(decay, chain.n_levels);
  if (static_cast<std::size_t>(initial.size()) != chain.n_levels)
    throw ValidationError("initial state has " + std::to_string(initial.size()) + " amplitudes for " +
                          std::to_string(chain.n_levels) + " levels");
  if (!initial.allFinite()) throw ValidationError("initial state must be finite");
  if (initial.squaredNorm() > 1.0 + 1e-9) throw ValidationError("initial state norm exceeds 1");
  if (!(dt > 0.0)) throw ValidationError("dt must be > 0");
}

/// Number of equal steps covering the window with step size at most dt.
inline std::size_t step_count(const PulseProgram& program, double dt) {
  const double n = std::ceil((program.t_end - program.t_start) / dt - 1e-9);
  return std::max<std::size_t>(1, static_cast<std::size_t>(n));
}

inline StateVector derivative(const LevelChain& chain, const PulseProgram& program, const Eigen::VectorXd& gamma,
                              double t, const StateVector& c) {
  const HamiltonianMatrix h = build_hamiltonian(chain, program.drives(t));
  return cplx(0.0, -1.0) * (h * c) - gamma.cwiseProduct(c);
}

template <class Step>
Trajectory integrate(const StateVector& initial, const PulseProgram& program, double dt, Step&& step) {
  const std::size_t n = step_count(program, dt);
  const double h = (program.t_end - program.t_start) / static_cast<double>(n);
  Trajectory traj;
  traj.program = program;
  traj.times.reserve(n + 1);
  traj.states.reserve(n + 1);
  traj.times.push_back(program.t_start);
  traj.states.push_back(initial);
  for (std::size_t k = 0; k < n; ++k) {
    const double t = program.t_start + static_cast<double>(k) * h;
    StateVector next = step(traj.states.back(), t, h);
    if (!next.allFinite())
      throw NumericalFailure("non-finite amplitudes at t = " + std::to_string(t + h));
    traj.times.push_back(k + 1 == n ? program.t_end : program.t_start + static_cast<double>(k + 1) * h);
    traj.states.push_back(std::move(next));
  }
  return traj;
}

}  // namespace detail

/// One classical fourth-order Runge-Kutta step of dc/dt = -i H(t) c - Gamma c.
inline StateVector step_rk4(const StateVector& state, const LevelChain& chain, const PulseProgram& program,
                            const DecayModel& decay, double t, double dt) {
  const Eigen::VectorXd gamma = detail::decay_vector(decay);
  const StateVector k1 = detail::derivative(chain, program, gamma, t, state);
  const StateVector k2 = detail::derivative(chain, program, gamma, t + dt / 2, state + (dt / 2) * k1);
  const StateVector k3 = detail::derivative(chain, program, gamma, t + dt / 2, state + (dt / 2) * k2);
  const StateVector k4 = detail::derivative(chain, program, gamma, t + dt, state + dt * k3);
  StateVector next = state + (dt / 6) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  if (!next.allFinite()) throw NumericalFailure("non-finite amplitudes at t = " + std::to_string(t + dt));
  return next;
}

/// RK4 over [t_start, t_end] on a uniform grid with step <= dt. The first
/// state is `initial`, the last time is exactly t_end.
inline Trajectory propagate(const StateVector& initial, const LevelChain& chain, const PulseProgram& program,
                            const DecayModel& decay, double dt) {
  detail::check_inputs(initial, chain, program, decay, dt);
  return detail::integrate(initial, program, dt, [&](const StateVector& c, double t, double h) {
    return step_rk4(c, chain, program, decay, t, h);
  });
}

inline Trajectory propagate(const StateVector& initial, const LevelChain& chain, const PulseProgram& program,
                            const DecayModel& decay) {
  return propagate(initial, chain, program, decay, default_dt(program));
}

/// exp(A) by scaling and squaring around a truncated Taylor series.
inline Eigen::MatrixXcd expm(const Eigen::MatrixXcd& a) {
  const double norm = a.cwiseAbs().colwise().sum().maxCoeff();
  int squarings = 0;
  if (norm > 0.5) squarings = static_cast<int>(std::ceil(std::log2(norm / 0.5)));
  const Eigen::MatrixXcd scaled = a / std::ldexp(1.0, squarings);

  const auto n = a.rows();
  Eigen::MatrixXcd result = Eigen::MatrixXcd::Identity(n, n);
  Eigen::MatrixXcd term = Eigen::MatrixXcd::Identity(n, n);
  for (int k = 1; k <= 30; ++k) {
    term = term * scaled / static_cast<double>(k);
    result += term;
    if (term.cwiseAbs().maxCoeff() < 1e-18 * result.cwiseAbs().maxCoeff()) break;
  }
  for (int s = 0; s < squarings; ++s) result = result * result;
  return result;
}

enum class OracleScheme {
  Midpoint,              // one exponential, generator frozen at t + dt/2 (second order)
  CommutatorFreeFourth,  // two exponentials at the Gauss-Legendre nodes (fourth order)
};

/// Piecewise-constant propagation through exact matrix exponentials of the
/// frozen generator A(t) = -i H(t) - Gamma. Both schemes are exact for a
/// constant generator regardless of the step count.
///
/// The fourth-order scheme is the commutator-free product
///   exp(h (a1 A(t1) + a2 A(t2))) exp(h (a2 A(t1) + a1 A(t2)))
/// with a1,2 = 1/4 -/+ sqrt(3)/6 and t1,2 = t + (1/2 -/+ sqrt(3)/6) h.
inline Trajectory propagate_expm_oracle(const StateVector& initial, const LevelChain& chain,
                                        const PulseProgram& program, const DecayModel& decay, double dt,
                                        OracleScheme scheme = OracleScheme::CommutatorFreeFourth) {
  detail::check_inputs(initial, chain, program, decay, dt);
  const Eigen::MatrixXcd gamma = detail::decay_vector(decay).cast<cplx>().asDiagonal();
  auto generator = [&](double t) -> Eigen::MatrixXcd {
    return cplx(0.0, -1.0) * build_hamiltonian(chain, program.drives(t)) - gamma;
  };
  const double r3 = std::sqrt(3.0);
  return detail::integrate(initial, program, dt, [&](const StateVector& c, double t, double h) {
    if (scheme == OracleScheme::Midpoint) return StateVector(expm(generator(t + h / 2) * h) * c);
    const Eigen::MatrixXcd a1 = generator(t + (0.5 - r3 / 6) * h);
    const Eigen::MatrixXcd a2 = generator(t + (0.5 + r3 / 6) * h);
    const double w1 = 0.25 - r3 / 6;
    const double w2 = 0.25 + r3 / 6;
    const StateVector half = expm(h * (w2 * a1 + w1 * a2)) * c;
    return StateVector(expm(h * (w1 * a1 + w2 * a2)) * half);
  });
}

struct ObservableSeries {
  std::vector<double> times;
  Eigen::MatrixXd populations;  // samples x levels, rho_jj = |c_j|^2
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  Eigen::MatrixXd coherence_re;  // samples x pairs, Re(c_j c_k^*)
  Eigen::MatrixXd coherence_im;  // samples x pairs, Im(c_j c_k^*)

  std::size_t size() const { return times.size(); }

  /// Sample index closest to t. Throws if t lies outside the sampled window.
  std::size_t index_at(double t) const {
    if (times.empty() || t < times.front() - 1e-12 || t > times.back() + 1e-12)
      throw std::out_of_range("time " + std::to_string(t) + " outside trajectory");
    auto it = std::lower_bound(times.begin(), times.end(), t);
    if (it == times.end()) return times.size() - 1;
    auto idx = static_cast<std::size_t>(it - times.begin());
    if (idx > 0 && t - times[idx - 1] < times[idx] - t) --idx;
    return idx;
  }

  std::size_t pair_index(std::size_t j, std::size_t k) const {
    for (std::size_t p = 0; p < pairs.size(); ++p)
      if (pairs[p].first == j && pairs[p].second == k) return p;
    throw std::out_of_range("coherence pair (" + std::to_string(j) + "," + std::to_string(k) + ") not recorded");
  }

  double population(std::size_t level, double t) const {
    return populations(static_cast<Eigen::Index>(index_at(t)), static_cast<Eigen::Index>(level));
  }
  cplx coherence(std::size_t j, std::size_t k, double t) const {
    const auto i = static_cast<Eigen::Index>(index_at(t));
    const auto p = static_cast<Eigen::Index>(pair_index(j, k));
    return {coherence_re(i, p), coherence_im(i, p)};
  }
};

inline ObservableSeries observables(const Trajectory& traj,
                                    const std::vector<std::pair<std::size_t, std::size_t>>& pairs) {
  const auto n_levels = traj.states.empty() ? std::size_t{0} : static_cast<std::size_t>(traj.states.front().size());
  for (const auto& [j, k] : pairs)
    if (j >= n_levels || k >= n_levels)
      throw std::out_of_range("coherence pair (" + std::to_string(j) + "," + std::to_string(k) + ") out of range");

  ObservableSeries out;
  out.times = traj.times;
  out.pairs = pairs;
  const auto samples = static_cast<Eigen::Index>(traj.size());
  out.populations.resize(samples, static_cast<Eigen::Index>(n_levels));
  out.coherence_re.resize(samples, static_cast<Eigen::Index>(pairs.size()));
  out.coherence_im.resize(samples, static_cast<Eigen::Index>(pairs.size()));
  for (Eigen::Index s = 0; s < samples; ++s) {
    const auto& c = traj.states[static_cast<std::size_t>(s)];
    out.populations.row(s) = c.cwiseAbs2().transpose();
    for (std::size_t p = 0; p < pairs.size(); ++p) {
      const cplx rho = c(static_cast<Eigen::Index>(pairs[p].first)) *
                       std::conj(c(static_cast<Eigen::Index>(pairs[p].second)));
      out.coherence_re(s, static_cast<Eigen::Index>(p)) = rho.real();
      out.coherence_im(s, static_cast<Eigen::Index>(p)) = rho.imag();
    }
  }
  return out;
}

struct DensityTrajectory {
  std::vector<double> times;
  std::vector<Eigen::MatrixXcd> states;
};

/// RK4 on d rho/dt = -i (H_eff rho - rho H_eff^dagger) - D o rho with
/// H_eff = H - i Gamma and D the pairwise pure-dephasing rates (Hadamard
/// product). Without dephasing, rho(t) = c(t) c(t)^dagger exactly.
inline DensityTrajectory propagate_density(const Eigen::MatrixXcd& initial, const LevelChain& chain,
                                           const PulseProgram& program, const DecayModel& decay, double dt) {
  require_valid(chain);
  require_valid(program, chain);
  require_valid(decay, chain.n_levels);
  const auto n = static_cast<Eigen::Index>(chain.n_levels);
  if (initial.rows() != n || initial.cols() != n) throw ValidationError("density matrix has wrong shape");
  if (!(dt > 0.0)) throw ValidationError("dt must be > 0");

  const Eigen::MatrixXcd gamma = detail::decay_vector(decay).cast<cplx>().asDiagonal();
  const Eigen::MatrixXd dephasing = decay.dephasing.value_or(Eigen::MatrixXd::Zero(n, n));
  auto rhs = [&](double t, const Eigen::MatrixXcd& rho) -> Eigen::MatrixXcd {
    const Eigen::MatrixXcd heff = build_hamiltonian(chain, program.drives(t)).cast<cplx>() - cplx(0.0, 1.0) * gamma;
    Eigen::MatrixXcd out = cplx(0.0, -1.0) * (heff * rho - rho * heff.adjoint());
    out.array() -= dephasing.cast<cplx>().array() * rho.array();
    return out;
  };

  const std::size_t steps = detail::step_count(program, dt);
  const double h = (program.t_end - program.t_start) / static_cast<double>(steps);
  DensityTrajectory traj;
  traj.times.push_back(program.t_start);
  traj.states.push_back(initial);
  for (std::size_t k = 0; k < steps; ++k) {
    const double t = program.t_start + static_cast<double>(k) * h;
    const auto& rho = traj.states.back();
    const Eigen::MatrixXcd k1 = rhs(t, rho);
    const Eigen::MatrixXcd k2 = rhs(t + h / 2, rho + (h / 2) * k1);
    const Eigen::MatrixXcd k3 = rhs(t + h / 2, rho + (h / 2) * k2);
    const Eigen::MatrixXcd k4 = rhs(t + h, rho + h * k3);
    Eigen::MatrixXcd next = rho + (h / 6) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!next.allFinite()) throw NumericalFailure("non-finite density matrix at t = " + std::to_string(t + h));
    traj.times.push_back(k + 1 == steps ? program.t_end : program.t_start + static_cast<double>(k + 1) * h);
    traj.states.push_back(std::move(next));
  }
  return traj;
}

}  // namespace stirap

#endif  // STIRAP_PROPAGATOR_HPP
