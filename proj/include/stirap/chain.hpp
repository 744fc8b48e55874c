#ifndef STIRAP_CHAIN_HPP
#define STIRAP_CHAIN_HPP

// Chain-coupled N-level system: level detunings, lossy (optically excited)
// levels, decay model and the RWA Hamiltonian with nearest-neighbour couplings.
//
// Units throughout the library are reduced: the pulse width sigma is the unit
// of time and 1/sigma the unit of angular frequency (hbar = 1).

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace stirap {

using cplx = std::complex<double>;
using HamiltonianMatrix = Eigen::MatrixXcd;

/// Raised when a system description or scenario violates its invariants.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when the integrator produces non-finite amplitudes.
class NumericalFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LevelChain {
  std::size_t n_levels = 3;
  std::vector<double> detunings;  // one per level, detunings[0] == 0
  std::set<std::size_t> lossy_levels;

  /// Odd-N chain with a single one-photon detuning on every excited
  /// (odd-index) level and all ground levels two-photon resonant.
  static LevelChain uniform(std::size_t n_levels, double delta = 0.0) {
    LevelChain chain;
    chain.n_levels = n_levels;
    chain.detunings.assign(n_levels, 0.0);
    for (std::size_t i = 1; i < n_levels; i += 2) {
      chain.detunings[i] = delta;
      chain.lossy_levels.insert(i);
    }
    return chain;
  }
};

struct ValidationReport {
  std::vector<std::string> issues;

  bool ok() const { return issues.empty(); }
  explicit operator bool() const { return ok(); }
};

inline ValidationReport validate_chain(const LevelChain& chain) {
  ValidationReport report;
  const auto n = chain.n_levels;
  if (n < 3)
    report.issues.push_back("n_levels must be >= 3 (got " + std::to_string(n) + ")");
  if (n % 2 == 0)
    report.issues.push_back("n_levels must be odd (got " + std::to_string(n) + ")");
  if (chain.detunings.size() != n) {
    report.issues.push_back("detunings has length " + std::to_string(chain.detunings.size()) +
                            ", expected " + std::to_string(n));
  } else {
    if (!chain.detunings.empty() && chain.detunings[0] != 0.0)
      report.issues.push_back("detunings[0] must be 0");
    for (double d : chain.detunings)
      if (!std::isfinite(d)) {
        report.issues.push_back("detunings must be finite");
        break;
      }
  }
  for (auto level : chain.lossy_levels)
    if (level >= n)
      report.issues.push_back("lossy level " + std::to_string(level) + " out of range");
  return report;
}

inline void require_valid(const LevelChain& chain) {
  auto report = validate_chain(chain);
  if (report.ok()) return;
  std::string msg = "invalid chain:";
  for (const auto& issue : report.issues) msg += " " + issue + ";";
  throw ValidationError(msg);
}

/// Instantaneous Rabi frequency on the coupling |i> <-> |i+1>.
struct ChannelDrive {
  std::size_t channel_index = 0;
  double rabi = 0.0;
};

/// H = sum_i delta_i |i><i| - sum_i (Omega_i |i><i+1| + h.c.)
///
/// Drives on the same channel add. Channels without a drive are undriven.
inline HamiltonianMatrix build_hamiltonian(const LevelChain& chain,
                                           const std::vector<ChannelDrive>& drives) {
  const auto n = static_cast<Eigen::Index>(chain.n_levels);
  HamiltonianMatrix h = HamiltonianMatrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) h(i, i) = chain.detunings[static_cast<std::size_t>(i)];
  for (const auto& drive : drives) {
    if (drive.channel_index + 1 >= chain.n_levels)
      throw ValidationError("drive channel " + std::to_string(drive.channel_index) +
                            " out of range for " + std::to_string(chain.n_levels) + " levels");
    const auto i = static_cast<Eigen::Index>(drive.channel_index);
    h(i, i + 1) -= drive.rabi;
    h(i + 1, i) -= drive.rabi;
  }
  return h;
}

/// Per-level amplitude decay rates gamma_i (dc_i/dt gets -gamma_i c_i) and
/// optional pairwise pure dephasing, the latter used only by the density
/// matrix backend.
struct DecayModel {
  std::vector<double> amplitude_decay;
  std::optional<Eigen::MatrixXd> dephasing;  // symmetric, zero diagonal

  static DecayModel closed(std::size_t n_levels) {
    return DecayModel{std::vector<double>(n_levels, 0.0), std::nullopt};
  }

  bool is_closed() const {
    for (double g : amplitude_decay)
      if (g != 0.0) return false;
    return true;
  }
};

inline void require_valid(const DecayModel& decay, std::size_t n_levels) {
  if (decay.amplitude_decay.size() != n_levels)
    throw ValidationError("decay model has " + std::to_string(decay.amplitude_decay.size()) +
                          " rates for " + std::to_string(n_levels) + " levels");
  for (double g : decay.amplitude_decay)
    if (!(g >= 0.0) || !std::isfinite(g)) throw ValidationError("decay rates must be finite and >= 0");
  if (decay.dephasing) {
    const auto& d = *decay.dephasing;
    if (static_cast<std::size_t>(d.rows()) != n_levels || static_cast<std::size_t>(d.cols()) != n_levels)
      throw ValidationError("dephasing matrix must be n_levels x n_levels");
    if ((d.array() < 0.0).any()) throw ValidationError("dephasing rates must be >= 0");
  }
}

/// gamma = 1/excited_lifetime on lossy levels and 1/ground_lifetime elsewhere.
/// Infinite lifetimes give a closed system.
inline DecayModel make_decay_model(double excited_lifetime, double ground_lifetime,
                                   const LevelChain& chain) {
  if (!(excited_lifetime > 0.0) || !(ground_lifetime > 0.0))
    throw ValidationError("lifetimes must be positive");
  DecayModel model;
  model.amplitude_decay.resize(chain.n_levels);
  for (std::size_t i = 0; i < chain.n_levels; ++i) {
    const double lifetime = chain.lossy_levels.count(i) ? excited_lifetime : ground_lifetime;
    model.amplitude_decay[i] = std::isinf(lifetime) ? 0.0 : 1.0 / lifetime;
  }
  return model;
}

/// Experimental lifetimes (164 us excited, 100 s ground) in units of a
/// 10 us pulse width.
inline constexpr double kExcitedLifetime = 16.4;
inline constexpr double kGroundLifetime = 1.0e7;
/// Peak Rabi frequency 30/sigma.
inline constexpr double kPeakRabi = 30.0;

}  // namespace stirap

#endif  // STIRAP_CHAIN_HPP
