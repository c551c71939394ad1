#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <vector>

#include "nlstop/gexp.hpp"
#include "nlstop/lattice.hpp"
#include "nlstop/pasting.hpp"
#include "nlstop/report.hpp"

namespace nlstop {

/// Primary reward Y with running-reward densities h^i, one per base
/// generator (empty means h = 0). H^i_t = sum_{s<t} h^i_s dt, so H^i_0 = 0.
struct RewardSpec {
  AdaptedProcess reward;
  std::vector<AdaptedProcess> running;
  double c_y = -1.0;
  double c_h = -1.0;

  [[nodiscard]] double c_star() const noexcept { return c_y + c_h; }
  [[nodiscard]] double density(std::size_t i, int t, std::size_t node) const {
    return running.empty() ? 0.0 : running[i](t, node);
  }
};

/// Realized constants of a reward; bounds that hold automatically on a
/// finite space are reported rather than assumed.
struct RewardDiagnostics {
  double min_reward = 0.0;
  double max_abs_reward = 0.0;
  double min_density = 0.0;
  /// Smallest increment H_{s,t} over all pasted densities.
  double min_increment = 0.0;
};

/// Throws ConfigError unless C_Y < 0, C_H < 0, Y >= C_Y and every H
/// increment is >= C_H; `base_size` is the number of densities expected.
RewardDiagnostics check_reward_assumptions(const RewardSpec& reward, std::size_t base_size);

struct SnellResult {
  AdaptedProcess envelope;
  StoppingRule tau_bar;
  /// Base index attaining the one-step optimum (lowest on ties).
  std::vector<std::vector<std::size_t>> argmax;
  double value_at_0 = 0.0;
};

inline constexpr double kStopTolerance = 1e-9;

enum class Aggregate { max, min };

/// Z(T) = Y(T); Z = max(Y, agg_i [step_i(Z_next) + h^i dt]). The building
/// block of the upper (agg = max) and lower (agg = min) envelopes.
SnellResult envelope_sweep(const std::vector<std::shared_ptr<const GExpectation>>& priors,
                           const RewardSpec& reward, Aggregate aggregate);

SnellResult upper_snell_envelope(const StableFamily& family, const RewardSpec& reward);

/// First hit of Y >= delta Z + (1 - delta)(C_Y + 2 C_H). delta in (0, 1).
StoppingRule approximate_stopping_time(const SnellResult& result, const RewardSpec& reward,
                                       double delta);

/// J_delta = Z on the tau_delta stop set, otherwise max_i [step_i(J_next) + h^i dt].
AdaptedProcess j_delta_process(const SnellResult& result, const StableFamily& family,
                               const RewardSpec& reward, double delta);

/// One-step check step_i(X_next) + h^i dt <= X + tolerance for every base i.
Report check_supermartingale(const StableFamily& family, const AdaptedProcess& process,
                             const RewardSpec& reward, double tolerance = kStopTolerance);

struct SnellCheckOptions {
  std::size_t sampled_rules = 20;
  std::uint64_t seed = 11;
  double tolerance = kStopTolerance;
  /// Candidate for the minimality check; when null a shifted envelope
  /// Z + a(t) with random non-increasing a >= 0 is used.
  const AdaptedProcess* candidate = nullptr;
};

/// Supermartingale property, domination, minimality against a candidate,
/// optional sampling at random rules and attainment at tau_bar.
Report verify_snell_characterization(const SnellResult& result, const StableFamily& family,
                                     const RewardSpec& reward, const SnellCheckOptions& = {});

}  // namespace nlstop
