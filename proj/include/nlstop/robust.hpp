#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "nlstop/pasting.hpp"
#include "nlstop/report.hpp"
#include "nlstop/snell.hpp"

namespace nlstop {

struct SinglePriorEnvelope {
  AdaptedProcess envelope;
  StoppingRule tau;
};

/// Snell envelope of Y + H^i under the single prior E_i.
SinglePriorEnvelope single_prior_envelope(const StableFamily& family, std::size_t i,
                                          const RewardSpec& reward);

struct RobustResult {
  std::vector<AdaptedProcess> envelopes;  // R^{i,0}
  std::vector<StoppingRule> tau_i;
  StoppingRule tau_lower;
  /// Lower envelope R_min = max(Y, min_i [step_i(R_min next) + h^i dt]).
  /// Values outside the stopped region are diagnostic only.
  AdaptedProcess lower;
  StoppingRule tau_v;
  /// Base index attaining the one-step minimum (lowest on ties).
  std::vector<std::vector<std::size_t>> argmin;
  /// Nodes reachable by a path on which tau_lower has not stopped earlier.
  std::vector<std::vector<std::uint8_t>> stopped_region;
  double value_at_0 = 0.0;
};

RobustResult robust_values(const StableFamily& family, const RewardSpec& reward);

/// inf over the pasting closure of E_sel[Y_rho + H^sel_rho | F_t], computed
/// node-wise.
AdaptedProcess lower_rule_value(const StableFamily& family, const RewardSpec& reward,
                                const StoppingRule& rule);

/// Submartingale property up to tau_lower, V = Y on the tau_V stop set,
/// tau_V <= tau_lower, attainment of the robust value at tau_V and the
/// ordering Y <= V <= min_i R^i.
Report verify_robust_structure(const RobustResult& result, const StableFamily& family,
                               const RewardSpec& reward, double tolerance = 1e-10);

}  // namespace nlstop
