#pragma once

#include <cstddef>
#include <optional>
#include <vector>

namespace sgdcurve {

// Expected loss after t = 0..steps SGD updates. Theory curves carry no std.
struct LearningCurve {
  std::vector<double> losses;
  std::optional<std::vector<double>> std;
  bool diverged = false;

  std::size_t steps() const { return losses.empty() ? 0 : losses.size() - 1; }
  double final_loss() const { return losses.back(); }
};

// A run is flagged diverged once its loss exceeds this multiple of L_0.
inline constexpr double kDivergenceFactor = 1e12;

}  // namespace sgdcurve
