#pragma once

#include <vector>

namespace tfl {

struct TimeValue {
  double t;
  double value;
};

struct FitWindow {
  double t0;
  double t1;
};

/// Exponential decay fit value(t) ~ C exp(-nu t).
struct DecayFit {
  double C = 0.0;
  double nu = 0.0;
  double r_squared = 0.0;
  FitWindow window{0.0, 0.0};
  int points = 0;  // points entering the regression (envelope peaks or raw samples)
};

/// Least-squares line through (t, log value) over the samples inside `window`.
/// With period > 0 the regression uses the per-period peak envelope
/// (max of each bucket [t0 + k period, t0 + (k+1) period)); with fewer than two
/// buckets it falls back to the raw samples. Values are floored at 1e-300.
/// Throws std::invalid_argument with fewer than 10 samples in the window.
DecayFit fit_rate(const std::vector<TimeValue>& series, FitWindow window, double period = 0.0);

}  // namespace tfl
