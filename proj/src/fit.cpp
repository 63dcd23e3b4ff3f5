#include "tfl/fit.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace tfl {

namespace {

constexpr double kFloor = 1e-300;

struct Point {
  double t;
  double y;
};

}  // namespace

DecayFit fit_rate(const std::vector<TimeValue>& series, FitWindow window, double period) {
  std::vector<Point> raw;
  for (const auto& s : series) {
    if (s.t >= window.t0 && s.t <= window.t1) raw.push_back({s.t, std::log(std::max(s.value, kFloor))});
  }
  if (raw.size() < 10) {
    throw std::invalid_argument("fit_rate: " + std::to_string(raw.size()) +
                                " samples in window, need at least 10");
  }

  std::vector<Point> pts;
  if (period > 0.0) {
    long current = -1;
    for (const auto& p : raw) {
      const long bucket = static_cast<long>(std::floor((p.t - window.t0) / period));
      if (bucket != current) {
        pts.push_back(p);
        current = bucket;
      } else if (p.y > pts.back().y) {
        pts.back() = p;
      }
    }
    if (pts.size() < 2) pts = raw;
  } else {
    pts = raw;
  }

  // Center on the first point so that a constant series gives an exact zero slope.
  const double t_ref = pts.front().t;
  const double y_ref = pts.front().y;
  double st = 0, sy = 0;
  for (const auto& p : pts) {
    st += p.t - t_ref;
    sy += p.y - y_ref;
  }
  const double n = static_cast<double>(pts.size());
  const double tm = st / n;
  const double ym = sy / n;
  double stt = 0, sty = 0, syy = 0;
  for (const auto& p : pts) {
    const double dt = (p.t - t_ref) - tm;
    const double dy = (p.y - y_ref) - ym;
    stt += dt * dt;
    sty += dt * dy;
    syy += dy * dy;
  }
  const double slope = stt > 0 ? sty / stt : 0.0;
  const double intercept = (ym + y_ref) - slope * (tm + t_ref);

  DecayFit fit;
  fit.nu = -slope;
  fit.C = std::exp(intercept);
  fit.r_squared = syy > 0 ? (sty * sty) / (stt * syy) : 1.0;
  fit.window = window;
  fit.points = static_cast<int>(pts.size());
  return fit;
}

}  // namespace tfl
