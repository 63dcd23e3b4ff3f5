#pragma once

// Run configuration: a sectioned key/value text format.
//
//   # comment
//   [section]
//   key = value            lists: 1, 2, 3    rows: 1, 0; 0, 1
//
// Sections and keys come from a fixed schema; anything unknown is rejected
// with the offending line number.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "tfl/hybrid.hpp"
#include "tfl/system.hpp"
#include "tfl/template.hpp"

namespace tfl {

struct RunConfig {
  std::uint64_t seed = 0;
  double t_end = 10.0;
  int threads = 0;  // 0: not set
  LoopKind loop = LoopKind::Templated;

  SystemModel system;
  CompactSpec spec;

  double horizon = 1.0;
  Matrix coeffs;  // p x (d+1), powers of t/horizon

  int q = 1;
  std::vector<double> gains;
  std::vector<double> thetas;
  std::vector<double> deltas;
  double mu_margin = 0.1;

  IntegratorParams integ;
  HybridState init;  // z empty means zero; held is set from (mu, R)

  GridParams grid;
  SearchParams search;

  std::vector<std::string> warnings;

  /// Sets the run seed and the seeds derived from it.
  void set_seed(std::uint64_t s) {
    seed = s;
    grid.seed = s;
    search.seed = s;
  }

  ControlTemplate make_template() const { return ControlTemplate(horizon, coeffs); }
  ObserverConfig observer(double theta, double delta) const { return {q, gains, theta, delta}; }
  LoopOptions loop_options() const { return {mu_margin, std::nullopt}; }
  /// Initial hybrid state for `kind`, with zero observer state when none was given.
  HybridState initial_state(LoopKind kind) const;
};

/// Parses and validates a configuration. Throws ConfigError carrying the line
/// number of the offending entry when one applies.
RunConfig parse_config(std::istream& in);
RunConfig load_config(const std::string& path);

LoopKind parse_loop_kind(const std::string& s);

}  // namespace tfl
