#include "tfl/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "tfl/errors.hpp"

namespace tfl {

namespace {

const std::map<std::string, std::set<std::string>>& schema() {
  static const std::map<std::string, std::set<std::string>> s{
      {"run", {"seed", "t_end", "threads", "loop"}},
      {"system", {"builtin", "name", "n", "p", "m", "f", "h", "lambda", "lyapunov"}},
      {"spec", {"inner_lo", "inner_hi", "outer_lo", "outer_hi", "lambda_grid"}},
      {"template", {"horizon", "coeffs", "normalize"}},
      {"observer", {"q", "gains", "theta", "delta", "mu_margin"}},
      {"integrator", {"step", "stride"}},
      {"init", {"x", "z", "s", "mu", "R"}},
      {"certify", {"x_points", "t_points", "mu_points", "extra_mu", "structured_rotations", "random_rotations",
                   "min_margin"}},
      {"search", {"degree", "attempts", "radius", "shrink"}},
  };
  return s;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(s);
  while (std::getline(is, item, sep)) out.push_back(trim(item));
  if (!s.empty() && s.back() == sep) out.push_back("");
  return out;
}

struct Entry {
  std::string value;
  int line = 0;
};

class Document {
 public:
  explicit Document(std::istream& in) {
    std::string raw;
    std::string section;
    int line = 0;
    while (std::getline(in, raw)) {
      ++line;
      const auto hash = raw.find('#');
      const std::string text = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
      if (text.empty()) continue;
      if (text.front() == '[') {
        if (text.back() != ']') throw ConfigError("malformed section header '" + text + "'", line);
        section = trim(text.substr(1, text.size() - 2));
        if (!schema().count(section)) throw ConfigError("unknown section [" + section + "]", line);
        if (!seen_sections_.insert(section).second) throw ConfigError("duplicate section [" + section + "]", line);
        section_lines_[section] = line;
        continue;
      }
      const auto eq = text.find('=');
      if (eq == std::string::npos) throw ConfigError("expected 'key = value', got '" + text + "'", line);
      if (section.empty()) throw ConfigError("entry outside of any section", line);
      const std::string key = trim(text.substr(0, eq));
      const std::string value = trim(text.substr(eq + 1));
      if (!schema().at(section).count(key)) throw ConfigError("unknown key '" + key + "' in [" + section + "]", line);
      if (value.empty()) throw ConfigError("empty value for '" + key + "'", line);
      auto& slot = entries_[section + "." + key];
      if (slot.line) throw ConfigError("duplicate key '" + key + "'", line);
      slot = {value, line};
    }
  }

  const Entry* find(const std::string& path) const {
    const auto it = entries_.find(path);
    return it == entries_.end() ? nullptr : &it->second;
  }
  bool has(const std::string& path) const { return find(path) != nullptr; }
  int section_line(const std::string& section) const {
    const auto it = section_lines_.find(section);
    return it == section_lines_.end() ? 0 : it->second;
  }

 private:
  std::map<std::string, Entry> entries_;
  std::set<std::string> seen_sections_;
  std::map<std::string, int> section_lines_;
};

double to_double(const std::string& s, int line) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end || !std::isfinite(v)) throw ConfigError("expected a number, got '" + s + "'", line);
  return v;
}

long long to_integer(const std::string& s, int line) {
  long long v = 0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) throw ConfigError("expected an integer, got '" + s + "'", line);
  return v;
}

std::vector<double> to_list(const Entry& e) {
  std::vector<double> out;
  for (const auto& item : split(e.value, ',')) out.push_back(to_double(item, e.line));
  return out;
}

Matrix to_matrix(const Entry& e) {
  std::vector<std::vector<double>> rows;
  for (const auto& r : split(e.value, ';')) {
    rows.push_back(to_list({r, e.line}));
    if (rows.back().size() != rows.front().size()) throw ConfigError("ragged matrix rows", e.line);
  }
  Matrix M(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) M(i, j) = rows[i][j];
  }
  return M;
}

Vector to_vector(const Entry& e, int expected) {
  const auto list = to_list(e);
  if (static_cast<int>(list.size()) != expected) {
    throw ConfigError("expected " + std::to_string(expected) + " values, got " + std::to_string(list.size()), e.line);
  }
  return Eigen::Map<const Vector>(list.data(), expected);
}

bool to_bool(const Entry& e) {
  if (e.value == "true") return true;
  if (e.value == "false") return false;
  throw ConfigError("expected true or false, got '" + e.value + "'", e.line);
}

// Typed accessors that leave `out` untouched when the key is absent.
struct Reader {
  const Document& doc;

  void number(const std::string& path, double& out) const {
    if (const Entry* e = doc.find(path)) out = to_double(e->value, e->line);
  }
  template <class I>
  void integer(const std::string& path, I& out, long long lo, long long hi) const {
    if (const Entry* e = doc.find(path)) {
      const long long v = to_integer(e->value, e->line);
      if (v < lo || v > hi) {
        throw ConfigError(path + " must lie in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]", e->line);
      }
      out = static_cast<I>(v);
    }
  }
  int line(const std::string& path) const {
    const Entry* e = doc.find(path);
    return e ? e->line : 0;
  }
};

// Re-raises line-less configuration errors at `line`.
template <class F>
auto at_line(int line, F&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    if (e.line() > 0 || line == 0) throw;
    throw ConfigError(e.what(), line);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what(), line);
  }
}

constexpr double kNormalizationTol = 1e-12;

void check_normalization(const SystemModel& sys, int line) {
  const Vector zero_x = Vector::Zero(sys.n);
  const Vector lam0 = sys.feedback(zero_x);
  if (lam0.norm() > kNormalizationTol) throw ConfigError("lambda(0) must vanish", line);
  if (sys.output(zero_x).norm() > kNormalizationTol) throw ConfigError("h(0) must vanish", line);
  if (sys.flow(zero_x, lam0).norm() > kNormalizationTol) throw ConfigError("f(0, lambda(0)) must vanish", line);
}

}  // namespace

LoopKind parse_loop_kind(const std::string& s) {
  if (s == "templated") return LoopKind::Templated;
  if (s == "sample_hold") return LoopKind::SampleHold;
  if (s == "state_feedback") return LoopKind::StateFeedback;
  throw ConfigError("unknown loop '" + s + "' (templated, sample_hold, state_feedback)");
}

HybridState RunConfig::initial_state(LoopKind kind) const {
  HybridState st = init;
  if (kind == LoopKind::StateFeedback) {
    st.z.resize(0);
  } else if (st.z.size() == 0) {
    st.z = Vector::Zero(system.m * (q + 1));
  }
  st.held.resize(0);
  // The held input that a constant template would apply at t = 0.
  if (kind == LoopKind::SampleHold) st.held = st.mu * st.R.col(0);
  return st;
}

RunConfig parse_config(std::istream& in) {
  const Document doc(in);
  const Reader rd{doc};
  RunConfig cfg;

  // [run]
  rd.integer("run.seed", cfg.seed, 0, std::numeric_limits<long long>::max());
  rd.number("run.t_end", cfg.t_end);
  if (!(cfg.t_end > 0.0)) throw ConfigError("t_end must be positive", rd.line("run.t_end"));
  rd.integer("run.threads", cfg.threads, 1, 4096);
  if (const Entry* e = doc.find("run.loop")) cfg.loop = at_line(e->line, [&] { return parse_loop_kind(e->value); });

  // [system]
  std::optional<BuiltinInstance> builtin;
  if (const Entry* e = doc.find("system.builtin")) {
    for (const char* key : {"name", "n", "p", "m", "f", "h", "lambda", "lyapunov"}) {
      if (doc.has(std::string("system.") + key)) {
        throw ConfigError(std::string("'") + key + "' cannot be combined with 'builtin'", rd.line(std::string("system.") + key));
      }
    }
    builtin = at_line(e->line, [&] { return builtin_system(e->value); });
    cfg.system = builtin->system;
  } else {
    const int sec = doc.section_line("system");
    for (const char* key : {"n", "p", "m", "f", "h", "lambda"}) {
      if (!doc.has(std::string("system.") + key)) {
        throw ConfigError(std::string("[system] needs 'builtin' or '") + key + "'", sec);
      }
    }
    int n = 0, p = 0, m = 0;
    rd.integer("system.n", n, 1, kMaxStateDim);
    rd.integer("system.p", p, 1, kMaxStateDim);
    rd.integer("system.m", m, 1, kMaxStateDim);
    const std::string name = doc.has("system.name") ? doc.find("system.name")->value : "custom";
    auto exprs = [&](const char* key) { return split(doc.find(std::string("system.") + key)->value, ';'); };
    std::optional<std::string> lyap;
    if (const Entry* e = doc.find("system.lyapunov")) lyap = e->value;
    // Expression errors are reported at the line of the first expression list that fails.
    for (const char* key : {"f", "h", "lambda"}) {
      const Entry* e = doc.find(std::string("system.") + key);
      const int want = key[0] == 'f' ? n : (key[0] == 'h' ? m : p);
      const int inputs = key[0] == 'f' ? p : 0;
      const auto list = exprs(key);
      if (static_cast<int>(list.size()) != want) {
        throw ConfigError(std::string(key) + ": expected " + std::to_string(want) + " expressions separated by ';', got " +
                              std::to_string(list.size()),
                          e->line);
      }
      for (const auto& s : list) at_line(e->line, [&] { return Expr::parse(s, n, inputs); });
    }
    if (lyap) at_line(rd.line("system.lyapunov"), [&] { return Expr::parse(*lyap, n, 0); });
    cfg.system = SystemModel::from_sources(name, n, p, m, exprs("f"), exprs("h"), exprs("lambda"), lyap);
  }
  const SystemModel& sys = cfg.system;
  check_normalization(sys, doc.section_line("system"));

  // [spec]
  {
    Box inner = builtin ? builtin->spec.inner : Box{};
    Box outer = builtin ? builtin->spec.outer : Box{};
    int lambda_grid = 0;
    const std::pair<const char*, Vector*> keys[] = {
        {"spec.inner_lo", &inner.lo}, {"spec.inner_hi", &inner.hi}, {"spec.outer_lo", &outer.lo}, {"spec.outer_hi", &outer.hi}};
    for (const auto& [key, target] : keys) {
      if (const Entry* e = doc.find(key)) {
        *target = to_vector(*e, sys.n);
      } else if (!builtin) {
        throw ConfigError(std::string("custom systems need ") + key, doc.section_line("spec"));
      }
    }
    rd.integer("spec.lambda_grid", lambda_grid, 2, 100000);
    int line = doc.section_line("spec");
    cfg.spec = at_line(line, [&] { return CompactSpec::make(sys, inner, outer, lambda_grid); });
  }

  // [template]
  {
    cfg.horizon = builtin ? builtin->horizon : 1.0;
    cfg.coeffs = builtin ? builtin->template_coeffs : Matrix::Zero(sys.p, 1);
    if (!builtin) cfg.coeffs(0, 0) = 1.0;
    rd.number("template.horizon", cfg.horizon);
    if (!(cfg.horizon > 0.0)) throw ConfigError("template horizon must be positive", rd.line("template.horizon"));
    const int line = rd.line("template.coeffs");
    if (const Entry* e = doc.find("template.coeffs")) {
      cfg.coeffs = to_matrix(*e);
      if (cfg.coeffs.rows() != sys.p) {
        throw ConfigError("template needs one coefficient row per input (" + std::to_string(sys.p) + ")", line);
      }
    }
    const bool normalize = doc.has("template.normalize") && to_bool(*doc.find("template.normalize"));
    if (normalize) {
      cfg.coeffs = at_line(line, [&] { return normalize_template(PolynomialSignal(cfg.horizon, cfg.coeffs)).coeffs(); });
    }
    at_line(line, [&] { return cfg.make_template(); });
  }

  // [observer]
  {
    cfg.q = builtin ? builtin->q : 1;
    rd.integer("observer.q", cfg.q, 0, kMaxJetOrder - 1);
    cfg.gains = hurwitz_gains(cfg.q);
    if (const Entry* e = doc.find("observer.gains")) cfg.gains = to_list(*e);
    cfg.thetas = {builtin ? builtin->theta : 10.0};
    if (const Entry* e = doc.find("observer.theta")) cfg.thetas = to_list(*e);
    cfg.deltas = {builtin ? builtin->delta : 0.1};
    if (const Entry* e = doc.find("observer.delta")) cfg.deltas = to_list(*e);
    rd.number("observer.mu_margin", cfg.mu_margin);
    if (!(cfg.mu_margin >= 0.0)) throw ConfigError("mu_margin must be non-negative", rd.line("observer.mu_margin"));

    const int line = doc.section_line("observer");
    if (sys.m * (cfg.q + 1) < sys.n) {
      throw ConfigError("m(q+1) = " + std::to_string(sys.m * (cfg.q + 1)) + " is smaller than n = " +
                            std::to_string(sys.n),
                        rd.line("observer.q") ? rd.line("observer.q") : line);
    }
    for (double theta : cfg.thetas) {
      for (double delta : cfg.deltas) {
        at_line(rd.line("observer.gains") ? rd.line("observer.gains") : line, [&] {
          cfg.observer(theta, delta).validate();
          return 0;
        });
        if (delta > cfg.horizon) {
          throw ConfigError("delta = " + std::to_string(delta) + " exceeds the template horizon",
                            rd.line("observer.delta") ? rd.line("observer.delta") : line);
        }
      }
    }
  }

  // [integrator]
  rd.number("integrator.step", cfg.integ.step);
  if (!(cfg.integ.step > 0.0)) throw ConfigError("integrator step must be positive", rd.line("integrator.step"));
  rd.integer("integrator.stride", cfg.integ.stride, 1, 1000000);
  for (double theta : cfg.thetas) {
    if (cfg.integ.step > 0.1 / theta) {
      cfg.warnings.push_back("integrator step " + std::to_string(cfg.integ.step) + " exceeds 0.1/theta for theta = " +
                             std::to_string(theta));
    }
  }

  // [init]
  {
    cfg.init = HybridState::zero(sys, cfg.q, 0.0, false);
    if (const Entry* e = doc.find("init.x")) cfg.init.x = to_vector(*e, sys.n);
    if (const Entry* e = doc.find("init.z")) cfg.init.z = to_vector(*e, sys.m * (cfg.q + 1));
    rd.number("init.s", cfg.init.s);
    for (double delta : cfg.deltas) {
      if (cfg.init.s < 0.0 || cfg.init.s > delta) throw ConfigError("init.s must lie in [0, delta]", rd.line("init.s"));
    }
    rd.number("init.mu", cfg.init.mu);
    if (cfg.init.mu < 0.0) throw ConfigError("init.mu must be non-negative", rd.line("init.mu"));
    if (const Entry* e = doc.find("init.R")) {
      cfg.init.R = to_matrix(*e);
      if (cfg.init.R.rows() != sys.p || cfg.init.R.cols() != sys.p) throw ConfigError("init.R must be p x p", e->line);
      const double err = (cfg.init.R.transpose() * cfg.init.R - Matrix::Identity(sys.p, sys.p)).cwiseAbs().maxCoeff();
      if (err > 1e-10) throw ConfigError("init.R must be orthogonal", e->line);
    }
  }

  // [certify]
  {
    GridParams& g = cfg.grid;
    rd.integer("certify.x_points", g.x_points, 1, 10000);
    rd.integer("certify.t_points", g.t_points, 1, 10000);
    rd.integer("certify.mu_points", g.mu_points, 1, 10000);
    if (const Entry* e = doc.find("certify.extra_mu")) g.extra_mu = to_list(*e);
    rd.integer("certify.structured_rotations", g.structured_rotations, 0, 10000);
    rd.integer("certify.random_rotations", g.random_rotations, 0, 10000);
    rd.number("certify.min_margin", g.min_margin);
    g.seed = cfg.seed;
  }

  // [search]
  {
    SearchParams& s = cfg.search;
    rd.integer("search.degree", s.degree, 0, kMaxJetOrder);
    rd.integer("search.attempts", s.attempts, 1, 1000000);
    rd.number("search.radius", s.radius);
    rd.number("search.shrink", s.shrink);
    if (!(s.radius >= 0.0)) throw ConfigError("search radius must be non-negative", rd.line("search.radius"));
    if (!(s.shrink > 0.0 && s.shrink <= 1.0)) throw ConfigError("search shrink must lie in (0, 1]", rd.line("search.shrink"));
    s.seed = cfg.seed;
  }
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  return parse_config(in);
}

}  // namespace tfl
