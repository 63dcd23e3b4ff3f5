#include "tfl/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <ostream>

#include "CLI11.hpp"
#include "tfl/analysis.hpp"
#include "tfl/config.hpp"
#include "tfl/errors.hpp"
#include "tfl/format.hpp"
#include "tfl/parallel.hpp"

namespace tfl {

namespace {

namespace fs = std::filesystem;

int resolve_threads(const CliOptions& opt, const RunConfig& cfg) {
  if (opt.threads) return std::max(*opt.threads, 1);
  if (cfg.threads > 0) return cfg.threads;
  if (const char* env = std::getenv("LAB_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  return 1;
}

std::ofstream open_output(const fs::path& dir, const std::string& name) {
  std::ofstream out(dir / name, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
  return out;
}

void write_json(const fs::path& dir, const std::string& name, const nlohmann::json& j) {
  auto out = open_output(dir, name);
  out << j.dump(2) << '\n';
}

std::string rate_field(const std::optional<DecayFit>& fit) {
  return fit ? format_double(fit->nu) : "undefined";
}

struct LoopRun {
  HybridArc arc;
  ArcSummary summary;
};

LoopRun run_loop(const RunConfig& cfg, LoopKind kind, double theta, double delta) {
  const ControlTemplate tmpl = cfg.make_template();
  const HybridState init = cfg.initial_state(kind);
  LoopRun r;
  switch (kind) {
    case LoopKind::Templated:
      r.arc = simulate(cfg.system, cfg.spec, tmpl, cfg.observer(theta, delta), init, cfg.t_end, cfg.integ,
                       cfg.loop_options());
      break;
    case LoopKind::SampleHold:
      r.arc = simulate_sample_hold(cfg.system, cfg.spec, cfg.observer(theta, delta), init, cfg.t_end, cfg.integ,
                                   cfg.loop_options());
      break;
    case LoopKind::StateFeedback:
      r.arc = simulate_state_feedback(cfg.system, cfg.spec, tmpl, delta, init, cfg.t_end, cfg.integ,
                                      cfg.loop_options());
      break;
  }
  r.summary = summarize(r.arc, cfg.system, cfg.spec, &tmpl);
  return r;
}

int cmd_simulate(const RunConfig& cfg, const fs::path& out, std::ostream& log) {
  const double theta = cfg.thetas.front();
  const double delta = cfg.deltas.front();
  const LoopRun r = run_loop(cfg, cfg.loop, theta, delta);
  {
    auto csv = open_output(out, "arc.csv");
    write_arc_csv(r.arc, csv);
  }
  nlohmann::json j = to_json(r.summary);
  j["loop"] = to_string(cfg.loop);
  j["system"] = cfg.system.name;
  j["theta"] = theta;
  j["delta"] = delta;
  j["q"] = cfg.q;
  j["seed"] = cfg.seed;
  j["jumps"] = r.arc.jumps.size();
  write_json(out, "analysis.json", j);
  log << "simulate: " << to_string(cfg.loop) << " nu_x=" << rate_field(r.summary.x_fit)
      << " contained=" << (r.summary.containment.contained ? "true" : "false") << '\n';
  return r.arc.escaped || !r.summary.containment.contained ? kExitEscape : kExitOk;
}

int cmd_certify(const RunConfig& cfg, int threads, const fs::path& out, std::ostream& log) {
  GridParams grid = cfg.grid;
  grid.threads = threads;
  const CertificationReport rep = certify_template(cfg.system, cfg.spec, cfg.make_template(), cfg.q, grid);
  write_json(out, "certification.json", to_json(rep));
  log << "certify: passed=" << (rep.passed ? "true" : "false") << " rho1=" << format_double(rep.rho1)
      << " rho2=" << format_double(rep.rho2) << '\n';
  return rep.passed ? kExitOk : kExitFailed;
}

int cmd_search(const RunConfig& cfg, int threads, const fs::path& out, std::ostream& log) {
  GridParams grid = cfg.grid;
  grid.threads = threads;
  const SearchResult res = search_template(cfg.system, cfg.spec, cfg.make_template(), cfg.q, grid, cfg.search);
  nlohmann::json t = to_json(res.tmpl);
  t["found"] = res.found;
  t["attempt"] = res.attempt;
  t["seed"] = cfg.seed;
  write_json(out, "template.json", t);
  write_json(out, "certification.json", to_json(res.report));
  log << "search: found=" << (res.found ? "true" : "false") << " attempt=" << res.attempt << '\n';
  return res.found ? kExitOk : kExitFailed;
}

int cmd_sweep(const RunConfig& cfg, int threads, const fs::path& out, std::ostream& log) {
  struct Cell {
    double theta;
    double delta;
    ArcSummary summary;
  };
  std::vector<Cell> cells;
  for (double theta : cfg.thetas) {
    for (double delta : cfg.deltas) cells.push_back({theta, delta, {}});
  }
  // Cells share nothing; the simulation itself draws no random numbers.
  parallel_for(cells.size(), threads, [&](std::size_t k) {
    cells[k].summary = run_loop(cfg, cfg.loop, cells[k].theta, cells[k].delta).summary;
  });
  auto csv = open_output(out, "sweep.csv");
  csv << "cell,theta,delta,nu_x,nu_e,contained,clamp_events,phi_failures,final_x_norm\n";
  for (std::size_t k = 0; k < cells.size(); ++k) {
    const auto& c = cells[k];
    csv << k << ',' << format_double(c.theta) << ',' << format_double(c.delta) << ',' << rate_field(c.summary.x_fit)
        << ',' << rate_field(c.summary.e_fit) << ',' << (c.summary.containment.contained ? 1 : 0) << ','
        << c.summary.clamp_events << ',' << c.summary.phi_failures << ',' << format_double(c.summary.final_x_norm)
        << '\n';
  }
  log << "sweep: " << cells.size() << " cells\n";
  return kExitOk;
}

int cmd_compare(const RunConfig& cfg, int threads, const fs::path& out, std::ostream& log) {
  const LoopKind kinds[] = {LoopKind::Templated, LoopKind::SampleHold, LoopKind::StateFeedback};
  std::vector<ArcSummary> rows(3);
  parallel_for(3, threads, [&](std::size_t k) {
    rows[k] = run_loop(cfg, kinds[k], cfg.thetas.front(), cfg.deltas.front()).summary;
  });
  auto csv = open_output(out, "compare.csv");
  csv << "variant,nu_x,nu_e,contained\n";
  for (std::size_t k = 0; k < 3; ++k) {
    csv << to_string(kinds[k]) << ',' << rate_field(rows[k].x_fit) << ',' << rate_field(rows[k].e_fit) << ','
        << (rows[k].containment.contained ? 1 : 0) << '\n';
  }
  log << "compare: 3 variants\n";
  return kExitOk;
}

}  // namespace

int run_command(const CliOptions& options, std::ostream& log) {
  RunConfig cfg;
  try {
    cfg = load_config(options.config);
    if (options.seed) cfg.set_seed(*options.seed);
  } catch (const ConfigError& e) {
    log << "config error: " << options.config << ": " << e.what() << '\n';
    return kExitConfig;
  }
  for (const auto& w : cfg.warnings) log << "warning: " << w << '\n';
  const int threads = resolve_threads(options, cfg);
  try {
    const fs::path out(options.out);
    fs::create_directories(out);
    if (options.command == "simulate") return cmd_simulate(cfg, out, log);
    if (options.command == "certify") return cmd_certify(cfg, threads, out, log);
    if (options.command == "search") return cmd_search(cfg, threads, out, log);
    if (options.command == "sweep") return cmd_sweep(cfg, threads, out, log);
    if (options.command == "compare") return cmd_compare(cfg, threads, out, log);
    log << "unknown command '" << options.command << "'\n";
    return kExitConfig;
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Templated output-feedback laboratory"};
  app.require_subcommand(1);
  CliOptions opt;
  std::uint64_t seed = 0;
  int threads = 0;
  for (const char* name : {"simulate", "certify", "search", "sweep", "compare"}) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", opt.config, "run configuration file")->required();
    sub->add_option("--out", opt.out, "output directory");
    sub->add_option("--seed", seed, "seed overriding the configuration");
    sub->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }
  CLI::App* sub = app.get_subcommands().front();
  opt.command = sub->get_name();
  if (sub->count("--seed")) opt.seed = seed;
  if (sub->count("--threads")) opt.threads = threads;
  return run_command(opt, err);
}

}  // namespace tfl
