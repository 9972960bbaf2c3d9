#include "rsg/cli.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "rsg/dumpstore.hpp"
#include "rsg/file_util.hpp"
#include "rsg/pipeline.hpp"
#include "rsg/report.hpp"
#include "rsg/synth.hpp"

namespace rsg::cli {
namespace {

namespace fs = std::filesystem;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  std::replace(s.begin(), s.end(), '\r', ' ');
  return s;
}

void report_error(std::ostream& err, const char* kind, const std::string& msg) {
  err << "rsg: error: " << kind << ": " << one_line(msg) << '\n';
}

double parse_number(const std::string& s, const char* what) {
  double v = 0.0;
  const char* end = s.data() + s.size();
  const auto res = std::from_chars(s.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end) {
    throw UsageError(std::string("cannot parse ") + what + " value '" + s + "'");
  }
  return v;
}

// "2" or "0.5:2".
synth::Range parse_range(const std::string& s, const char* what) {
  const auto colon = s.find(':');
  if (colon == std::string::npos) return synth::Range::fixed(parse_number(s, what));
  return {parse_number(s.substr(0, colon), what), parse_number(s.substr(colon + 1), what)};
}

std::vector<double> parse_list(const std::string& s, const char* what) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number(item, what));
  if (out.empty()) throw UsageError(std::string("empty ") + what + " list");
  return out;
}

struct AnalyzeArgs {
  std::string dump;
  std::string out;
  std::string csv_dir;
  double deep_frac = 0.2;
  std::string filter = "compliant";
  std::string pooling = "pooled";
  unsigned threads = 1;
};

struct SimulateArgs {
  std::string mode = "dilution";
  std::size_t dim = 64;
  std::size_t layers = 8;
  std::size_t trials = 10;
  double alpha = 10.0;
  std::string beta = "2";
  std::string theta = "90";
  double noise = 0.0;
  std::uint64_t seed = 0;
  std::string out;
  unsigned threads = 1;
};

struct SweepArgs {
  std::string kind;
  std::string out;
  std::size_t dim = 64;
  std::uint64_t seed = 0;
  double alpha = 10.0;
  std::string betas = "0,0.5,1,2,5,10";
  double overlap = 0.0;
  std::string scales = "0.1,0.05,0.025";
};

int do_validate(const std::string& path, std::ostream& out, std::ostream& err) {
  const ValidationReport report = validate_dump(path);
  if (report.empty()) {
    out << "valid: " << path << '\n';
    return kOk;
  }
  for (const Violation& v : report) err << "rsg: violation: " << one_line(to_string(v)) << '\n';
  report_error(err, "invalid-dump", std::to_string(report.size()) + " violation(s) in " + path);
  return kFailure;
}

int do_analyze(const AnalyzeArgs& a, std::ostream& out, std::ostream& err) {
  AnalysisConfig cfg;
  cfg.deep_frac = a.deep_frac;
  cfg.threads = a.threads;
  const auto filter = parse_filter_mode(a.filter);
  if (!filter) throw UsageError("unknown filter mode '" + a.filter + "'");
  cfg.filter = *filter;
  const auto pooling = parse_pooling(a.pooling);
  if (!pooling) throw UsageError("unknown pooling mode '" + a.pooling + "'");
  cfg.pooling = *pooling;
  if (!(cfg.deep_frac > 0.0 && cfg.deep_frac <= 1.0)) {
    throw UsageError("--deep-frac must lie in (0, 1]");
  }

  const DumpSet dump = read_dump(a.dump);
  const AnalysisReport report = analyze(dump, cfg);

  nlohmann::ordered_json inputs{{"dump_path", a.dump},
                                {"dump_attributes", nlohmann::ordered_json::parse(dump.attributes.dump())}};
  write_file_atomic(a.out, report_to_json(report, inputs).dump(2) + "\n");
  if (!a.csv_dir.empty()) {
    fs::create_directories(a.csv_dir);
    write_file_atomic(fs::path(a.csv_dir) / "layers.csv", layer_table_csv(report));
    write_file_atomic(fs::path(a.csv_dir) / "scatter.csv", scatter_csv(report));
  }

  out << "analyzed " << report.analyzed_trials.size() << " of " << report.filter.n_total
      << " trials (" << report.filter.compliant.size() << " compliant); report: " << a.out << '\n';
  if (report.analyzed_trials.empty()) {
    report_error(err, "no-trials", "no trials selected for analysis (filter=" + a.filter + ")");
    return kNoTrials;
  }
  return kOk;
}

int do_simulate(const SimulateArgs& a, std::ostream& out) {
  synth::SyntheticConfig cfg;
  const auto mode = synth::parse_mode(a.mode);
  if (!mode) throw UsageError("unknown mode '" + a.mode + "'");
  cfg.mode = *mode;
  cfg.d = a.dim;
  cfg.n_layers = a.layers;
  cfg.n_trials = a.trials;
  cfg.alpha = a.alpha;
  cfg.beta = parse_range(a.beta, "--beta");
  cfg.theta_deg = parse_range(a.theta, "--theta");
  cfg.sigma_noise = a.noise;
  cfg.seed = a.seed;
  synth::validate(cfg);
  write_dump(synth::gen_dump(cfg, a.threads), a.out);
  out << "wrote " << cfg.n_trials << " synthetic trials (" << synth::to_string(cfg.mode) << ") to "
      << a.out << '\n';
  return kOk;
}

int do_sweep(const SweepArgs& a, std::ostream& out) {
  std::string csv;
  if (a.kind == "dilution") {
    synth::SyntheticConfig cfg;
    cfg.mode = synth::Mode::dilution;
    cfg.d = a.dim;
    cfg.alpha = a.alpha;
    cfg.seed = a.seed;
    csv = synth::beta_sweep_csv(synth::beta_sweep(cfg, parse_list(a.betas, "--betas"), a.overlap));
  } else if (a.kind == "linearization") {
    csv = synth::convergence_csv(
        synth::linearization_convergence(a.dim, a.seed, parse_list(a.scales, "--scales")));
  } else {
    throw UsageError("unknown sweep kind '" + a.kind + "'");
  }
  write_file_atomic(a.out, csv);
  out << "wrote " << a.kind << " sweep to " << a.out << '\n';
  return kOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Residual-stream geometry analysis for paired neutral/conflict activation dumps",
               "rsg"};
  app.require_subcommand(1);

  std::string validate_path;
  auto* validate_cmd = app.add_subcommand("validate", "Check an RSGD dump directory");
  validate_cmd->add_option("dir", validate_path, "Dump directory")->required();

  AnalyzeArgs an;
  auto* analyze_cmd = app.add_subcommand("analyze", "Filter, scan and test a dump");
  analyze_cmd->add_option("dir", an.dump, "Dump directory")->required();
  analyze_cmd->add_option("--out", an.out, "Report JSON path")->required();
  analyze_cmd->add_option("--csv", an.csv_dir, "Directory for layers.csv and scatter.csv");
  analyze_cmd->add_option("--deep-frac", an.deep_frac, "Fraction of final layers treated as deep")
      ->capture_default_str();
  analyze_cmd->add_option("--filter", an.filter, "compliant | all")->capture_default_str();
  analyze_cmd->add_option("--pooling", an.pooling, "pooled | per-trial")->capture_default_str();
  analyze_cmd->add_option("--threads", an.threads, "Worker threads (results are identical)")
      ->check(CLI::PositiveNumber);

  SimulateArgs sim;
  auto* simulate_cmd = app.add_subcommand("simulate", "Write a synthetic dump");
  simulate_cmd->add_option("--mode", sim.mode, "dilution | rotation | antiparallel | general")
      ->capture_default_str();
  simulate_cmd->add_option("--dim", sim.dim, "Model dimension")->capture_default_str();
  simulate_cmd->add_option("--layers", sim.layers, "Number of layers")->capture_default_str();
  simulate_cmd->add_option("--trials", sim.trials, "Number of trials")->capture_default_str();
  simulate_cmd->add_option("--alpha", sim.alpha, "Base state magnitude")->capture_default_str();
  simulate_cmd->add_option("--beta", sim.beta, "Interference magnitude, value or lo:hi")
      ->capture_default_str();
  simulate_cmd->add_option("--theta", sim.theta, "Angle to w_correct in degrees, value or lo:hi")
      ->capture_default_str();
  simulate_cmd->add_option("--noise", sim.noise, "Per-component Gaussian noise sigma")
      ->capture_default_str();
  simulate_cmd->add_option("--seed", sim.seed, "Seed")->capture_default_str();
  simulate_cmd->add_option("--out", sim.out, "Output dump directory")->required();
  simulate_cmd->add_option("--threads", sim.threads, "Worker threads (results are identical)")
      ->check(CLI::PositiveNumber);

  SweepArgs sw;
  auto* sweep_cmd = app.add_subcommand("sweep", "Closed-form vs exact sweeps");
  sweep_cmd->add_option("--kind", sw.kind, "dilution | linearization")->required();
  sweep_cmd->add_option("--out", sw.out, "Output CSV path")->required();
  sweep_cmd->add_option("--dim", sw.dim, "Dimension")->capture_default_str();
  sweep_cmd->add_option("--seed", sw.seed, "Seed")->capture_default_str();
  sweep_cmd->add_option("--alpha", sw.alpha, "Base state magnitude (dilution)")->capture_default_str();
  sweep_cmd->add_option("--betas", sw.betas, "Comma-separated betas (dilution)")->capture_default_str();
  sweep_cmd->add_option("--overlap", sw.overlap, "cos(x_base, w_wrong) (dilution)")
      ->capture_default_str();
  sweep_cmd->add_option("--scales", sw.scales, "Comma-separated descending scales (linearization)")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    report_error(err, "usage", e.what());
    err << app.help();
    return kUsage;
  }

  try {
    if (*validate_cmd) return do_validate(validate_path, out, err);
    if (*analyze_cmd) return do_analyze(an, out, err);
    if (*simulate_cmd) return do_simulate(sim, out);
    if (*sweep_cmd) return do_sweep(sw, out);
  } catch (const UsageError& e) {
    report_error(err, "usage", e.what());
    return kUsage;
  } catch (const synth::ConfigError& e) {
    report_error(err, "invalid-config", e.what());
    return kUsage;
  } catch (const DumpError& e) {
    report_error(err, "invalid-dump", e.what());
    return kFailure;
  } catch (const PipelineError& e) {
    report_error(err, "analysis", e.what());
    return kFailure;
  } catch (const IoError& e) {
    report_error(err, "io", e.what());
    return kFailure;
  } catch (const fs::filesystem_error& e) {
    report_error(err, "io", e.what());
    return kFailure;
  } catch (const std::exception& e) {
    report_error(err, "internal", e.what());
    return kFailure;
  }
  return kUsage;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv{"rsg"};
  for (const std::string& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace rsg::cli
