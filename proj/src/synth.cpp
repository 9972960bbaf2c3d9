#include "rsg/synth.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <sstream>

#include "parallel.hpp"
#include "rsg/file_util.hpp"

namespace rsg::synth {
namespace {

using geom::Vec;

constexpr double kDegToRad = std::numbers::pi / 180.0;

// Seeded source with platform-independent uniform and Gaussian draws.
class Stream {
 public:
  Stream(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream),
                      static_cast<std::uint32_t>(stream >> 32)};
    engine_.seed(seq);
  }

  // Uniform on (0, 1].
  double uniform() { return static_cast<double>((engine_() >> 11) + 1) * 0x1.0p-53; }

  double uniform_in(const Range& r) {
    const double t = uniform();
    return r.lo == r.hi ? r.lo : r.lo + (r.hi - r.lo) * t;
  }

  double gaussian() {
    if (spare_) {
      const double out = *spare_;
      spare_.reset();
      return out;
    }
    const double radius = std::sqrt(-2.0 * std::log(uniform()));
    const double angle = 2.0 * std::numbers::pi * uniform();
    spare_ = radius * std::sin(angle);
    return radius * std::cos(angle);
  }

  Vec gaussian_vec(std::size_t d) {
    Vec out(d);
    for (double& x : out) x = gaussian();
    return out;
  }

 private:
  std::mt19937_64 engine_;
  std::optional<double> spare_;
};

void subtract_projection(Vec& v, const Vec& unit) {
  const double along = geom::dot(v, unit);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] -= along * unit[i];
}

Frame frame_from(Stream& rng, std::size_t d) {
  Frame f;
  f.u = geom::normalize_direction(rng.gaussian_vec(d));
  Vec v = rng.gaussian_vec(d);
  // Second pass removes the residual overlap left by rounding.
  subtract_projection(v, f.u);
  subtract_projection(v, f.u);
  f.v = geom::normalize_direction(v);
  return f;
}

Vec combine(double a, const Vec& x, double b, const Vec& y) {
  Vec out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * x[i] + b * y[i];
  return out;
}

std::vector<float> narrow(const Vec& v) { return std::vector<float>(v.begin(), v.end()); }

Vec widen(std::span<const float> v) { return Vec(v.begin(), v.end()); }

double rotation_angle(double alpha, double beta) { return 2.0 * std::asin(beta / (2.0 * alpha)); }

nlohmann::json opt_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

nlohmann::json ground_truth_json(const GroundTruth& g, bool compliant) {
  return {{"beta", g.beta},
          {"theta_deg", g.theta_deg},
          {"gamma", g.gamma},
          {"cos_delta_wcorrect", opt_json(g.cos_delta_wcorrect)},
          {"cos_delta_wadversarial", opt_json(g.cos_delta_wadversarial)},
          {"l_base", g.l_base},
          {"l_new", g.l_new},
          {"flip_margin", g.flip_margin},
          {"flip_expected", g.flip_margin > 0.0},
          {"compliant", compliant}};
}

Trial make_trial(const SyntheticConfig& cfg, std::size_t index) {
  Stream rng(cfg.seed, index);
  const Frame frame = frame_from(rng, cfg.d);
  const double beta = rng.uniform_in(cfg.beta);
  const double theta_deg = rng.uniform_in(cfg.theta_deg);
  const GroundTruth truth = ground_truth(cfg, beta, theta_deg);

  Vec delta_fixed;
  switch (cfg.mode) {
    case Mode::dilution:
      delta_fixed = combine(0.0, frame.u, beta, frame.v);
      break;
    case Mode::rotation: {
      const double psi = rotation_angle(cfg.alpha, beta);
      delta_fixed = combine(cfg.alpha * (std::cos(psi) - 1.0), frame.u,
                            cfg.alpha * std::sin(psi), frame.v);
      break;
    }
    case Mode::general: {
      const double theta = theta_deg * kDegToRad;
      delta_fixed = combine(beta * std::cos(theta), frame.u, beta * std::sin(theta), frame.v);
      break;
    }
    case Mode::antiparallel:
      break;  // depends on the (possibly noisy) base state
  }

  Trial t;
  char id[32];
  std::snprintf(id, sizeof(id), "t%06zu", index);
  t.meta.trial_id = id;
  std::snprintf(id, sizeof(id), "synthetic-%06zu", index);
  t.meta.question_id = id;
  t.meta.prior_id = to_string(cfg.mode);
  t.meta.option_labels = {"A", "B"};
  t.meta.correct_index = 0;
  t.meta.adversarial_index = 1;
  t.meta.blobs = default_blob_names(t.meta.trial_id);
  t.w_correct = narrow(frame.u);
  t.w_adversarial = narrow(frame.v);
  t.base_states.reserve(cfg.n_layers * cfg.d);
  t.conflict_states.reserve(cfg.n_layers * cfg.d);

  for (std::size_t layer = 0; layer < cfg.n_layers; ++layer) {
    Vec x_base = combine(cfg.alpha, frame.u, 0.0, frame.v);
    if (cfg.sigma_noise > 0.0) {
      const Vec noise = rng.gaussian_vec(cfg.d);
      for (std::size_t i = 0; i < cfg.d; ++i) x_base[i] += cfg.sigma_noise * noise[i];
    }
    Vec delta = delta_fixed;
    if (cfg.mode == Mode::antiparallel) {
      const double n = geom::norm(x_base);
      delta = combine(-beta / n, x_base, 0.0, x_base);
    }
    if (cfg.sigma_noise > 0.0) {
      const Vec noise = rng.gaussian_vec(cfg.d);
      for (std::size_t i = 0; i < cfg.d; ++i) delta[i] += cfg.sigma_noise * noise[i];
    }
    for (std::size_t i = 0; i < cfg.d; ++i) {
      t.base_states.push_back(static_cast<float>(x_base[i]));
      t.conflict_states.push_back(static_cast<float>(x_base[i] + delta[i]));
    }
  }

  const std::size_t last = cfg.n_layers - 1;
  const Vec xb = widen(t.base_row(last));
  const Vec xn = widen(t.conflict_row(last));
  t.final_logits_base = {static_cast<float>(geom::logit(xb, frame.u)),
                         static_cast<float>(geom::logit(xb, frame.v))};
  t.final_logits_conflict = {static_cast<float>(geom::logit(xn, frame.u)),
                             static_cast<float>(geom::logit(xn, frame.v))};
  const bool compliant = t.final_logits_base[0] > t.final_logits_base[1] &&
                         t.final_logits_conflict[1] > t.final_logits_conflict[0];
  if (cfg.sigma_noise == 0.0 && std::abs(truth.flip_margin) > 1e-5 &&
      compliant != (truth.flip_margin > 0.0)) {
    throw std::logic_error("synthetic trial " + t.meta.trial_id +
                           ": stored logits disagree with the closed-form flip condition");
  }
  t.meta.attributes = {{"ground_truth", ground_truth_json(truth, compliant)}};
  return t;
}

void check_scales(std::span<const double> scales) {
  for (std::size_t i = 0; i < scales.size(); ++i) {
    if (!(scales[i] >= 0.0) || !std::isfinite(scales[i])) {
      throw ConfigError("scales must be finite and non-negative");
    }
    if (i > 0 && !(scales[i] < scales[i - 1])) {
      throw ConfigError("scales must be strictly descending");
    }
  }
}

}  // namespace

const char* to_string(Mode m) {
  switch (m) {
    case Mode::dilution: return "dilution";
    case Mode::rotation: return "rotation";
    case Mode::antiparallel: return "antiparallel";
    case Mode::general: return "general";
  }
  return "unknown";
}

std::optional<Mode> parse_mode(std::string_view s) {
  for (Mode m : {Mode::dilution, Mode::rotation, Mode::antiparallel, Mode::general}) {
    if (s == to_string(m)) return m;
  }
  return std::nullopt;
}

void validate(const SyntheticConfig& cfg) {
  auto fail = [](const std::string& msg) { throw ConfigError("invalid synthetic config: " + msg); };
  auto finite_range = [](const Range& r) {
    return std::isfinite(r.lo) && std::isfinite(r.hi) && r.lo <= r.hi;
  };
  if (cfg.d < 3) fail("d must be >= 3");
  if (cfg.n_layers < 1) fail("n_layers must be >= 1");
  if (!(cfg.alpha > 0.0) || !std::isfinite(cfg.alpha)) fail("alpha must be finite and > 0");
  if (!finite_range(cfg.beta) || cfg.beta.lo < 0.0) fail("beta must be a finite range >= 0");
  if (!finite_range(cfg.theta_deg) || cfg.theta_deg.lo < 0.0 || cfg.theta_deg.hi > 180.0) {
    fail("theta must lie in [0, 180] degrees");
  }
  if (!(cfg.sigma_noise >= 0.0) || !std::isfinite(cfg.sigma_noise)) {
    fail("noise must be finite and >= 0");
  }
  if (cfg.mode == Mode::rotation && cfg.beta.hi > 2.0 * cfg.alpha) {
    fail("rotation mode needs beta <= 2 alpha (beta is the chord length)");
  }
  if (cfg.mode == Mode::antiparallel && !(cfg.beta.hi < cfg.alpha)) {
    fail("antiparallel mode needs beta < alpha");
  }
}

nlohmann::json to_json(const SyntheticConfig& cfg) {
  return {{"mode", to_string(cfg.mode)},
          {"d", cfg.d},
          {"n_layers", cfg.n_layers},
          {"n_trials", cfg.n_trials},
          {"alpha", cfg.alpha},
          {"beta", {cfg.beta.lo, cfg.beta.hi}},
          {"theta_deg", {cfg.theta_deg.lo, cfg.theta_deg.hi}},
          {"sigma_noise", cfg.sigma_noise},
          {"seed", cfg.seed},
          {"frame", "gram-schmidt/mt19937_64"}};
}

GroundTruth ground_truth(const SyntheticConfig& cfg, double beta, double theta_deg) {
  const double a = cfg.alpha;
  GroundTruth g;
  g.beta = beta;
  g.theta_deg = theta_deg;
  g.l_base = 1.0;
  const bool moved = beta > 0.0;
  switch (cfg.mode) {
    case Mode::dilution: {
      const double n = std::hypot(a, beta);
      g.gamma = a / n;
      if (moved) {
        g.cos_delta_wcorrect = 0.0;
        g.cos_delta_wadversarial = 1.0;
      }
      g.l_new = geom::dilution_predict(1.0, beta / a);
      g.flip_margin = (beta - a) / n;
      break;
    }
    case Mode::rotation: {
      const double psi = rotation_angle(a, beta);
      g.gamma = 1.0;
      if (moved) {
        g.cos_delta_wcorrect = -std::sin(psi / 2.0);
        g.cos_delta_wadversarial = std::cos(psi / 2.0);
      }
      g.l_new = std::cos(psi);
      g.flip_margin = std::sin(psi) - std::cos(psi);
      break;
    }
    case Mode::antiparallel:
      g.gamma = a / (a - beta);
      if (moved) {
        g.cos_delta_wcorrect = -1.0;
        g.cos_delta_wadversarial = 0.0;
      }
      g.l_new = 1.0;
      g.flip_margin = -1.0;
      break;
    case Mode::general: {
      const double theta = theta_deg * kDegToRad;
      const double c = std::cos(theta);
      const double s = std::sin(theta);
      const double n = std::sqrt(a * a + 2.0 * a * beta * c + beta * beta);
      g.gamma = a / n;
      if (moved) {
        g.cos_delta_wcorrect = c;
        g.cos_delta_wadversarial = s;
      }
      g.l_new = (a + beta * c) / n;
      g.flip_margin = (beta * s - a - beta * c) / n;
      break;
    }
  }
  return g;
}

Frame draw_frame(std::size_t d, std::uint64_t seed, std::uint64_t stream) {
  Stream rng(seed, stream);
  return frame_from(rng, d);
}

DumpSet gen_dump(const SyntheticConfig& cfg, unsigned threads) {
  validate(cfg);
  DumpSet dump;
  dump.model_name = "synthetic";
  dump.d_model = cfg.d;
  dump.n_layers = cfg.n_layers;
  dump.attributes = {{"generator", to_json(cfg)}};
  dump.trials.resize(cfg.n_trials);
  detail::parallel_for(cfg.n_trials, threads,
                       [&](std::size_t i) { dump.trials[i] = make_trial(cfg, i); });
  return dump;
}

std::vector<BetaSweepRow> beta_sweep(const SyntheticConfig& cfg, std::span<const double> betas,
                                     double wrong_overlap) {
  validate(cfg);
  if (cfg.mode != Mode::dilution) throw ConfigError("beta_sweep requires dilution mode");
  if (!(std::abs(wrong_overlap) < 1.0)) throw ConfigError("wrong_overlap must lie in (-1, 1)");

  const Frame f = draw_frame(cfg.d, cfg.seed, 0);
  const Vec x_base = combine(cfg.alpha, f.u, 0.0, f.v);
  const Vec w_wrong =
      combine(wrong_overlap, f.u, std::sqrt(1.0 - wrong_overlap * wrong_overlap), f.v);
  const double l_base = geom::logit(x_base, f.u);
  const double ratio = geom::norm(w_wrong) / geom::norm(x_base);

  std::vector<BetaSweepRow> rows;
  for (double beta : betas) {
    if (!(beta >= 0.0)) throw ConfigError("beta values must be >= 0");
    BetaSweepRow row;
    row.beta = beta;
    row.l_exact = geom::logit(combine(1.0, x_base, beta, w_wrong), f.u);
    row.l_predicted = geom::dilution_predict(l_base, beta * ratio);
    row.abs_err = std::abs(row.l_exact - row.l_predicted);
    rows.push_back(row);
  }
  return rows;
}

std::vector<ConvergenceRow> linearization_errors(geom::ConstVec x, geom::ConstVec w,
                                                 geom::ConstVec direction,
                                                 std::span<const double> scales) {
  check_scales(scales);
  const Vec dir = geom::normalize_direction(direction);
  const double x_norm = geom::norm(x);
  const double l0 = geom::logit(x, w);

  std::vector<ConvergenceRow> rows;
  for (double s : scales) {
    Vec delta(dir.size()), moved(dir.size());
    for (std::size_t i = 0; i < dir.size(); ++i) {
      delta[i] = s * x_norm * dir[i];
      moved[i] = x[i] + delta[i];
    }
    ConvergenceRow row;
    row.scale = s;
    const double exact = geom::logit(moved, w) - l0;
    row.abs_err = std::abs(exact - geom::linearized_logit_delta(x, delta, w).total);
    if (!rows.empty() && rows.back().abs_err > 0.0) row.ratio = row.abs_err / rows.back().abs_err;
    rows.push_back(row);
  }
  return rows;
}

std::vector<ConvergenceRow> linearization_convergence(std::size_t d, std::uint64_t seed,
                                                      std::span<const double> scales) {
  if (d < 2) throw ConfigError("linearization_convergence needs d >= 2");
  Stream rng(seed, 0);
  const Vec x = rng.gaussian_vec(d);
  const Vec w = rng.gaussian_vec(d);
  const Vec dir = geom::tangent_project(x, rng.gaussian_vec(d));
  return linearization_errors(x, w, dir, scales);
}

std::string beta_sweep_csv(std::span<const BetaSweepRow> rows) {
  std::ostringstream out;
  out << "beta,l_exact,l_predicted,abs_err\n";
  for (const auto& r : rows) {
    out << format_double(r.beta) << ',' << format_double(r.l_exact) << ','
        << format_double(r.l_predicted) << ',' << format_double(r.abs_err) << '\n';
  }
  return out.str();
}

std::string convergence_csv(std::span<const ConvergenceRow> rows) {
  std::ostringstream out;
  out << "scale,abs_err,ratio\n";
  for (const auto& r : rows) {
    out << format_double(r.scale) << ',' << format_double(r.abs_err) << ','
        << (r.ratio ? format_double(*r.ratio) : "") << '\n';
  }
  return out.str();
}

}  // namespace rsg::synth
