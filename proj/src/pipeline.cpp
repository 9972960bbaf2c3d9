#include "rsg/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "parallel.hpp"
#include "rsg/geometry.hpp"

namespace rsg {
namespace {

// Unit roundoff of float32 (round to nearest).
constexpr double kF32Roundoff = 0x1.0p-24;

struct Argmax {
  std::size_t index = 0;
  bool tie = false;
};

Argmax argmax(const std::vector<float>& v) {
  Argmax out;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[out.index]) out.index = i;
  }
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i != out.index && v[i] == v[out.index]) out.tie = true;
  }
  return out;
}

geom::Vec widen(std::span<const float> v) { return geom::Vec(v.begin(), v.end()); }

std::optional<stats::Descriptive> moments(const std::vector<double>& xs) {
  if (xs.empty()) return std::nullopt;
  return stats::descriptive(xs);
}

template <typename T, typename Fn>
Outcome<T> attempt(Fn&& fn) {
  Outcome<T> out;
  try {
    out.value = fn();
    out.status = "ok";
  } catch (const stats::StatsError& e) {
    out.status = stats::to_string(e.kind());
  }
  return out;
}

bool is_deep(const AnalysisReport& r, std::size_t layer) {
  return std::binary_search(r.deep_layer_set.begin(), r.deep_layer_set.end(), layer);
}

}  // namespace

const char* to_string(FilterMode m) { return m == FilterMode::compliant ? "compliant" : "all"; }
const char* to_string(Pooling p) { return p == Pooling::pooled ? "pooled" : "per-trial"; }

std::optional<FilterMode> parse_filter_mode(std::string_view s) {
  if (s == "compliant") return FilterMode::compliant;
  if (s == "all") return FilterMode::all;
  return std::nullopt;
}

std::optional<Pooling> parse_pooling(std::string_view s) {
  if (s == "pooled") return Pooling::pooled;
  if (s == "per-trial") return Pooling::per_trial;
  return std::nullopt;
}

FilterOutcome filter_trials(const DumpSet& dump) {
  FilterOutcome out;
  out.n_total = dump.trials.size();
  for (const Trial& t : dump.trials) {
    const std::size_t k = t.meta.option_labels.size();
    if (t.final_logits_base.size() != k || t.final_logits_conflict.size() != k || k == 0) {
      throw PipelineError("trial " + t.meta.trial_id + ": missing final option logits");
    }
    const Argmax base = argmax(t.final_logits_base);
    const Argmax conflict = argmax(t.final_logits_conflict);
    const std::string& id = t.meta.trial_id;
    if (base.tie || conflict.tie) out.argmax_ties.push_back(id);

    if (base.index != static_cast<std::size_t>(t.meta.correct_index)) {
      out.baseline_incorrect.push_back(id);
    } else if (conflict.index == static_cast<std::size_t>(t.meta.adversarial_index)) {
      out.compliant.push_back(id);
    } else {
      out.non_compliant.push_back(id);
    }
  }
  return out;
}

std::vector<GeometryRecord> layer_scan(const Trial& trial) {
  const std::size_t d = trial.d_model();
  const std::size_t n_layers = trial.n_layers();
  if (d == 0 || trial.base_states.size() != n_layers * d ||
      trial.conflict_states.size() != n_layers * d || trial.w_adversarial.size() != d) {
    throw PipelineError("trial " + trial.meta.trial_id + ": malformed state matrices");
  }
  const geom::Vec w_correct = widen(trial.w_correct);
  const geom::Vec w_adversarial = widen(trial.w_adversarial);

  std::vector<GeometryRecord> out;
  out.reserve(n_layers);
  for (std::size_t layer = 0; layer < n_layers; ++layer) {
    const geom::Vec x_base = widen(trial.base_row(layer));
    const geom::Vec x_new = widen(trial.conflict_row(layer));
    const double base_norm = geom::norm(x_base);
    const double new_norm = geom::norm(x_new);
    if (base_norm < geom::kZeroNorm || new_norm < geom::kZeroNorm) {
      throw PipelineError("trial " + trial.meta.trial_id + ": zero-norm state row at layer " +
                          std::to_string(layer));
    }

    GeometryRecord r;
    r.trial_id = trial.meta.trial_id;
    r.layer = layer;
    const geom::Vec delta = geom::interference(x_base, x_new);
    r.gamma = geom::norm_ratio(x_base, x_new);
    const double delta_norm = geom::norm(delta);
    if (delta_norm >= geom::kZeroNorm) {
      r.cos_delta_wcorrect = geom::cosine(delta, w_correct);
      r.cos_delta_wadversarial = geom::cosine(delta, w_adversarial);
      r.cos_resolution = kF32Roundoff * (base_norm + new_norm) / delta_norm + kF32Roundoff;
    }
    r.l_base = geom::logit(x_base, w_correct);
    r.l_new = geom::logit(x_new, w_correct);
    r.delta_l = r.l_base - r.l_new;
    const auto lin = geom::linearized_logit_delta(x_base, delta, w_correct);
    r.term_a = lin.term_a;
    r.term_b = lin.term_b;
    r.linear_pred = lin.total;
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<std::size_t> deep_layers(std::size_t n_layers, double deep_frac) {
  if (!(deep_frac > 0.0 && deep_frac <= 1.0)) {
    throw PipelineError("deep_frac must be in (0, 1], got " + std::to_string(deep_frac));
  }
  // The epsilon keeps products like 0.1 * 30 = 3.0000000000000004 at 3.
  const auto count = static_cast<std::size_t>(
      std::ceil(deep_frac * static_cast<double>(n_layers) - 1e-9));
  const std::size_t n = std::clamp<std::size_t>(count, 1, n_layers);
  std::vector<std::size_t> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = n_layers - n + i;
  return out;
}

AnalysisReport aggregate(std::vector<GeometryRecord> records, std::size_t n_layers,
                         double deep_frac) {
  if (records.empty()) throw PipelineError("aggregate: empty record set");
  std::sort(records.begin(), records.end(), [](const GeometryRecord& a, const GeometryRecord& b) {
    return a.trial_id != b.trial_id ? a.trial_id < b.trial_id : a.layer < b.layer;
  });

  AnalysisReport report;
  report.config.deep_frac = deep_frac;
  report.n_layers = n_layers;
  report.deep_layer_set = deep_layers(n_layers, deep_frac);

  struct Columns {
    std::vector<double> gamma, cos_c, cos_a, l_base, l_new, delta_l;
  };
  std::vector<Columns> cols(n_layers);
  std::vector<double> all_gamma, deep_gamma;
  for (const GeometryRecord& r : records) {
    if (r.layer >= n_layers) {
      throw PipelineError("aggregate: record layer " + std::to_string(r.layer) +
                          " outside [0," + std::to_string(n_layers) + ")");
    }
    if (report.analyzed_trials.empty() || report.analyzed_trials.back() != r.trial_id) {
      report.analyzed_trials.push_back(r.trial_id);
    }
    Columns& c = cols[r.layer];
    c.gamma.push_back(r.gamma);
    if (r.cos_delta_wcorrect) c.cos_c.push_back(*r.cos_delta_wcorrect);
    if (r.cos_delta_wadversarial) c.cos_a.push_back(*r.cos_delta_wadversarial);
    c.l_base.push_back(r.l_base);
    c.l_new.push_back(r.l_new);
    c.delta_l.push_back(r.delta_l);
    all_gamma.push_back(r.gamma);
  }

  for (std::size_t layer = 0; layer < n_layers; ++layer) {
    const Columns& c = cols[layer];
    LayerAggregate agg;
    agg.layer = layer;
    agg.n = c.gamma.size();
    agg.gamma = moments(c.gamma);
    agg.cos_wcorrect = moments(c.cos_c);
    agg.cos_wadversarial = moments(c.cos_a);
    agg.l_base = moments(c.l_base);
    agg.l_new = moments(c.l_new);
    agg.delta_l = moments(c.delta_l);
    report.layers.push_back(std::move(agg));
  }
  for (const GeometryRecord& r : records) {
    if (is_deep(report, r.layer)) deep_gamma.push_back(r.gamma);
  }
  report.mean_gamma_all_layers = stats::descriptive(all_gamma).mean;
  if (!deep_gamma.empty()) report.mean_gamma_deep_layers = stats::descriptive(deep_gamma).mean;
  report.records = std::move(records);
  return report;
}

void hypothesis_tests(AnalysisReport& report) {
  std::vector<double> gammas, cosines;
  for (const GeometryRecord& r : report.records) {
    if (!is_deep(report, r.layer)) continue;
    gammas.push_back(r.gamma);
    if (r.cos_delta_wcorrect) cosines.push_back(*r.cos_delta_wcorrect);
  }
  report.h1 = attempt<stats::TTestResult>([&] { return stats::t_test_one_sample(gammas, 1.0); });
  report.h2.cos = moments(cosines);
  report.h2.vs_zero =
      attempt<stats::TTestResult>([&] { return stats::t_test_one_sample(cosines, 0.0); });
  report.h2.vs_minus_one =
      attempt<stats::TTestResult>([&] { return stats::t_test_one_sample(cosines, -1.0); });
}

void regress_drop(AnalysisReport& report) {
  std::vector<double> xs, ys;
  double resolution = 0.0;
  if (report.config.pooling == Pooling::pooled) {
    for (const GeometryRecord& r : report.records) {
      if (!is_deep(report, r.layer) || !r.cos_delta_wcorrect) continue;
      xs.push_back(*r.cos_delta_wcorrect);
      ys.push_back(r.delta_l);
      resolution = std::max(resolution, r.cos_resolution);
    }
  } else {
    // Records are sorted by trial, so each trial is a contiguous run.
    std::vector<double> cs, ds;
    auto flush = [&] {
      if (cs.empty()) return;
      xs.push_back(stats::descriptive(cs).mean);
      ys.push_back(stats::descriptive(ds).mean);
      cs.clear();
      ds.clear();
    };
    const std::string* current = nullptr;
    for (const GeometryRecord& r : report.records) {
      if (current && *current != r.trial_id) flush();
      current = &r.trial_id;
      if (!is_deep(report, r.layer) || !r.cos_delta_wcorrect) continue;
      cs.push_back(*r.cos_delta_wcorrect);
      ds.push_back(r.delta_l);
      resolution = std::max(resolution, r.cos_resolution);
    }
    flush();
  }

  if (xs.size() >= 3) {
    const auto [lo, hi] = std::minmax_element(xs.begin(), xs.end());
    // A spread within float32 quantization noise carries no signal.
    if (*hi - *lo <= 2.0 * resolution) {
      report.regression = {std::nullopt, stats::to_string(stats::StatsErrorKind::degenerate_predictor)};
      return;
    }
  }
  report.regression = attempt<stats::OlsFit>([&] { return stats::ols(xs, ys); });
}

AnalysisReport analyze(const DumpSet& dump, const AnalysisConfig& config) {
  FilterOutcome filter = filter_trials(dump);
  // Validates deep_frac even when no trial survives filtering.
  const std::vector<std::size_t> deep = deep_layers(dump.n_layers, config.deep_frac);

  std::vector<const Trial*> selected;
  if (config.filter == FilterMode::all) {
    for (const Trial& t : dump.trials) selected.push_back(&t);
  } else {
    const std::set<std::string> keep(filter.compliant.begin(), filter.compliant.end());
    for (const Trial& t : dump.trials) {
      if (keep.count(t.meta.trial_id)) selected.push_back(&t);
    }
  }

  std::vector<std::vector<GeometryRecord>> per_trial(selected.size());
  detail::parallel_for(selected.size(), config.threads,
                       [&](std::size_t i) { per_trial[i] = layer_scan(*selected[i]); });

  AnalysisReport report;
  if (selected.empty()) {
    report.deep_layer_set = deep;
    const char* why = stats::to_string(stats::StatsErrorKind::insufficient_samples);
    report.h1.status = why;
    report.h2.vs_zero.status = why;
    report.h2.vs_minus_one.status = why;
    report.regression.status = why;
  } else {
    std::vector<GeometryRecord> records;
    for (auto& v : per_trial) {
      for (auto& r : v) records.push_back(std::move(r));
    }
    report = aggregate(std::move(records), dump.n_layers, config.deep_frac);
    report.config = config;
    hypothesis_tests(report);
    regress_drop(report);
  }
  report.config = config;
  report.model_name = dump.model_name;
  report.d_model = dump.d_model;
  report.n_layers = dump.n_layers;
  report.filter = std::move(filter);
  return report;
}

}  // namespace rsg
