#include "rsg/report.hpp"

#include <cmath>
#include <sstream>

#include "rsg/file_util.hpp"

namespace rsg {
namespace {

using ojson = nlohmann::ordered_json;

ojson number_or_null(const std::optional<double>& v) {
  if (!v || !std::isfinite(*v)) return nullptr;
  return *v;
}

ojson moments_json(const std::optional<stats::Descriptive>& d) {
  if (!d) return ojson{{"n", 0}, {"mean", nullptr}, {"sd", nullptr}};
  return ojson{{"n", d->n}, {"mean", number_or_null(d->mean)}, {"sd", number_or_null(d->sd)}};
}

ojson ttest_json(const Outcome<stats::TTestResult>& o) {
  ojson j{{"status", o.status}};
  if (o.value) {
    const auto& t = *o.value;
    j["mu0"] = t.mu0;
    j["n"] = t.n;
    j["mean"] = t.mean;
    j["sd"] = t.sd;
    j["t"] = number_or_null(t.t);
    j["df"] = t.df;
    j["p_two_sided"] = t.p_two_sided;
  }
  return j;
}

ojson filter_json(const FilterOutcome& f) {
  return ojson{{"n_total", f.n_total},
               {"n_baseline_incorrect", f.baseline_incorrect.size()},
               {"n_non_compliant", f.non_compliant.size()},
               {"n_compliant", f.compliant.size()},
               {"baseline_incorrect", f.baseline_incorrect},
               {"non_compliant", f.non_compliant},
               {"compliant", f.compliant},
               {"argmax_ties", f.argmax_ties}};
}

std::string cell(const std::optional<double>& v) { return v ? format_double(*v) : ""; }

std::optional<double> mean_of(const std::optional<stats::Descriptive>& d) {
  if (!d) return std::nullopt;
  return d->mean;
}

std::optional<double> sd_of(const std::optional<stats::Descriptive>& d) {
  if (!d) return std::nullopt;
  return d->sd;
}

}  // namespace

nlohmann::ordered_json report_to_json(const AnalysisReport& r, const nlohmann::ordered_json& inputs) {
  ojson j;
  j["format"] = kReportFormat;
  j["config"] = ojson{{"deep_frac", r.config.deep_frac},
                      {"filter", to_string(r.config.filter)},
                      {"pooling", to_string(r.config.pooling)}};
  j["inputs"] = inputs.is_null() ? ojson::object() : inputs;
  j["dump"] = ojson{{"model_name", r.model_name}, {"d_model", r.d_model}, {"n_layers", r.n_layers}};
  j["filter"] = filter_json(r.filter);
  j["n_analyzed"] = r.analyzed_trials.size();
  j["deep_layer_set"] = r.deep_layer_set;
  j["summary"] = ojson{{"mean_gamma_all_layers", number_or_null(r.mean_gamma_all_layers)},
                       {"mean_gamma_deep_layers", number_or_null(r.mean_gamma_deep_layers)}};

  ojson layers = ojson::array();
  for (const LayerAggregate& a : r.layers) {
    layers.push_back(ojson{{"layer", a.layer},
                           {"n", a.n},
                           {"gamma", moments_json(a.gamma)},
                           {"cos_delta_wcorrect", moments_json(a.cos_wcorrect)},
                           {"cos_delta_wadversarial", moments_json(a.cos_wadversarial)},
                           {"l_base", moments_json(a.l_base)},
                           {"l_new", moments_json(a.l_new)},
                           {"delta_l", moments_json(a.delta_l)}});
  }
  j["layers"] = std::move(layers);

  j["h1"] = ttest_json(r.h1);
  j["h2"] = ojson{{"cos_delta_wcorrect", moments_json(r.h2.cos)},
                  {"vs_zero", ttest_json(r.h2.vs_zero)},
                  {"vs_minus_one", ttest_json(r.h2.vs_minus_one)}};

  ojson reg{{"status", r.regression.status},
            {"response", "delta_l"},
            {"predictor", "cos_delta_wcorrect"},
            {"pooling", to_string(r.config.pooling)}};
  if (r.regression.value) {
    const auto& f = *r.regression.value;
    reg["n"] = f.n;
    reg["slope"] = f.slope;
    reg["intercept"] = f.intercept;
    reg["r2"] = f.r2;
    reg["degenerate_response"] = f.degenerate_response;
  }
  j["regression"] = std::move(reg);
  return j;
}

std::string layer_table_csv(const AnalysisReport& r) {
  std::ostringstream out;
  out << "layer,mean_gamma,sd_gamma,mean_cos,sd_cos,mean_l_base,mean_l_new,mean_delta_l,n\n";
  for (const LayerAggregate& a : r.layers) {
    out << a.layer << ',' << cell(mean_of(a.gamma)) << ',' << cell(sd_of(a.gamma)) << ','
        << cell(mean_of(a.cos_wcorrect)) << ',' << cell(sd_of(a.cos_wcorrect)) << ','
        << cell(mean_of(a.l_base)) << ',' << cell(mean_of(a.l_new)) << ','
        << cell(mean_of(a.delta_l)) << ',' << a.n << '\n';
  }
  return out.str();
}

std::string scatter_csv(const AnalysisReport& r) {
  std::ostringstream out;
  out << "trial_id,layer,cos,delta_l\n";
  for (const GeometryRecord& g : r.records) {
    if (!g.cos_delta_wcorrect) continue;
    bool deep = false;
    for (std::size_t l : r.deep_layer_set) deep = deep || l == g.layer;
    if (!deep) continue;
    out << g.trial_id << ',' << g.layer << ',' << format_double(*g.cos_delta_wcorrect) << ','
        << format_double(g.delta_l) << '\n';
  }
  return out.str();
}

}  // namespace rsg
