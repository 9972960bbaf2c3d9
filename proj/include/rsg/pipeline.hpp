#pragma once

// Compliance filtering, layer-wise geometric scan, per-layer aggregation,
// hypothesis tests and deep-layer regression over a DumpSet.

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "rsg/dumpstore.hpp"
#include "rsg/stats.hpp"

namespace rsg {

class PipelineError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One layer of one trial.
struct GeometryRecord {
  std::string trial_id;
  std::size_t layer = 0;
  double gamma = 1.0;  // ||x_base|| / ||x_new||
  // Absent when the interference vector is exactly zero.
  std::optional<double> cos_delta_wcorrect;
  std::optional<double> cos_delta_wadversarial;
  double l_base = 0.0;
  double l_new = 0.0;
  double delta_l = 0.0;  // l_base - l_new
  double term_a = 0.0;
  double term_b = 0.0;
  double linear_pred = 0.0;  // first-order l_new - l_base
  // Worst-case cosine error caused by float32 quantization of the stored
  // states and unembedding row; 0 when the cosine is absent.
  double cos_resolution = 0.0;
};

struct FilterOutcome {
  std::size_t n_total = 0;
  std::vector<std::string> baseline_incorrect;
  std::vector<std::string> non_compliant;
  std::vector<std::string> compliant;
  // Trials whose argmax (either condition) was decided by a tie.
  std::vector<std::string> argmax_ties;
};

enum class FilterMode { compliant, all };
enum class Pooling { pooled, per_trial };

const char* to_string(FilterMode m);
const char* to_string(Pooling p);
std::optional<FilterMode> parse_filter_mode(std::string_view s);
std::optional<Pooling> parse_pooling(std::string_view s);

struct AnalysisConfig {
  double deep_frac = 0.2;
  FilterMode filter = FilterMode::compliant;
  Pooling pooling = Pooling::pooled;
  unsigned threads = 1;  // does not affect results
};

/// Mean/sd of one quantity at one layer; absent when no samples exist.
struct LayerAggregate {
  std::size_t layer = 0;
  std::size_t n = 0;
  std::optional<stats::Descriptive> gamma;
  std::optional<stats::Descriptive> cos_wcorrect;
  std::optional<stats::Descriptive> cos_wadversarial;
  std::optional<stats::Descriptive> l_base;
  std::optional<stats::Descriptive> l_new;
  std::optional<stats::Descriptive> delta_l;
};

/// Result of a statistical step that may be unavailable; `status` is "ok" or
/// a short reason ("zero variance", "insufficient samples", ...).
template <typename T>
struct Outcome {
  std::optional<T> value;
  std::string status = "not run";

  bool ok() const { return value.has_value(); }
};

struct H2Result {
  std::optional<stats::Descriptive> cos;
  Outcome<stats::TTestResult> vs_zero;
  Outcome<stats::TTestResult> vs_minus_one;
};

struct AnalysisReport {
  AnalysisConfig config;
  std::string model_name;
  std::size_t d_model = 0;
  std::size_t n_layers = 0;
  FilterOutcome filter;
  std::vector<std::string> analyzed_trials;
  std::vector<GeometryRecord> records;  // sorted by (trial_id, layer)
  std::vector<LayerAggregate> layers;
  std::vector<std::size_t> deep_layer_set;
  std::optional<double> mean_gamma_all_layers;
  std::optional<double> mean_gamma_deep_layers;
  Outcome<stats::TTestResult> h1;
  H2Result h2;
  Outcome<stats::OlsFit> regression;
};

/// Two-stage selection: baseline competence, then compliance (flip to the
/// adversarial option). Argmax ties go to the lowest index and are flagged.
FilterOutcome filter_trials(const DumpSet& dump);

/// One record per layer.
std::vector<GeometryRecord> layer_scan(const Trial& trial);

/// The final ceil(deep_frac * n_layers) layer indices.
std::vector<std::size_t> deep_layers(std::size_t n_layers, double deep_frac);

/// Per-layer moments over the given per-trial records. Records are sorted by
/// (trial_id, layer) first, so input order does not matter.
AnalysisReport aggregate(std::vector<GeometryRecord> records, std::size_t n_layers,
                         double deep_frac);

/// H1: t-test of pooled deep-layer gamma against 1. H2: moments of pooled
/// deep-layer cos(delta, w_correct), t-tests against 0 and -1.
void hypothesis_tests(AnalysisReport& report);

/// OLS of delta_l on cos(delta, w_correct) over deep layers, pooled or
/// averaged per trial according to report.config.pooling.
void regress_drop(AnalysisReport& report);

/// Full procedure. A dump with no analyzable trials yields a report with empty
/// layer tables and every statistical step marked "insufficient samples".
AnalysisReport analyze(const DumpSet& dump, const AnalysisConfig& config = {});

}  // namespace rsg
