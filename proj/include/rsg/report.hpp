#pragma once

// Serialization of an AnalysisReport: one JSON document plus two CSV tables
// (per-layer aggregates and the pooled deep-layer scatter of cos vs delta_l).

#include <string>

#include "json.hpp"
#include "rsg/pipeline.hpp"

namespace rsg {

inline constexpr const char* kReportFormat = "rsg-report-1";

/// `inputs` is embedded verbatim under "inputs" (dump path, dump attributes).
nlohmann::ordered_json report_to_json(const AnalysisReport& report,
                                      const nlohmann::ordered_json& inputs = {});

/// layer,mean_gamma,sd_gamma,mean_cos,sd_cos,mean_l_base,mean_l_new,mean_delta_l,n
std::string layer_table_csv(const AnalysisReport& report);

/// trial_id,layer,cos,delta_l over deep layers with a defined cosine.
std::string scatter_csv(const AnalysisReport& report);

}  // namespace rsg
