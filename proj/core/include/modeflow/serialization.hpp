#pragma once

#include <nlohmann/json.hpp>

#include "modeflow/alignment.hpp"
#include "modeflow/mode_engine.hpp"
#include "modeflow/mode_eval.hpp"
#include "modeflow/signal.hpp"
#include "modeflow/synthetic.hpp"

namespace modeflow {

/// {"day","k","dim","weights":[...],"means":[[...]],"variances":[[...]],"loglik"}
nlohmann::json to_json(const DailyModeSet& modes);
DailyModeSet mode_set_from_json(const nlohmann::json& j);

/// {"from_day","to_day","pairs":[[i,j],...],"retired":[...],"born":[...],"cost"}
nlohmann::json to_json(const ModeAlignment& alignment);
ModeAlignment alignment_from_json(const nlohmann::json& j);

/// {"day","perf":[...],"lineage":[...],"archived":{id:value},"next_lineage"}
nlohmann::json to_json(const PerfState& perf);
PerfState perf_state_from_json(const nlohmann::json& j);

/// {"input_dim","output_dim","identity","basis":[[...]]}
nlohmann::json to_json(const Projection& projection);
Projection projection_from_json(const nlohmann::json& j);

nlohmann::json to_json(const PortfolioWeights& weights);
PortfolioWeights weights_from_json(const nlohmann::json& j);

nlohmann::json to_json(const SyntheticSpec& spec);
SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j);

}  // namespace modeflow
