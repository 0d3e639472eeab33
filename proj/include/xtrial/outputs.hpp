#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "xtrial/contrasts.hpp"
#include "xtrial/sim_engine.hpp"
#include "xtrial/tmle.hpp"

namespace xtrial {

inline constexpr const char* kVersion = "1.0.0";

// FNV-1a over the canonical configuration string; embedded in every output
// file so reruns are attributable.
std::string config_hash(const std::string& canonical);

std::string format_t_ref(const std::vector<int>& t_ref);

// Machine-readable estimate record: psi, se, ci, epsilons, mean_eif,
// transform parameters and nuisance diagnostics (no raw influence vector).
nlohmann::json estimate_to_json(const EstimateResult& r);
nlohmann::json contrast_to_json(const ContrastResult& c);

// MetricsTable CSV, column order: case, t_ref, vaccine, truth, bias,
// variance, mse, ci_coverage, ci_width.
void write_metrics_csv(const MetricsTable& table, const std::string& path,
                       const std::string& hash, std::uint64_t seed);
nlohmann::json metrics_to_json(const MetricsTable& table);

// Rendering for the `report` command: plain-text/markdown tables from the
// stored JSON records. Pure presentation, no recomputation.
std::string render_metrics_markdown(const nlohmann::json& manifest);
std::string render_estimates_markdown(const nlohmann::json& estimates);

}  // namespace xtrial
