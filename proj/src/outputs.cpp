#include "xtrial/outputs.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "xtrial/errors.hpp"

namespace xtrial {

namespace {

std::string fmt(double v, const char* spec = "%.4f") {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

const char* transform_kind_name(OutcomeTransform::Kind k) {
  switch (k) {
    case OutcomeTransform::Kind::identity: return "identity";
    case OutcomeTransform::Kind::affine_to_unit: return "affine_to_unit";
    case OutcomeTransform::Kind::log10_then_affine: return "log10_then_affine";
  }
  return "?";
}

}  // namespace

std::string config_hash(const std::string& canonical) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : canonical) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string format_t_ref(const std::vector<int>& t_ref) {
  std::ostringstream os;
  os << '{';
  for (std::size_t i = 0; i < t_ref.size(); ++i) {
    if (i) os << ", ";
    os << t_ref[i];
  }
  os << '}';
  return os.str();
}

nlohmann::json estimate_to_json(const EstimateResult& r) {
  nlohmann::json j;
  j["method"] = r.method;
  j["vaccine"] = r.vaccine;
  j["t_ref"] = r.t_ref;
  j["scale"] = scale_name(r.scale);
  j["n"] = r.n;
  j["psi"] = r.psi;
  j["psi_unit_scale"] = r.psi_unit_scale;
  j["se"] = r.se;
  j["ci"] = {r.ci_lo, r.ci_hi};
  // Display values: log10 estimands exponentiate to the geometric-mean scale.
  if (r.scale == OutcomeScale::log10) {
    j["psi_report"] = std::pow(10.0, r.psi);
    j["ci_report"] = {std::pow(10.0, r.ci_lo), std::pow(10.0, r.ci_hi)};
  } else {
    j["psi_report"] = r.psi;
    j["ci_report"] = {r.ci_lo, r.ci_hi};
  }
  j["epsilons"] = {r.beta2, r.beta1};
  j["mean_eif"] = r.mean_eif;
  j["degenerate_se"] = r.degenerate_se;
  j["transform"] = {{"kind", transform_kind_name(r.transform.kind)},
                    {"a_min", r.transform.a_min},
                    {"a_max", r.transform.a_max}};
  j["diagnostics"] = {{"g_t_converged", r.diagnostics.g_t_converged},
                      {"g_a_converged", r.diagnostics.g_a_converged},
                      {"q2_converged", r.diagnostics.q2_converged},
                      {"q1_converged", r.diagnostics.q1_converged},
                      {"q2_separation", r.diagnostics.q2_separation},
                      {"q1_separation", r.diagnostics.q1_separation},
                      {"beta2_iterations", r.diagnostics.beta2_iterations},
                      {"beta1_iterations", r.diagnostics.beta1_iterations},
                      {"g_t_marginal", r.diagnostics.g_t_marginal}};
  return j;
}

nlohmann::json contrast_to_json(const ContrastResult& c) {
  nlohmann::json j;
  j["kind"] = c.kind == ContrastKind::difference ? "difference" : "log_ratio";
  j["estimate"] = c.estimate;
  j["linear_estimate"] = c.linear_estimate;
  j["se"] = c.se;
  j["ci"] = {c.ci_lo, c.ci_hi};
  j["z"] = c.z;
  j["p_value"] = c.p_value;
  j["degenerate"] = c.degenerate;
  j["vaccine_a"] = c.a.vaccine;
  j["vaccine_b"] = c.b.vaccine;
  j["method"] = c.a.method;
  j["scale"] = scale_name(c.a.scale);
  return j;
}

void write_metrics_csv(const MetricsTable& table, const std::string& path,
                       const std::string& hash, std::uint64_t seed) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open '" + path + "' for writing");
  out << "# config_hash=" << hash << " seed=" << seed << " version=" << kVersion
      << '\n';
  out << "case,t_ref,vaccine,truth,bias,variance,mse,ci_coverage,ci_width\n";
  for (const auto& r : table.rows) {
    out << r.scenario << ",\"" << format_t_ref(r.t_ref) << "\"," << r.vaccine << ','
        << fmt(r.truth) << ',' << fmt(r.bias) << ',' << fmt(r.variance) << ','
        << fmt(r.mse) << ',' << fmt(r.ci_coverage) << ',' << fmt(r.ci_width) << '\n';
  }
}

nlohmann::json metrics_to_json(const MetricsTable& table) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : table.rows) {
    rows.push_back({{"case", r.scenario},
                    {"t_ref", r.t_ref},
                    {"vaccine", r.vaccine},
                    {"truth", r.truth},
                    {"bias", r.bias},
                    {"variance", r.variance},
                    {"mse", r.mse},
                    {"ci_coverage", r.ci_coverage},
                    {"ci_width", r.ci_width},
                    {"replicates_used", r.replicates_used},
                    {"replicates_failed", r.replicates_failed},
                    {"degenerate_variance", r.degenerate_variance}});
  }
  return rows;
}

std::string render_metrics_markdown(const nlohmann::json& manifest) {
  std::ostringstream os;
  os << "| Case | T_ref | Vaccine | Truth | Bias | Variance | MSE | CI coverage | CI width |\n";
  os << "|------|-------|---------|-------|------|----------|-----|-------------|----------|\n";
  for (const auto& r : manifest.at("rows")) {
    os << "| " << r.at("case").get<std::string>() << " | "
       << format_t_ref(r.at("t_ref").get<std::vector<int>>()) << " | "
       << r.at("vaccine").get<int>() << " | " << fmt(r.at("truth").get<double>())
       << " | " << fmt(r.at("bias").get<double>()) << " | "
       << fmt(r.at("variance").get<double>()) << " | " << fmt(r.at("mse").get<double>())
       << " | " << fmt(r.at("ci_coverage").get<double>()) << " | "
       << fmt(r.at("ci_width").get<double>()) << " |\n";
  }
  return os.str();
}

std::string render_estimates_markdown(const nlohmann::json& estimates) {
  std::ostringstream os;
  for (const auto& analysis : estimates.at("analyses")) {
    const std::string scale = analysis.at("scale").get<std::string>();
    const std::string label =
        scale == "binary" ? "RR" : (scale == "log10" ? "GM" : "Mean");
    os << "### " << label << " (" << analysis.at("s_col").get<std::string>() << ")\n\n";

    std::vector<int> vaccines;
    for (const auto& v : analysis.at("vaccines"))
      vaccines.push_back(v.at("vaccine").get<int>());

    os << "| Row |";
    for (int v : vaccines) os << " Vaccine " << v << " |";
    for (const auto& c : analysis.at("contrasts"))
      os << ' ' << (scale == "log10" ? "Ratio" : "Difference") << ' '
         << c.at("vaccine_b").get<int>() << " vs " << c.at("vaccine_a").get<int>()
         << " |";
    os << '\n';
    os << "|-----|";
    for (std::size_t k = 0; k < vaccines.size() + analysis.at("contrasts").size(); ++k)
      os << "---|";
    os << '\n';

    for (const std::string method : {"unadjusted", "tmle"}) {
      const std::string mlabel = method == "tmle" ? "TMLE" : "unadj";
      std::ostringstream est_row, ci_row, p_row;
      est_row << "| " << label << " (" << mlabel << ") |";
      ci_row << "| CI |";
      p_row << "| p value |";
      for (const auto& v : analysis.at("vaccines")) {
        const auto& rec = v.at(method);
        est_row << ' ' << fmt(rec.at("psi_report").get<double>(), "%.3f") << " |";
        ci_row << " (" << fmt(rec.at("ci_report")[0].get<double>(), "%.3f") << ", "
               << fmt(rec.at("ci_report")[1].get<double>(), "%.3f") << ") |";
        p_row << " -- |";
      }
      for (const auto& c : analysis.at("contrasts")) {
        const auto& rec = c.at(method);
        est_row << ' ' << fmt(rec.at("estimate").get<double>(), "%.3f") << " |";
        ci_row << " (" << fmt(rec.at("ci")[0].get<double>(), "%.3f") << ", "
               << fmt(rec.at("ci")[1].get<double>(), "%.3f") << ") |";
        p_row << ' ' << fmt(rec.at("p_value").get<double>(), "%.3f") << " |";
      }
      os << est_row.str() << '\n' << ci_row.str() << '\n' << p_row.str() << '\n';
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace xtrial
