// Command-line front door: estimate from stacked CSVs, run simulation
// presets, render stored results.

#include "xtrial/cli.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "xtrial/contrasts.hpp"
#include "xtrial/dataset.hpp"
#include "xtrial/errors.hpp"
#include "xtrial/outputs.hpp"
#include "xtrial/sim_engine.hpp"
#include "xtrial/tmle.hpp"

namespace xtrial {

namespace {

namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitValidation = 3;
constexpr int kExitEstimation = 4;

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else if (c != ' ') {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

std::vector<int> split_int_list(const std::string& text, const char* what) {
  std::vector<int> out;
  for (const auto& tok : split_list(text)) {
    try {
      out.push_back(std::stoi(tok));
    } catch (...) {
      throw DomainError(std::string(what) + ": '" + tok + "' is not an integer");
    }
  }
  return out;
}

std::string fmt3(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

struct EstimateConfig {
  std::string input;
  std::string out_dir;
  std::string registry;
  std::vector<int> vaccines;
  std::string ref_trials_text;
  std::string ws_text, wdelta_text;
  std::vector<std::string> scales{"identity"};
  std::vector<std::string> s_cols;
  std::vector<std::string> contrast_texts;
  std::string truncation_text = "0.005,0.995";
  std::string gdelta = "known";
  std::uint64_t seed = 0;
};

struct SimulateConfig {
  std::string preset;
  std::string config_path;
  int reps = 1000;
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string gdelta = "known";
  std::string out_dir;
  int threads = 0;
};

struct ReportConfig {
  std::string results_dir;
};

std::string canonical_estimate_config(const EstimateConfig& c) {
  std::ostringstream os;
  os << "estimate;input=" << c.input << ";registry=" << c.registry << ";vaccines=";
  for (int v : c.vaccines) os << v << ' ';
  os << ";ref=" << c.ref_trials_text << ";ws=" << c.ws_text
     << ";wdelta=" << c.wdelta_text << ";scales=";
  for (const auto& s : c.scales) os << s << ' ';
  os << ";scols=";
  for (const auto& s : c.s_cols) os << s << ' ';
  os << ";contrasts=";
  for (const auto& s : c.contrast_texts) os << s << ' ';
  os << ";trunc=" << c.truncation_text << ";gdelta=" << c.gdelta << ";seed=" << c.seed;
  return os.str();
}

int cmd_estimate(const EstimateConfig& cfg) {
  if (!fs::exists(cfg.input)) {
    std::cerr << "error: input file '" << cfg.input << "' does not exist\n";
    return kExitInput;
  }
  if (!cfg.registry.empty() && !fs::exists(cfg.registry)) {
    std::cerr << "error: registry config '" << cfg.registry << "' does not exist\n";
    return kExitInput;
  }

  std::vector<std::string> s_cols = cfg.s_cols;
  if (s_cols.empty()) s_cols.assign(cfg.scales.size(), "s");
  if (s_cols.size() == 1 && cfg.scales.size() > 1)
    s_cols.assign(cfg.scales.size(), s_cols.front());
  if (s_cols.size() != cfg.scales.size()) {
    std::cerr << "error: --s-col count must match --scale count\n";
    return kExitInput;
  }

  const std::vector<int> ref_trials = split_int_list(cfg.ref_trials_text, "--ref-trials");
  const std::vector<double> trunc = [&] {
    std::vector<double> out;
    for (const auto& tok : split_list(cfg.truncation_text)) out.push_back(std::stod(tok));
    return out;
  }();
  if (trunc.size() != 2 || !(trunc[0] > 0.0) || !(trunc[1] < 1.0) || trunc[0] >= trunc[1]) {
    std::cerr << "error: --truncation expects 'lo,hi' with 0 < lo < hi < 1\n";
    return kExitInput;
  }

  std::vector<std::pair<int, int>> contrast_pairs;
  for (const auto& text : cfg.contrast_texts) {
    const std::vector<int> pair = split_int_list(text, "--contrast");
    if (pair.size() != 2) {
      std::cerr << "error: --contrast expects 'A,B'\n";
      return kExitInput;
    }
    contrast_pairs.push_back({pair[0], pair[1]});
  }

  const GDeltaMode mode = parse_gdelta_mode(cfg.gdelta);
  const std::string hash = config_hash(canonical_estimate_config(cfg));

  fs::create_directories(cfg.out_dir);

  nlohmann::json out_json;
  out_json["config_hash"] = hash;
  out_json["seed"] = cfg.seed;
  out_json["version"] = kVersion;
  out_json["input"] = cfg.input;
  out_json["analyses"] = nlohmann::json::array();

  std::ostringstream report_csv;
  report_csv << "# config_hash=" << hash << " seed=" << cfg.seed
             << " version=" << kVersion << '\n';

  for (std::size_t ai = 0; ai < cfg.scales.size(); ++ai) {
    const OutcomeScale scale = parse_scale(cfg.scales[ai]);
    CsvSchema schema;
    schema.s_col = s_cols[ai];

    StackedDataset ds = cfg.registry.empty()
                            ? load_stacked_csv(cfg.input, schema)
                            : load_stacked_csv(cfg.input, schema, cfg.registry);

    // Resolve estimand specs, one per vaccine.
    std::vector<EstimandSpec> specs;
    for (int v : cfg.vaccines) {
      EstimandSpec spec;
      spec.vaccine_a = v;
      spec.t_ref = ref_trials;
      std::sort(spec.t_ref.begin(), spec.t_ref.end());
      for (const auto& [label, info] : ds.registry())
        if (info.evaluates(v) && v != 0) spec.t_a.push_back(label);
      std::sort(spec.t_a.begin(), spec.t_a.end());
      if (spec.t_a.empty()) {
        std::ostringstream os;
        os << "error: vaccine label " << v << " not found; valid labels:";
        for (int lab : ds.vaccine_labels()) os << ' ' << lab;
        std::cerr << os.str() << '\n';
        return kExitValidation;
      }
      for (int t : spec.t_ref) {
        if (!ds.registry().count(t)) {
          std::ostringstream os;
          os << "error: referent trial " << t << " not found; valid trials:";
          for (int lab : ds.trial_labels()) os << ' ' << lab;
          std::cerr << os.str() << '\n';
          return kExitValidation;
        }
      }
      for (const auto& name : split_list(cfg.ws_text)) spec.w_s.push_back(name);
      for (const auto& name : split_list(cfg.wdelta_text)) spec.w_delta.push_back(name);
      spec.scale = scale;
      spec.trunc_lo = trunc[0];
      spec.trunc_hi = trunc[1];
      specs.push_back(spec);
    }

    bool any_failure = false;
    for (const auto& spec : specs) {
      const ValidationReport report = validate(ds, spec);
      if (!report.passed()) {
        any_failure = true;
        std::cerr << "validation for vaccine " << spec.vaccine_a << ", scale "
                  << scale_name(scale) << ":\n"
                  << report.summary();
      }
    }
    if (any_failure) return kExitValidation;

    TmleOptions options;
    options.gdelta_mode = mode;

    nlohmann::json analysis;
    analysis["scale"] = scale_name(scale);
    analysis["s_col"] = s_cols[ai];
    analysis["vaccines"] = nlohmann::json::array();
    analysis["contrasts"] = nlohmann::json::array();

    std::map<int, EstimateResult> tmle_results, unadj_results;
    try {
      for (const auto& spec : specs) {
        EstimateResult tm = run_tmle(ds, spec, options);
        EstimateResult un = estimate_unadjusted(ds, spec.vaccine_a, spec.t_a, scale,
                                                mode, spec.w_delta);
        nlohmann::json v;
        v["vaccine"] = spec.vaccine_a;
        v["tmle"] = estimate_to_json(tm);
        v["unadjusted"] = estimate_to_json(un);
        analysis["vaccines"].push_back(v);
        tmle_results.emplace(spec.vaccine_a, std::move(tm));
        unadj_results.emplace(spec.vaccine_a, std::move(un));
      }
    } catch (const EstimationError& e) {
      std::cerr << "estimation failure: " << e.what() << '\n';
      if (!e.diagnostics().empty()) std::cerr << "diagnostics: " << e.diagnostics() << '\n';
      return kExitEstimation;
    }

    struct RenderedContrast {
      int a, b;
      ContrastResult tmle, unadj;
    };
    std::vector<RenderedContrast> rendered;
    for (const auto& [a, b] : contrast_pairs) {
      if (!tmle_results.count(a) || !tmle_results.count(b)) {
        std::cerr << "error: contrast " << a << ',' << b
                  << " refers to a vaccine without estimates\n";
        return kExitValidation;
      }
      RenderedContrast rc{a, b, {}, {}};
      if (scale == OutcomeScale::log10) {
        rc.tmle = contrast_geomean_ratio(tmle_results.at(a), tmle_results.at(b));
        rc.unadj = contrast_geomean_ratio(unadj_results.at(a), unadj_results.at(b));
      } else {
        rc.tmle = contrast_difference(tmle_results.at(a), tmle_results.at(b));
        rc.unadj = contrast_difference(unadj_results.at(a), unadj_results.at(b));
      }
      nlohmann::json cj;
      cj["vaccine_a"] = a;
      cj["vaccine_b"] = b;
      cj["tmle"] = contrast_to_json(rc.tmle);
      cj["unadjusted"] = contrast_to_json(rc.unadj);
      analysis["contrasts"].push_back(cj);
      rendered.push_back(std::move(rc));
    }
    out_json["analyses"].push_back(analysis);

    // Table-shaped block: estimate rows, CI rows, p rows.
    const std::string label =
        scale == OutcomeScale::binary ? "RR" : (scale == OutcomeScale::log10 ? "GM" : "Mean");
    report_csv << "row";
    for (const auto& spec : specs) report_csv << ",vaccine_" << spec.vaccine_a;
    for (const auto& rc : rendered)
      report_csv << ",contrast_" << rc.b << "_vs_" << rc.a;
    report_csv << '\n';

    auto emit_method = [&](const std::string& mlabel,
                           const std::map<int, EstimateResult>& results,
                           bool tmle_rows) {
      report_csv << label << " (" << mlabel << ")";
      for (const auto& spec : specs) {
        const EstimateResult& r = results.at(spec.vaccine_a);
        const double shown = scale == OutcomeScale::log10 ? std::pow(10.0, r.psi) : r.psi;
        report_csv << ',' << fmt3(shown);
      }
      for (const auto& rc : rendered)
        report_csv << ',' << fmt3((tmle_rows ? rc.tmle : rc.unadj).estimate);
      report_csv << '\n';
      report_csv << "CI";
      for (const auto& spec : specs) {
        const EstimateResult& r = results.at(spec.vaccine_a);
        const double lo = scale == OutcomeScale::log10 ? std::pow(10.0, r.ci_lo) : r.ci_lo;
        const double hi = scale == OutcomeScale::log10 ? std::pow(10.0, r.ci_hi) : r.ci_hi;
        report_csv << ",\"(" << fmt3(lo) << ", " << fmt3(hi) << ")\"";
      }
      for (const auto& rc : rendered) {
        const ContrastResult& c = tmle_rows ? rc.tmle : rc.unadj;
        report_csv << ",\"(" << fmt3(c.ci_lo) << ", " << fmt3(c.ci_hi) << ")\"";
      }
      report_csv << '\n';
      report_csv << "p value";
      for (std::size_t k = 0; k < specs.size(); ++k) report_csv << ",--";
      for (const auto& rc : rendered)
        report_csv << ',' << fmt3((tmle_rows ? rc.tmle : rc.unadj).p_value);
      report_csv << '\n';
    };
    emit_method("unadj", unadj_results, false);
    emit_method("TMLE", tmle_results, true);
  }

  {
    std::ofstream out(fs::path(cfg.out_dir) / "estimates.json");
    out << out_json.dump(2) << '\n';
  }
  {
    std::ofstream out(fs::path(cfg.out_dir) / "report.csv");
    out << report_csv.str();
  }
  std::cout << "wrote " << (fs::path(cfg.out_dir) / "estimates.json").string() << " and "
            << (fs::path(cfg.out_dir) / "report.csv").string() << '\n';
  return kExitOk;
}

int cmd_simulate(const SimulateConfig& cfg) {
  if (!cfg.seed_given) {
    std::cerr << "error: --seed is required for simulate (no wall-clock seeding)\n";
    return kExitInput;
  }
  ScenarioSpec scenario;
  try {
    if (!cfg.config_path.empty()) {
      if (!fs::exists(cfg.config_path)) {
        std::cerr << "error: scenario config '" << cfg.config_path << "' does not exist\n";
        return kExitInput;
      }
      scenario = scenario_from_json_file(cfg.config_path);
    } else {
      scenario = scenario_preset(cfg.preset);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  }
  scenario.base_seed = cfg.seed;

  std::ostringstream canonical;
  canonical << "simulate;scenario=" << scenario_to_json_text(scenario)
            << ";reps=" << cfg.reps << ";seed=" << cfg.seed << ";gdelta=" << cfg.gdelta;
  const std::string hash = config_hash(canonical.str());

  MonteCarloOptions options;
  options.tmle.gdelta_mode = parse_gdelta_mode(cfg.gdelta);
  options.threads = cfg.threads;

  const auto t0 = std::chrono::steady_clock::now();
  MetricsTable table;
  try {
    table = run_monte_carlo(scenario, standard_estimands(scenario), cfg.reps, options);
  } catch (const EstimationError& e) {
    std::cerr << "estimation failure: " << e.what() << '\n';
    return kExitEstimation;
  }
  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  fs::create_directories(cfg.out_dir);
  write_metrics_csv(table, (fs::path(cfg.out_dir) / "metrics.csv").string(), hash,
                    cfg.seed);
  nlohmann::json manifest;
  manifest["config_hash"] = hash;
  manifest["seed"] = cfg.seed;
  manifest["version"] = kVersion;
  manifest["scenario"] = scenario.name;
  manifest["replicates"] = cfg.reps;
  manifest["gdelta_mode"] = cfg.gdelta;
  manifest["elapsed_seconds"] = elapsed;
  manifest["rows"] = metrics_to_json(table);
  {
    std::ofstream out(fs::path(cfg.out_dir) / "manifest.json");
    out << manifest.dump(2) << '\n';
  }
  std::cout << "wrote " << (fs::path(cfg.out_dir) / "metrics.csv").string() << " and "
            << (fs::path(cfg.out_dir) / "manifest.json").string() << '\n';
  return kExitOk;
}

int cmd_report(const ReportConfig& cfg) {
  const fs::path dir(cfg.results_dir);
  const fs::path estimates_path = dir / "estimates.json";
  const fs::path manifest_path = dir / "manifest.json";
  bool rendered = false;
  try {
    if (fs::exists(estimates_path)) {
      std::ifstream in(estimates_path);
      nlohmann::json j;
      in >> j;
      std::cout << render_estimates_markdown(j);
      rendered = true;
    }
    if (fs::exists(manifest_path)) {
      std::ifstream in(manifest_path);
      nlohmann::json j;
      in >> j;
      std::cout << render_metrics_markdown(j);
      rendered = true;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: corrupt results in '" << cfg.results_dir << "': " << e.what()
              << '\n';
    return kExitInput;
  }
  if (!rendered) {
    std::cerr << "error: no estimates.json or manifest.json in '" << cfg.results_dir
              << "'\n";
    return kExitInput;
  }
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"Covariate-standardized comparison of vaccine immunogenicity "
               "across trials"};
  app.require_subcommand(1);

  EstimateConfig ec;
  SimulateConfig sc;
  ReportConfig rc;

  CLI::App* est = app.add_subcommand(
      "estimate", "Standardized estimates and contrasts from a stacked CSV");
  est->add_option("--input", ec.input, "Stacked CSV file")->required();
  est->add_option("--out", ec.out_dir, "Output directory")->required();
  est->add_option("--vaccine", ec.vaccines, "Vaccine label (repeatable)")->required();
  est->add_option("--ref-trials", ec.ref_trials_text, "Referent trials, e.g. 1,2")
      ->required();
  est->add_option("--ws", ec.ws_text, "Standardization covariates, comma-separated");
  est->add_option("--wdelta", ec.wdelta_text, "Sampling covariates, comma-separated");
  est->add_option("--scale", ec.scales,
                  "Outcome scale per analysis: identity, log10 or binary (repeatable)");
  est->add_option("--s-col", ec.s_cols, "Immune response column per analysis");
  est->add_option("--contrast", ec.contrast_texts, "Vaccine pair A,B (repeatable)");
  est->add_option("--truncation", ec.truncation_text, "Probability bounds lo,hi");
  est->add_option("--gdelta", ec.gdelta, "Sampling probabilities: known or estimate");
  est->add_option("--registry", ec.registry, "Registry override JSON");
  est->add_option("--seed", ec.seed, "Seed recorded in outputs");

  CLI::App* sim = app.add_subcommand("simulate", "Monte Carlo evaluation of a scenario");
  sim->add_option("--preset", sc.preset, "scenario1, scenario2 or scenario3");
  sim->add_option("--scenario-config", sc.config_path, "Scenario JSON file");
  sim->add_option("--reps", sc.reps, "Replicates");
  sim->add_option("--seed", sc.seed, "Base seed (required)")
      ->each([&sc](const std::string&) { sc.seed_given = true; });
  sim->add_option("--gdelta", sc.gdelta, "Sampling probabilities: known or estimate");
  sim->add_option("--out", sc.out_dir, "Output directory")->required();
  sim->add_option("--threads", sc.threads, "Worker cap (XTRIAL_THREADS also caps)");

  CLI::App* rep = app.add_subcommand("report", "Render stored results as markdown");
  rep->add_option("--results", rc.results_dir, "Results directory")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (est->parsed()) return cmd_estimate(ec);
    if (sim->parsed()) {
      if (sc.preset.empty() == sc.config_path.empty()) {
        std::cerr << "error: simulate needs exactly one of --preset or --scenario-config\n";
        return kExitInput;
      }
      return cmd_simulate(sc);
    }
    if (rep->parsed()) return cmd_report(rc);
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const SchemaError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const DomainError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const EstimationError& e) {
    std::cerr << "estimation failure: " << e.what() << '\n';
    return kExitEstimation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  }
  return kExitInput;
}

}  // namespace xtrial
