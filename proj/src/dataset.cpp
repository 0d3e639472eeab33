// Stacked multi-trial dataset: CSV ingestion, trial registry bookkeeping,
// and the pre-estimation validation pass.

#include "xtrial/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "xtrial/errors.hpp"

namespace xtrial {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1);
}

bool parse_double(const std::string& text, double& out) {
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

bool parse_int(const std::string& text, int& out) {
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string cell_error(std::size_t row, const std::string& col, const std::string& what) {
  std::ostringstream os;
  os << "row " << row << ", column '" << col << "': " << what;
  return os.str();
}

}  // namespace

OutcomeScale parse_scale(const std::string& s) {
  if (s == "identity") return OutcomeScale::identity;
  if (s == "log10") return OutcomeScale::log10;
  if (s == "binary") return OutcomeScale::binary;
  throw DomainError("unknown scale '" + s + "' (expected identity, log10 or binary)");
}

std::string scale_name(OutcomeScale s) {
  switch (s) {
    case OutcomeScale::identity: return "identity";
    case OutcomeScale::log10: return "log10";
    case OutcomeScale::binary: return "binary";
  }
  return "?";
}

bool TrialInfo::collects(const std::string& covariate) const {
  return std::binary_search(covariates_collected.begin(), covariates_collected.end(),
                            covariate);
}

bool TrialInfo::evaluates(int a) const {
  return std::binary_search(vaccines.begin(), vaccines.end(), a);
}

bool CovariateColumn::missing_at(std::size_t i) const {
  return categorical ? level_idx[i] < 0 : std::isnan(numeric[i]);
}

bool StackedDataset::has_s(std::size_t i) const { return !std::isnan(s_[i]); }
bool StackedDataset::has_weight_known(std::size_t i) const { return !std::isnan(weight_[i]); }

const TrialInfo& StackedDataset::trial_info(int label) const {
  auto it = registry_.find(label);
  if (it == registry_.end())
    throw std::invalid_argument("trial " + std::to_string(label) + " not in registry");
  return it->second;
}

std::vector<int> StackedDataset::trial_labels() const {
  std::vector<int> out;
  out.reserve(registry_.size());
  for (const auto& [label, info] : registry_) out.push_back(label);
  return out;
}

std::vector<int> StackedDataset::vaccine_labels() const {
  std::set<int> arms;
  for (const auto& [label, info] : registry_)
    arms.insert(info.vaccines.begin(), info.vaccines.end());
  return {arms.begin(), arms.end()};
}

const CovariateColumn* StackedDataset::find_covariate(const std::string& name) const {
  for (const auto& c : covariates_)
    if (c.name == name) return &c;
  return nullptr;
}

StackedDataset StackedDataset::Builder::build() const {
  const std::size_t n = trial.size();
  if (arm.size() != n || delta.size() != n || y.size() != n || s.size() != n ||
      weight.size() != n)
    throw std::invalid_argument("StackedDataset::Builder: column lengths differ");
  for (const auto& c : covariates) {
    const std::size_t len = c.categorical ? c.level_idx.size() : c.numeric.size();
    if (len != n)
      throw std::invalid_argument("StackedDataset::Builder: covariate '" + c.name +
                                  "' length differs");
  }

  StackedDataset ds;
  ds.trial_ = trial;
  ds.arm_ = arm;
  ds.delta_ = delta;
  ds.y_ = y;
  ds.s_ = s;
  ds.weight_ = weight;
  ds.covariates_ = covariates;

  for (std::size_t i = 0; i < n; ++i) {
    if (delta[i] != 0 && delta[i] != 1)
      throw DomainError("unit " + std::to_string(i) + ": delta must be 0 or 1");
    if (delta[i] == 0) ds.s_[i] = std::numeric_limits<double>::quiet_NaN();
    if (y[i] != 0 && y[i] != 1 && y[i] != kMissingY)
      throw DomainError("unit " + std::to_string(i) + ": y must be 0, 1 or missing");
    if (!std::isnan(weight[i]) && !(weight[i] > 0.0 && weight[i] <= 1.0))
      throw DomainError("unit " + std::to_string(i) + ": known weight must lie in (0,1]");
  }

  // Infer the registry from observed (trial, arm) pairs and per-trial
  // covariate missingness; a trial is two-phase iff any unit has delta=0.
  std::map<int, TrialInfo> reg;
  for (std::size_t i = 0; i < n; ++i) {
    TrialInfo& info = reg[trial[i]];
    info.label = trial[i];
    if (delta[i] == 0) info.design = TrialDesign::two_phase;
    if (!std::binary_search(info.vaccines.begin(), info.vaccines.end(), arm[i])) {
      info.vaccines.push_back(arm[i]);
      std::sort(info.vaccines.begin(), info.vaccines.end());
    }
  }
  for (const auto& c : ds.covariates_) {
    for (auto& [label, info] : reg) {
      bool any = false;
      for (std::size_t i = 0; i < n && !any; ++i)
        if (trial[i] == label && !c.missing_at(i)) any = true;
      if (any) info.covariates_collected.push_back(c.name);
    }
  }
  for (auto& [label, info] : reg)
    std::sort(info.covariates_collected.begin(), info.covariates_collected.end());

  if (registry_override) {
    for (const auto& [label, info] : *registry_override) reg[label] = info;
  }
  ds.registry_ = std::move(reg);
  return ds;
}

StackedDataset load_stacked_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");

  std::string line;
  if (!std::getline(in, line)) throw ParseError("'" + path + "': empty file");
  const std::vector<std::string> header = split_csv_line(line);

  std::map<std::string, std::size_t> col_of;
  for (std::size_t j = 0; j < header.size(); ++j) {
    const std::string name = trim(header[j]);
    if (col_of.count(name))
      throw SchemaError("duplicate column name '" + name + "' in '" + path + "'");
    col_of[name] = j;
  }

  auto require = [&](const std::string& name) {
    auto it = col_of.find(name);
    if (it == col_of.end())
      throw SchemaError("schema column '" + name + "' not found in '" + path + "'");
    return it->second;
  };
  const std::size_t jt = require(schema.trial_col);
  const std::size_t ja = require(schema.arm_col);
  const std::size_t jd = require(schema.delta_col);
  const std::size_t js = require(schema.s_col);
  const std::size_t jy = require(schema.y_col);
  const bool has_weight = !schema.weight_col.empty() && col_of.count(schema.weight_col);
  const std::size_t jw = has_weight ? col_of[schema.weight_col] : 0;

  std::vector<std::string> covariate_names = schema.covariate_cols;
  if (covariate_names.empty()) {
    std::set<std::size_t> reserved = {jt, ja, jd, js, jy};
    if (has_weight) reserved.insert(jw);
    for (std::size_t j = 0; j < header.size(); ++j)
      if (!reserved.count(j)) covariate_names.push_back(trim(header[j]));
  }
  std::vector<std::size_t> cov_idx;
  for (const auto& name : covariate_names) cov_idx.push_back(require(name));

  StackedDataset::Builder b;
  std::vector<std::vector<std::string>> cov_cells(covariate_names.size());

  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++row;
    const std::vector<std::string> cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw ParseError(cell_error(row, "-", "expected " + std::to_string(header.size()) +
                                               " cells, found " + std::to_string(cells.size())));
    auto cell = [&](std::size_t j) { return trim(cells[j]); };

    int tv, av, dv;
    if (!parse_int(cell(jt), tv))
      throw ParseError(cell_error(row, schema.trial_col, "not an integer: '" + cell(jt) + "'"));
    if (!parse_int(cell(ja), av))
      throw ParseError(cell_error(row, schema.arm_col, "not an integer: '" + cell(ja) + "'"));
    if (!parse_int(cell(jd), dv))
      throw ParseError(cell_error(row, schema.delta_col, "not an integer: '" + cell(jd) + "'"));
    if (dv != 0 && dv != 1)
      throw DomainError(cell_error(row, schema.delta_col, "delta must be 0 or 1"));

    double sv = std::numeric_limits<double>::quiet_NaN();
    const std::string s_text = cell(js);
    if (dv == 1 && !s_text.empty()) {
      if (!parse_double(s_text, sv))
        throw ParseError(cell_error(row, schema.s_col, "not numeric: '" + s_text + "'"));
    }
    // delta=0 rows get s recorded as absent regardless of the cell content.

    int yv = kMissingY;
    const std::string y_text = cell(jy);
    if (!y_text.empty()) {
      if (!parse_int(y_text, yv) || (yv != 0 && yv != 1))
        throw DomainError(cell_error(row, schema.y_col, "y must be 0, 1 or empty"));
    }

    double wv = std::numeric_limits<double>::quiet_NaN();
    if (has_weight) {
      const std::string w_text = cell(jw);
      if (!w_text.empty()) {
        if (!parse_double(w_text, wv))
          throw ParseError(cell_error(row, schema.weight_col, "not numeric: '" + w_text + "'"));
        if (!(wv > 0.0 && wv <= 1.0))
          throw DomainError(cell_error(row, schema.weight_col, "weight must lie in (0,1]"));
      }
    }

    b.trial.push_back(tv);
    b.arm.push_back(av);
    b.delta.push_back(dv);
    b.s.push_back(sv);
    b.y.push_back(yv);
    b.weight.push_back(wv);
    for (std::size_t k = 0; k < cov_idx.size(); ++k) cov_cells[k].push_back(cell(cov_idx[k]));
  }

  // Covariate typing: numeric iff every non-empty cell parses as a number.
  for (std::size_t k = 0; k < covariate_names.size(); ++k) {
    CovariateColumn col;
    col.name = covariate_names[k];
    bool numeric = true;
    for (const auto& text : cov_cells[k]) {
      double v;
      if (!text.empty() && !parse_double(text, v)) {
        numeric = false;
        break;
      }
    }
    col.categorical = !numeric;
    if (numeric) {
      col.numeric.reserve(cov_cells[k].size());
      for (const auto& text : cov_cells[k]) {
        double v = std::numeric_limits<double>::quiet_NaN();
        if (!text.empty()) parse_double(text, v);
        col.numeric.push_back(v);
      }
    } else {
      std::set<std::string> level_set;
      for (const auto& text : cov_cells[k])
        if (!text.empty()) level_set.insert(text);
      col.levels.assign(level_set.begin(), level_set.end());
      col.level_idx.reserve(cov_cells[k].size());
      for (const auto& text : cov_cells[k]) {
        if (text.empty()) {
          col.level_idx.push_back(-1);
        } else {
          const auto it = std::lower_bound(col.levels.begin(), col.levels.end(), text);
          col.level_idx.push_back(static_cast<std::int32_t>(it - col.levels.begin()));
        }
      }
    }
    b.covariates.push_back(std::move(col));
  }

  return b.build();
}

StackedDataset load_stacked_csv(const std::string& path, const CsvSchema& schema,
                                const std::string& registry_json_path) {
  StackedDataset inferred = load_stacked_csv(path, schema);
  std::ifstream in(registry_json_path);
  if (!in) throw ParseError("cannot open registry config '" + registry_json_path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  const std::map<int, TrialInfo> reg = parse_registry_json(buf.str(), inferred.registry());

  StackedDataset::Builder b;
  const std::size_t n = inferred.size();
  for (std::size_t i = 0; i < n; ++i) {
    b.trial.push_back(inferred.trial(i));
    b.arm.push_back(inferred.arm(i));
    b.delta.push_back(inferred.delta(i));
    b.y.push_back(inferred.y(i));
    b.s.push_back(inferred.has_s(i) ? inferred.s(i) : std::numeric_limits<double>::quiet_NaN());
    b.weight.push_back(inferred.has_weight_known(i) ? inferred.weight_known(i)
                                                    : std::numeric_limits<double>::quiet_NaN());
  }
  b.covariates = inferred.covariates();
  b.registry_override = reg;
  return b.build();
}

std::map<int, TrialInfo> parse_registry_json(const std::string& json_text,
                                             const std::map<int, TrialInfo>& inferred) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("registry config: ") + e.what());
  }
  if (!j.contains("trials") || !j["trials"].is_object())
    throw SchemaError("registry config: expected top-level object with 'trials'");

  std::map<int, TrialInfo> out = inferred;
  for (const auto& [key, val] : j["trials"].items()) {
    int label;
    if (!parse_int(key, label))
      throw SchemaError("registry config: trial key '" + key + "' is not an integer");
    TrialInfo info;
    const auto it = inferred.find(label);
    if (it != inferred.end()) info = it->second;
    info.label = label;
    if (val.contains("design")) {
      const std::string d = val["design"].get<std::string>();
      if (d == "all_sampled") info.design = TrialDesign::all_sampled;
      else if (d == "two_phase") info.design = TrialDesign::two_phase;
      else throw SchemaError("registry config: unknown design '" + d + "'");
    }
    if (val.contains("covariates")) {
      info.covariates_collected = val["covariates"].get<std::vector<std::string>>();
      std::sort(info.covariates_collected.begin(), info.covariates_collected.end());
    }
    if (val.contains("vaccines")) {
      info.vaccines = val["vaccines"].get<std::vector<int>>();
      std::sort(info.vaccines.begin(), info.vaccines.end());
    }
    out[label] = info;
  }
  return out;
}

void write_stacked_csv(const StackedDataset& ds, const std::string& path,
                       const CsvSchema& schema) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open '" + path + "' for writing");

  out << schema.trial_col << ',' << schema.arm_col << ',' << schema.delta_col << ','
      << schema.s_col << ',' << schema.y_col;
  if (!schema.weight_col.empty()) out << ',' << schema.weight_col;
  for (const auto& c : ds.covariates()) out << ',' << c.name;
  out << '\n';

  for (std::size_t i = 0; i < ds.size(); ++i) {
    out << ds.trial(i) << ',' << ds.arm(i) << ',' << ds.delta(i) << ',';
    if (ds.has_s(i)) out << format_double(ds.s(i));
    out << ',';
    if (ds.y(i) != kMissingY) out << ds.y(i);
    if (!schema.weight_col.empty()) {
      out << ',';
      if (ds.has_weight_known(i)) out << format_double(ds.weight_known(i));
    }
    for (const auto& c : ds.covariates()) {
      out << ',';
      if (!c.missing_at(i))
        out << (c.categorical ? c.levels[c.level_idx[i]] : format_double(c.numeric[i]));
    }
    out << '\n';
  }
}

bool EstimandSpec::ref_contains(int trial) const {
  return std::binary_search(t_ref.begin(), t_ref.end(), trial);
}

bool EstimandSpec::ta_contains(int trial) const {
  return std::binary_search(t_a.begin(), t_a.end(), trial);
}

std::vector<std::string> EstimandSpec::w_delta_s() const {
  std::vector<std::string> out = w_s;
  for (const auto& name : w_delta)
    if (std::find(out.begin(), out.end(), name) == out.end()) out.push_back(name);
  return out;
}

std::string ValidationReport::summary() const {
  std::ostringstream os;
  os << (passed() ? "validation passed" : "validation FAILED") << "; "
     << failures.size() << " failure(s), " << positivity_warnings.size()
     << " positivity warning(s), " << warnings.size() << " other warning(s)\n";
  for (const auto& f : failures) os << "  FAIL: " << f << '\n';
  for (const auto& w : positivity_warnings) os << "  positivity: " << w << '\n';
  for (const auto& w : warnings) os << "  warning: " << w << '\n';
  return os.str();
}

ValidationReport validate(const StackedDataset& ds, const EstimandSpec& spec) {
  if (spec.t_ref.empty()) throw std::invalid_argument("validate: empty referent set");
  for (int t : spec.t_ref)
    if (!ds.registry().count(t))
      throw std::invalid_argument("validate: referent trial " + std::to_string(t) +
                                  " not present in dataset");
  for (int t : spec.t_a)
    if (!ds.registry().count(t))
      throw std::invalid_argument("validate: evaluation trial " + std::to_string(t) +
                                  " not present in dataset");

  ValidationReport report;

  std::set<int> relevant_trials(spec.t_ref.begin(), spec.t_ref.end());
  relevant_trials.insert(spec.t_a.begin(), spec.t_a.end());
  std::set<std::string> ws(spec.w_s.begin(), spec.w_s.end());
  std::set<std::string> wd(spec.w_delta.begin(), spec.w_delta.end());
  std::set<std::string> all_cov = ws;
  all_cov.insert(wd.begin(), wd.end());

  // Availability verdicts: one per (covariate in W_S + W_Delta, relevant
  // trial). W_S must be collected wherever the trial is referent or
  // evaluates a; W_Delta only where sampling happens (T_a).
  for (const auto& name : all_cov) {
    for (int t : relevant_trials) {
      const bool in_ta = spec.ta_contains(t);
      const bool required = ws.count(name) > 0 || (wd.count(name) > 0 && in_ta);
      const CovariateColumn* col = ds.find_covariate(name);
      const bool collected = col != nullptr && ds.trial_info(t).collects(name);
      ValidationReport::Availability a;
      a.covariate = name;
      a.trial = t;
      a.required = required;
      a.pass = collected || !required;
      report.covariate_availability.push_back(a);
      if (!a.pass)
        report.failures.push_back("covariate '" + name + "' not collected in trial " +
                                  std::to_string(t));
    }
  }

  // Missing required covariate values on relevant units are failures, not an
  // imputation trigger.
  for (const auto& name : all_cov) {
    const CovariateColumn* col = ds.find_covariate(name);
    if (!col) continue;
    std::map<int, std::size_t> missing_count;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const int t = ds.trial(i);
      if (!relevant_trials.count(t)) continue;
      const bool needed = ws.count(name) > 0 || (wd.count(name) > 0 && spec.ta_contains(t));
      if (needed && ds.trial_info(t).collects(name) && col->missing_at(i))
        ++missing_count[t];
    }
    for (const auto& [t, cnt] : missing_count)
      report.failures.push_back("covariate '" + name + "' missing on " +
                                std::to_string(cnt) + " unit(s) of trial " +
                                std::to_string(t));
  }

  // Registry consistency.
  std::map<int, std::size_t> delta0_in_all_sampled;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const TrialInfo& info = ds.trial_info(ds.trial(i));
    if (info.design == TrialDesign::all_sampled && ds.delta(i) == 0)
      ++delta0_in_all_sampled[info.label];
    if (info.design == TrialDesign::all_sampled && ds.has_weight_known(i) &&
        ds.weight_known(i) != 1.0)
      report.warnings.push_back(
          "trial " + std::to_string(info.label) +
          " is registered all-sampled but unit " + std::to_string(i) +
          " carries known weight " + format_double(ds.weight_known(i)) +
          "; the known weight takes precedence");
  }
  for (const auto& [t, cnt] : delta0_in_all_sampled)
    report.failures.push_back("trial " + std::to_string(t) +
                              " registered all-sampled but has " + std::to_string(cnt) +
                              " unit(s) with delta=0");
  for (const auto& [label, info] : ds.registry()) {
    for (const auto& c : ds.covariates()) {
      if (info.collects(c.name)) continue;
      for (std::size_t i = 0; i < ds.size(); ++i) {
        if (ds.trial(i) == label && !c.missing_at(i)) {
          report.failures.push_back("covariate '" + c.name +
                                    "' marked uncollected for trial " +
                                    std::to_string(label) + " but has observed values");
          break;
        }
      }
    }
  }

  // Positivity scrutiny: covariate profiles observable in the referent
  // trials with no A=a unit anywhere relevant.
  const std::size_t kMaxProfiles = 200;
  std::vector<const CovariateColumn*> ws_cols;
  bool ws_available = true;
  for (const auto& name : spec.w_s) {
    const CovariateColumn* col = ds.find_covariate(name);
    if (!col) { ws_available = false; break; }
    ws_cols.push_back(col);
  }
  if (ws_available && !ws_cols.empty()) {
    auto profile_of = [&](std::size_t i) {
      std::string key;
      for (const CovariateColumn* col : ws_cols) {
        key += col->name;
        key += '=';
        key += col->missing_at(i)
                   ? "NA"
                   : (col->categorical ? col->levels[col->level_idx[i]]
                                       : format_double(col->numeric[i]));
        key += ';';
      }
      return key;
    };
    std::map<std::string, std::size_t> ref_profiles;   // profile -> count in T_ref
    std::map<std::string, std::size_t> arm_a_profiles; // profile -> A=a count
    bool too_many = false;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const int t = ds.trial(i);
      const bool in_ref = spec.ref_contains(t);
      const bool in_ta = spec.ta_contains(t);
      if (!in_ref && !in_ta) continue;
      const std::string key = profile_of(i);
      if (in_ref) ++ref_profiles[key];
      if ((in_ref || in_ta) && ds.arm(i) == spec.vaccine_a) ++arm_a_profiles[key];
      if (ref_profiles.size() > kMaxProfiles) { too_many = true; break; }
    }
    if (too_many) {
      report.warnings.push_back(
          "positivity scan skipped: more than " + std::to_string(kMaxProfiles) +
          " distinct W_S profiles (continuous covariates?)");
    } else {
      for (const auto& [key, cnt] : ref_profiles) {
        if (arm_a_profiles.find(key) == arm_a_profiles.end())
          report.positivity_warnings.push_back(
              "stratum {" + key + "} occurs in the referent trials (" +
              std::to_string(cnt) + " unit(s)) but no relevant unit has arm " +
              std::to_string(spec.vaccine_a));
      }
    }
  }

  // Sampling diagnostics per evaluation trial.
  for (int t : spec.t_a) {
    ValidationReport::SamplingDiag d;
    d.trial = t;
    std::size_t n_t = 0, n_sampled = 0;
    double wmin = 1.0, wmax = 0.0;
    bool any_w = false;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      if (ds.trial(i) != t) continue;
      ++n_t;
      if (ds.delta(i) == 1) ++n_sampled;
      if (ds.has_weight_known(i)) {
        any_w = true;
        wmin = std::min(wmin, ds.weight_known(i));
        wmax = std::max(wmax, ds.weight_known(i));
      }
    }
    d.delta_fraction = n_t ? static_cast<double>(n_sampled) / static_cast<double>(n_t) : 1.0;
    d.weight_min = any_w ? wmin : 1.0;
    d.weight_max = any_w ? wmax : 1.0;
    report.sampling_diagnostics.push_back(d);
  }

  // Pooled treatment model extrapolates onto the referent population when it
  // shares no trial with T_a.
  bool overlap = false;
  for (int t : spec.t_ref)
    if (spec.ta_contains(t)) overlap = true;
  if (!overlap && !spec.t_a.empty())
    report.warnings.push_back(
        "referent and evaluation trials are disjoint: the pooled treatment "
        "model extrapolates onto the referent covariate profiles");

  return report;
}

}  // namespace xtrial
