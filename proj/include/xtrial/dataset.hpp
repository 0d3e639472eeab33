#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace xtrial {

// Outcome scale an estimand is computed on. log10 estimands are reported on
// the log scale; exponentiation happens only when forming ratio contrasts.
enum class OutcomeScale { identity, log10, binary };

OutcomeScale parse_scale(const std::string& s);
std::string scale_name(OutcomeScale s);

inline constexpr int kMissingY = -1;

enum class TrialDesign { all_sampled, two_phase };

struct TrialInfo {
  int label = 0;
  TrialDesign design = TrialDesign::all_sampled;
  std::vector<std::string> covariates_collected;  // sorted names
  std::vector<int> vaccines;                      // arms observed, sorted

  bool collects(const std::string& covariate) const;
  bool evaluates(int arm) const;
};

// One covariate column across the whole stacked dataset. Numeric columns use
// NaN for missing; categorical columns use level index -1. Levels are sorted
// lexicographically and the first level is the one-hot reference.
struct CovariateColumn {
  std::string name;
  bool categorical = false;
  std::vector<double> numeric;           // used when !categorical
  std::vector<std::int32_t> level_idx;   // used when categorical
  std::vector<std::string> levels;

  bool missing_at(std::size_t i) const;
};

// A materialized single row; used for ingestion and round-trip serialization.
struct ObservedUnit {
  int trial = 0;
  int arm = 0;
  int delta = 1;
  std::optional<double> s;              // present iff delta == 1
  int y = kMissingY;                    // 0, 1, or kMissingY
  std::optional<double> weight_known;   // in (0, 1] when present
  std::vector<std::pair<std::string, std::string>> covariates;  // name -> raw text
};

// Immutable after load; safe to share read-only across workers.
class StackedDataset {
 public:
  std::size_t size() const { return trial_.size(); }

  int trial(std::size_t i) const { return trial_[i]; }
  int arm(std::size_t i) const { return arm_[i]; }
  int delta(std::size_t i) const { return delta_[i]; }
  bool has_s(std::size_t i) const;
  double s(std::size_t i) const { return s_[i]; }  // NaN when absent
  int y(std::size_t i) const { return y_[i]; }
  bool has_weight_known(std::size_t i) const;
  double weight_known(std::size_t i) const { return weight_[i]; }

  const std::map<int, TrialInfo>& registry() const { return registry_; }
  const TrialInfo& trial_info(int label) const;
  std::vector<int> trial_labels() const;
  std::vector<int> vaccine_labels() const;  // all arms seen anywhere

  const std::vector<CovariateColumn>& covariates() const { return covariates_; }
  const CovariateColumn* find_covariate(const std::string& name) const;

  // Construction (load_stacked_csv and the simulator are the clients).
  struct Builder {
    std::vector<int> trial, arm, delta, y;
    std::vector<double> s, weight;  // NaN = absent
    std::vector<CovariateColumn> covariates;
    std::optional<std::map<int, TrialInfo>> registry_override;
    StackedDataset build() const;  // infers registry unless overridden
  };

 private:
  std::vector<int> trial_, arm_, delta_, y_;
  std::vector<double> s_, weight_;
  std::vector<CovariateColumn> covariates_;
  std::map<int, TrialInfo> registry_;
};

// Column mapping for the stacked CSV layout. Column names not mentioned here
// are treated as covariates when covariate_cols is empty.
struct CsvSchema {
  std::string trial_col = "trial";
  std::string arm_col = "arm";
  std::string delta_col = "delta";
  std::string s_col = "s";
  std::string y_col = "y";
  std::string weight_col = "weight";  // empty string: no weight column
  std::vector<std::string> covariate_cols;
};

// CSV in, CSV out. Empty cell = missing; header row required; UTF-8.
StackedDataset load_stacked_csv(const std::string& path, const CsvSchema& schema = {});
StackedDataset load_stacked_csv(const std::string& path, const CsvSchema& schema,
                                const std::string& registry_json_path);
void write_stacked_csv(const StackedDataset& ds, const std::string& path,
                       const CsvSchema& schema = {});

// Registry override parsed from JSON text: {"trials": {"1": {"design":
// "two_phase", "covariates": ["w1", ...]}}}. Unlisted trials keep their
// inferred entries.
std::map<int, TrialInfo> parse_registry_json(const std::string& json_text,
                                             const std::map<int, TrialInfo>& inferred);

struct EstimandSpec {
  int vaccine_a = 0;
  std::vector<int> t_ref;               // referent trials, sorted, non-empty
  std::vector<int> t_a;                 // trials evaluating vaccine_a, sorted
  std::vector<std::string> w_s;         // standardization covariates
  std::vector<std::string> w_delta;     // sampling covariates
  OutcomeScale scale = OutcomeScale::identity;
  double trunc_lo = 0.005;
  double trunc_hi = 0.995;

  bool ref_contains(int trial) const;
  bool ta_contains(int trial) const;
  // Union w_s + w_delta, w_s order first, duplicates removed.
  std::vector<std::string> w_delta_s() const;
};

struct ValidationReport {
  struct Availability {
    std::string covariate;
    int trial = 0;
    bool required = true;  // false: pair not constrained by the spec
    bool pass = true;
  };
  std::vector<Availability> covariate_availability;
  std::vector<std::string> failures;             // enumerated offending pairs
  std::vector<std::string> positivity_warnings;  // strata with no A=a units
  struct SamplingDiag {
    int trial = 0;
    double delta_fraction = 1.0;
    double weight_min = 1.0, weight_max = 1.0;  // over known weights
  };
  std::vector<SamplingDiag> sampling_diagnostics;
  std::vector<std::string> warnings;

  bool passed() const { return failures.empty(); }
  std::string summary() const;
};

// Diagnostic only: failures are reported, never thrown. Pure in ds and spec.
ValidationReport validate(const StackedDataset& ds, const EstimandSpec& spec);

}  // namespace xtrial
