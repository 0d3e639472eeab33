#pragma once

#include <span>
#include <string>
#include <vector>

#include "xtrial/dataset.hpp"
#include "xtrial/glm.hpp"

namespace xtrial {

// One-hot expansion happens here, at the learner boundary, never in storage.
// Categorical levels (and the observed y levels) are scanned over the whole
// dataset so columns are stable between a fit on one row subset and
// prediction on another; the lexicographically first level is the reference.
// The missing y level ("y is a three-level categorical") expands like any
// other level.
struct DesignSpec {
  std::vector<std::string> covariates;
  bool include_y = false;
  bool include_arm = false;  // arm indicators (sampling models)
};

// Materializes the design for the given rows, in the given order. A missing
// value of a requested covariate on a materialized row is a DomainError.
DesignMatrix make_design(const StackedDataset& ds, const DesignSpec& spec,
                         std::span<const std::size_t> rows);

// All rows.
DesignMatrix make_design(const StackedDataset& ds, const DesignSpec& spec);

}  // namespace xtrial
