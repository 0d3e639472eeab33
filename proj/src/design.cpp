#include "xtrial/design.hpp"

#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

#include "xtrial/errors.hpp"

namespace xtrial {

DesignMatrix make_design(const StackedDataset& ds, const DesignSpec& spec,
                         std::span<const std::size_t> rows) {
  const std::size_t n = rows.size();

  struct Column {
    std::string name;
    std::vector<double> values;
  };
  std::vector<Column> cols;
  cols.push_back({"(Intercept)", std::vector<double>(n, 1.0)});

  if (spec.include_y) {
    // Level presence is scanned globally so the column set does not depend
    // on which rows are materialized. Reference level is y=0.
    std::set<int> present;
    for (std::size_t i = 0; i < ds.size(); ++i) present.insert(ds.y(i));
    auto add_level = [&](int level, const std::string& name) {
      if (!present.count(level)) return;
      Column c{name, std::vector<double>(n, 0.0)};
      for (std::size_t k = 0; k < n; ++k) c.values[k] = ds.y(rows[k]) == level ? 1.0 : 0.0;
      cols.push_back(std::move(c));
    };
    if (present.count(0)) {
      add_level(1, "y=1");
      add_level(kMissingY, "y=missing");
    } else if (present.count(1)) {
      add_level(kMissingY, "y=missing");
    }
  }

  if (spec.include_arm) {
    std::set<int> arms;
    for (std::size_t i = 0; i < ds.size(); ++i) arms.insert(ds.arm(i));
    bool first = true;
    for (int a : arms) {
      if (first) { first = false; continue; }  // reference arm
      Column c{"arm=" + std::to_string(a), std::vector<double>(n, 0.0)};
      for (std::size_t k = 0; k < n; ++k) c.values[k] = ds.arm(rows[k]) == a ? 1.0 : 0.0;
      cols.push_back(std::move(c));
    }
  }

  for (const auto& name : spec.covariates) {
    const CovariateColumn* cov = ds.find_covariate(name);
    if (!cov)
      throw std::invalid_argument("make_design: unknown covariate '" + name + "'");
    if (!cov->categorical) {
      Column c{name, std::vector<double>(n, 0.0)};
      for (std::size_t k = 0; k < n; ++k) {
        const double v = cov->numeric[rows[k]];
        if (std::isnan(v))
          throw DomainError("make_design: missing value of '" + name + "' at unit " +
                            std::to_string(rows[k]));
        c.values[k] = v;
      }
      cols.push_back(std::move(c));
    } else {
      for (std::size_t k = 0; k < n; ++k)
        if (cov->level_idx[rows[k]] < 0)
          throw DomainError("make_design: missing value of '" + name + "' at unit " +
                            std::to_string(rows[k]));
      for (std::size_t lev = 1; lev < cov->levels.size(); ++lev) {
        Column c{name + "=" + cov->levels[lev], std::vector<double>(n, 0.0)};
        for (std::size_t k = 0; k < n; ++k)
          c.values[k] =
              static_cast<std::size_t>(cov->level_idx[rows[k]]) == lev ? 1.0 : 0.0;
        cols.push_back(std::move(c));
      }
    }
  }

  DesignMatrix x;
  x.rows = n;
  x.cols = cols.size();
  x.data.resize(n * cols.size());
  x.col_names.reserve(cols.size());
  for (std::size_t j = 0; j < cols.size(); ++j) {
    x.col_names.push_back(cols[j].name);
    for (std::size_t i = 0; i < n; ++i) x.data[i * x.cols + j] = cols[j].values[i];
  }
  return x;
}

DesignMatrix make_design(const StackedDataset& ds, const DesignSpec& spec) {
  std::vector<std::size_t> rows(ds.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return make_design(ds, spec, rows);
}

}  // namespace xtrial
