// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace catmix {

template <class T>
struct NamedColumn {
  std::string name;
  std::vector<T> values;
};

// N x J matrix of binary indicators plus optional auxiliary columns.
// Immutable once constructed; every constructor path validates.
class CategoricalDataset {
 public:
  CategoricalDataset(std::vector<std::uint8_t> indicators,
                     std::vector<std::string> indicator_names,
                     std::vector<NamedColumn<std::uint8_t>> covariates = {},
                     std::vector<NamedColumn<double>> outcomes = {});

  // Convenience for tests and simulation: rows given as nested vectors,
  // indicator names default to u1..uJ.
  static CategoricalDataset from_rows(
      const std::vector<std::vector<int>>& rows,
      std::vector<std::string> indicator_names = {});

  std::size_t n() const { return n_; }
  std::size_t j() const { return j_; }

  std::span<const std::uint8_t> row(std::size_t i) const {
    return {indicators_.data() + i * j_, j_};
  }
  std::uint8_t at(std::size_t i, std::size_t col) const {
    return indicators_[i * j_ + col];
  }
  std::span<const std::uint8_t> indicators() const { return indicators_; }
  const std::vector<std::string>& indicator_names() const {
    return indicator_names_;
  }
  const std::vector<NamedColumn<std::uint8_t>>& covariates() const {
    return covariates_;
  }
  const std::vector<NamedColumn<double>>& outcomes() const { return outcomes_; }

  // Throws InputError naming the available columns when absent.
  const NamedColumn<std::uint8_t>& covariate(const std::string& name) const;
  const NamedColumn<double>& outcome(const std::string& name) const;

  // New dataset made of the given rows (repeats allowed), auxiliary columns
  // carried along. Used for bootstrap resampling.
  CategoricalDataset subset(std::span<const std::size_t> rows) const;

 private:
  std::size_t n_ = 0;
  std::size_t j_ = 0;
  std::vector<std::uint8_t> indicators_;
  std::vector<std::string> indicator_names_;
  std::vector<NamedColumn<std::uint8_t>> covariates_;
  std::vector<NamedColumn<double>> outcomes_;
};

// Column roles. An empty schema means "use header prefixes": a header cell
// `i:name` is an indicator, `c:name` a binary covariate, `y:name` a real
// outcome; unprefixed columns are ignored.
struct Schema {
  std::vector<std::string> indicators;
  std::vector<std::string> covariates;
  std::vector<std::string> outcomes;

  bool empty() const {
    return indicators.empty() && covariates.empty() && outcomes.empty();
  }
};

nlohmann::json to_json(const Schema& schema);
Schema schema_from_json(const nlohmann::json& j);

struct RejectedRow {
  std::size_t row;  // 1-based data row (header excluded)
  std::string column;
};

struct LoadResult {
  CategoricalDataset data;
  // Rows dropped because a required cell was empty or NA. Listwise; no
  // imputation.
  std::vector<RejectedRow> rejected;
};

// Parses a header-first comma-separated file. Throws InputError for empty
// files, unknown schema columns, duplicate names, non-binary indicator or
// covariate values and non-numeric outcome values; the message names the
// column and the 1-based data row.
LoadResult load_csv(const std::filesystem::path& path, const Schema& schema = {});
LoadResult parse_csv(const std::string& text, const Schema& schema = {});

struct Description {
  std::vector<std::string> names;
  std::vector<double> proportions;      // endorsement rate per indicator
  std::vector<std::size_t> histogram;  // rows selecting 0..J indicators
  double mean_selected = 0;
  double sd_selected = 0;  // sample SD
};

Description describe(const CategoricalDataset& ds);
nlohmann::json to_json(const Description& d);

// Distinct response patterns with multiplicities. Patterns appear in order
// of first occurrence; row_pattern maps each input row to its pattern.
struct PatternTable {
  std::size_t j = 0;
  std::vector<std::uint8_t> patterns;  // P x J row-major
  std::vector<double> weights;         // counts, stored as double for EM
  std::vector<std::size_t> row_pattern;

  std::size_t size() const { return weights.size(); }
  std::span<const std::uint8_t> pattern(std::size_t p) const {
    return {patterns.data() + p * j, j};
  }
};

PatternTable collapse_patterns(const CategoricalDataset& ds);

}  // namespace catmix
