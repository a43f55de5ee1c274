// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace catmix {

enum class PercentOrientation { column, row };

// Contingency table of two hard partitions. Rows index the distinct labels of
// the first partition, columns those of the second, both in ascending order.
struct CrossTab {
  std::vector<long> row_labels;
  std::vector<long> col_labels;
  std::vector<std::vector<std::size_t>> counts;  // R x C
  std::vector<std::size_t> row_totals;
  std::vector<std::size_t> col_totals;
  std::size_t total = 0;
  PercentOrientation orientation = PercentOrientation::column;

  std::size_t rows() const { return row_labels.size(); }
  std::size_t cols() const { return col_labels.size(); }
  // Percentage of the cell within its column (or row, by orientation).
  double percent(std::size_t r, std::size_t c) const;
};

CrossTab crosstab(std::span<const long> labels_a, std::span<const long> labels_b,
                  PercentOrientation orientation = PercentOrientation::column);

CrossTab transpose(const CrossTab& t);

struct Agreement {
  std::vector<double> max_percent;  // per column (or row), in percent
  std::vector<std::size_t> best_match;  // index of the maximizing row (or column)
  double many_to_one = 0;  // share of N matched when every column takes its best row
  double one_to_one = 0;   // greedy by count, each row and column used at most once
};

Agreement agreement(const CrossTab& t);

std::string to_text(const CrossTab& t);
std::string to_csv(const CrossTab& t);
nlohmann::json to_json(const CrossTab& t, const Agreement& a);

}  // namespace catmix
