// Apache License, Version 2.0, refer to LICENSE.txt

#include "catmix/compare.hh"

#include <algorithm>
#include <tuple>

#include "catmix/errors.hh"
#include "catmix/format.hh"

namespace catmix {

namespace {

std::vector<long> distinct(std::span<const long> v) {
  std::vector<long> out(v.begin(), v.end());
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::size_t position(const std::vector<long>& labels, long v) {
  return static_cast<std::size_t>(std::lower_bound(labels.begin(), labels.end(), v) - labels.begin());
}

}  // namespace

double CrossTab::percent(std::size_t r, std::size_t c) const {
  const auto denom = orientation == PercentOrientation::column ? col_totals[c] : row_totals[r];
  return denom == 0 ? 0.0 : 100.0 * static_cast<double>(counts[r][c]) / static_cast<double>(denom);
}

CrossTab crosstab(std::span<const long> labels_a, std::span<const long> labels_b,
                  PercentOrientation orientation) {
  if (labels_a.size() != labels_b.size())
    throw InputError("crosstab: partitions have different lengths (" +
                     std::to_string(labels_a.size()) + " vs " + std::to_string(labels_b.size()) + ")");
  if (labels_a.empty()) throw InputError("crosstab: empty partitions");
  CrossTab t;
  t.orientation = orientation;
  t.row_labels = distinct(labels_a);
  t.col_labels = distinct(labels_b);
  t.counts.assign(t.rows(), std::vector<std::size_t>(t.cols(), 0));
  t.row_totals.assign(t.rows(), 0);
  t.col_totals.assign(t.cols(), 0);
  for (std::size_t i = 0; i < labels_a.size(); ++i) {
    const auto r = position(t.row_labels, labels_a[i]);
    const auto c = position(t.col_labels, labels_b[i]);
    ++t.counts[r][c];
    ++t.row_totals[r];
    ++t.col_totals[c];
  }
  t.total = labels_a.size();
  return t;
}

CrossTab transpose(const CrossTab& t) {
  CrossTab o;
  o.row_labels = t.col_labels;
  o.col_labels = t.row_labels;
  o.row_totals = t.col_totals;
  o.col_totals = t.row_totals;
  o.total = t.total;
  o.orientation = t.orientation == PercentOrientation::column ? PercentOrientation::row
                                                              : PercentOrientation::column;
  o.counts.assign(t.cols(), std::vector<std::size_t>(t.rows(), 0));
  for (std::size_t r = 0; r < t.rows(); ++r)
    for (std::size_t c = 0; c < t.cols(); ++c) o.counts[c][r] = t.counts[r][c];
  return o;
}

Agreement agreement(const CrossTab& t) {
  Agreement a;
  const bool by_col = t.orientation == PercentOrientation::column;
  const auto outer = by_col ? t.cols() : t.rows();
  const auto inner = by_col ? t.rows() : t.cols();
  auto cell = [&](std::size_t o, std::size_t i) { return by_col ? t.counts[i][o] : t.counts[o][i]; };
  std::size_t matched = 0;
  for (std::size_t o = 0; o < outer; ++o) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < inner; ++i)
      if (cell(o, i) > cell(o, best)) best = i;
    a.best_match.push_back(best);
    a.max_percent.push_back(by_col ? t.percent(best, o) : t.percent(o, best));
    matched += cell(o, best);
  }
  a.many_to_one = static_cast<double>(matched) / static_cast<double>(t.total);

  std::vector<std::tuple<std::size_t, std::size_t, std::size_t>> cells;
  for (std::size_t r = 0; r < t.rows(); ++r)
    for (std::size_t c = 0; c < t.cols(); ++c) cells.emplace_back(t.counts[r][c], r, c);
  std::stable_sort(cells.begin(), cells.end(),
                   [](const auto& x, const auto& y) { return std::get<0>(x) > std::get<0>(y); });
  std::vector<bool> row_used(t.rows(), false), col_used(t.cols(), false);
  std::size_t diag = 0;
  for (const auto& [n, r, c] : cells) {
    if (row_used[r] || col_used[c]) continue;
    row_used[r] = col_used[c] = true;
    diag += n;
  }
  a.one_to_one = static_cast<double>(diag) / static_cast<double>(t.total);
  return a;
}

std::string to_text(const CrossTab& t) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> head{""};
  for (auto c : t.col_labels) head.push_back(std::to_string(c));
  head.push_back("Total");
  rows.push_back(head);
  for (std::size_t r = 0; r < t.rows(); ++r) {
    std::vector<std::string> line{std::to_string(t.row_labels[r])};
    for (std::size_t c = 0; c < t.cols(); ++c)
      line.push_back(std::to_string(t.counts[r][c]) + " (" + textfmt::fixed(t.percent(r, c), 1) + "%)");
    line.push_back(std::to_string(t.row_totals[r]));
    rows.push_back(line);
  }
  std::vector<std::string> tot{"Total"};
  for (auto v : t.col_totals) tot.push_back(std::to_string(v));
  tot.push_back(std::to_string(t.total));
  rows.push_back(tot);
  return textfmt::align_table(rows);
}

std::string to_csv(const CrossTab& t) {
  std::string out = "a,b,count,percent\n";
  for (std::size_t r = 0; r < t.rows(); ++r)
    for (std::size_t c = 0; c < t.cols(); ++c)
      out += std::to_string(t.row_labels[r]) + "," + std::to_string(t.col_labels[c]) + "," +
             std::to_string(t.counts[r][c]) + "," + textfmt::exact(t.percent(r, c)) + "\n";
  return out;
}

nlohmann::json to_json(const CrossTab& t, const Agreement& a) {
  nlohmann::json pct = nlohmann::json::array();
  for (std::size_t r = 0; r < t.rows(); ++r) {
    std::vector<double> row;
    for (std::size_t c = 0; c < t.cols(); ++c) row.push_back(t.percent(r, c));
    pct.push_back(row);
  }
  return {{"row_labels", t.row_labels},
          {"col_labels", t.col_labels},
          {"counts", t.counts},
          {"percent", pct},
          {"percent_orientation", t.orientation == PercentOrientation::column ? "column" : "row"},
          {"row_totals", t.row_totals},
          {"col_totals", t.col_totals},
          {"total", t.total},
          {"max_percent", a.max_percent},
          {"many_to_one_agreement", a.many_to_one},
          {"one_to_one_agreement", a.one_to_one}};
}

}  // namespace catmix
