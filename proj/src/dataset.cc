// Apache License, Version 2.0, refer to LICENSE.txt

#include "catmix/dataset.hh"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

#include "catmix/errors.hh"
#include "catmix/stats.hh"

namespace catmix {

namespace {

void check_unique_names(const std::vector<std::string>& names) {
  std::set<std::string> seen;
  for (const auto& n : names) {
    if (n.empty()) throw InputError("empty column name");
    if (!seen.insert(n).second)
      throw InputError("duplicate column name '" + n + "'");
  }
}

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(',', start);
    if (pos == std::string::npos) {
      out.push_back(trim(std::string_view(line).substr(start)));
      break;
    }
    out.push_back(trim(std::string_view(line).substr(start, pos - start)));
    start = pos + 1;
  }
  return out;
}

bool is_missing(const std::string& cell) {
  if (cell.empty()) return true;
  std::string lower = cell;
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return lower == "na" || lower == "nan" || lower == ".";
}

std::optional<double> parse_number(const std::string& cell) {
  double v = 0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || !std::isfinite(v)) return std::nullopt;
  return v;
}

enum class Role { indicator, covariate, outcome };

struct ColumnSpec {
  std::string name;
  std::size_t field;
  Role role;
};

std::string role_name(Role r) {
  switch (r) {
    case Role::indicator: return "indicator";
    case Role::covariate: return "covariate";
    case Role::outcome: return "outcome";
  }
  return "";
}

std::vector<ColumnSpec> resolve_columns(const std::vector<std::string>& header,
                                        const Schema& schema) {
  std::vector<ColumnSpec> specs;
  if (schema.empty()) {
    for (std::size_t f = 0; f < header.size(); ++f) {
      const auto& h = header[f];
      if (h.size() < 3 || h[1] != ':') continue;
      Role role;
      switch (h[0]) {
        case 'i': role = Role::indicator; break;
        case 'c': role = Role::covariate; break;
        case 'y': role = Role::outcome; break;
        default: continue;
      }
      specs.push_back({h.substr(2), f, role});
    }
  } else {
    std::unordered_map<std::string, std::size_t> where;
    for (std::size_t f = 0; f < header.size(); ++f) {
      // Prefixed headers also answer to their bare name.
      std::string bare = header[f];
      if (bare.size() >= 3 && bare[1] == ':' &&
          (bare[0] == 'i' || bare[0] == 'c' || bare[0] == 'y'))
        bare = bare.substr(2);
      where.emplace(header[f], f);
      where.emplace(bare, f);
    }
    auto add = [&](const std::vector<std::string>& names, Role role) {
      for (const auto& n : names) {
        auto it = where.find(n);
        if (it == where.end())
          throw InputError("unknown column '" + n + "' (" + role_name(role) +
                           ") not present in header");
        specs.push_back({n, it->second, role});
      }
    };
    add(schema.indicators, Role::indicator);
    add(schema.covariates, Role::covariate);
    add(schema.outcomes, Role::outcome);
  }
  std::vector<std::string> names;
  for (const auto& s : specs) names.push_back(s.name);
  check_unique_names(names);
  if (std::none_of(specs.begin(), specs.end(),
                   [](const ColumnSpec& s) { return s.role == Role::indicator; }))
    throw InputError(
        "no indicator columns: pass --indicators or prefix header cells with 'i:'");
  return specs;
}

}  // namespace

CategoricalDataset::CategoricalDataset(
    std::vector<std::uint8_t> indicators, std::vector<std::string> indicator_names,
    std::vector<NamedColumn<std::uint8_t>> covariates,
    std::vector<NamedColumn<double>> outcomes)
    : j_(indicator_names.size()),
      indicators_(std::move(indicators)),
      indicator_names_(std::move(indicator_names)),
      covariates_(std::move(covariates)),
      outcomes_(std::move(outcomes)) {
  if (j_ == 0) throw InputError("dataset needs at least one indicator");
  if (indicators_.size() % j_ != 0)
    throw InputError("indicator matrix size is not a multiple of J");
  n_ = indicators_.size() / j_;
  if (n_ == 0) throw InputError("dataset has no rows");
  for (std::size_t i = 0; i < indicators_.size(); ++i)
    if (indicators_[i] > 1)
      throw InputError("indicator '" + indicator_names_[i % j_] + "', row " +
                       std::to_string(i / j_ + 1) + ": value is not 0/1");
  std::vector<std::string> all = indicator_names_;
  for (const auto& c : covariates_) {
    all.push_back(c.name);
    if (c.values.size() != n_)
      throw InputError("covariate '" + c.name + "' has wrong length");
    for (std::size_t i = 0; i < n_; ++i)
      if (c.values[i] > 1)
        throw InputError("covariate '" + c.name + "', row " +
                         std::to_string(i + 1) + ": value is not 0/1");
  }
  for (const auto& o : outcomes_) {
    all.push_back(o.name);
    if (o.values.size() != n_)
      throw InputError("outcome '" + o.name + "' has wrong length");
    for (std::size_t i = 0; i < n_; ++i)
      if (!std::isfinite(o.values[i]))
        throw InputError("outcome '" + o.name + "', row " +
                         std::to_string(i + 1) + ": value is not finite");
  }
  check_unique_names(all);
}

CategoricalDataset CategoricalDataset::from_rows(
    const std::vector<std::vector<int>>& rows, std::vector<std::string> names) {
  if (rows.empty()) throw InputError("dataset has no rows");
  const std::size_t j = rows.front().size();
  if (names.empty())
    for (std::size_t c = 0; c < j; ++c) names.push_back("u" + std::to_string(c + 1));
  if (names.size() != j) throw InputError("indicator name count does not match row width");
  std::vector<std::uint8_t> cells;
  cells.reserve(rows.size() * j);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != j)
      throw InputError("row " + std::to_string(i + 1) + " has wrong width");
    for (std::size_t c = 0; c < j; ++c) {
      if (rows[i][c] != 0 && rows[i][c] != 1)
        throw InputError("indicator '" + names[c] + "', row " +
                         std::to_string(i + 1) + ": value is not 0/1");
      cells.push_back(static_cast<std::uint8_t>(rows[i][c]));
    }
  }
  return CategoricalDataset(std::move(cells), std::move(names));
}

const NamedColumn<std::uint8_t>& CategoricalDataset::covariate(
    const std::string& name) const {
  for (const auto& c : covariates_)
    if (c.name == name) return c;
  std::string avail;
  for (const auto& c : covariates_) avail += (avail.empty() ? "" : ", ") + c.name;
  throw InputError("unknown covariate '" + name + "' (available: " +
                   (avail.empty() ? "none" : avail) + ")");
}

const NamedColumn<double>& CategoricalDataset::outcome(const std::string& name) const {
  for (const auto& o : outcomes_)
    if (o.name == name) return o;
  std::string avail;
  for (const auto& o : outcomes_) avail += (avail.empty() ? "" : ", ") + o.name;
  throw InputError("unknown outcome '" + name + "' (available: " +
                   (avail.empty() ? "none" : avail) + ")");
}

CategoricalDataset CategoricalDataset::subset(std::span<const std::size_t> rows) const {
  std::vector<std::uint8_t> cells;
  cells.reserve(rows.size() * j_);
  for (auto r : rows) {
    if (r >= n_) throw InputError("subset row index out of range");
    auto src = row(r);
    cells.insert(cells.end(), src.begin(), src.end());
  }
  auto pick = [&](const auto& cols) {
    auto out = cols;
    for (auto& c : out) {
      c.values.clear();
      c.values.reserve(rows.size());
    }
    for (std::size_t k = 0; k < cols.size(); ++k)
      for (auto r : rows) out[k].values.push_back(cols[k].values[r]);
    return out;
  };
  return CategoricalDataset(std::move(cells), indicator_names_, pick(covariates_),
                            pick(outcomes_));
}

nlohmann::json to_json(const Schema& schema) {
  return {{"indicators", schema.indicators},
          {"covariates", schema.covariates},
          {"outcomes", schema.outcomes}};
}

Schema schema_from_json(const nlohmann::json& j) {
  Schema s;
  if (j.is_null()) return s;
  s.indicators = j.value("indicators", std::vector<std::string>{});
  s.covariates = j.value("covariates", std::vector<std::string>{});
  s.outcomes = j.value("outcomes", std::vector<std::string>{});
  return s;
}

LoadResult parse_csv(const std::string& text, const Schema& schema) {
  std::istringstream in(text);
  std::string line;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    if (!trim(line).empty()) {
      header = split_fields(line);
      break;
    }
  }
  if (header.empty()) throw InputError("empty file: a header row is required");
  if (!header.front().empty() && header.front().rfind("\xEF\xBB\xBF", 0) == 0)
    header.front().erase(0, 3);

  const auto specs = resolve_columns(header, schema);

  std::vector<std::string> ind_names;
  std::vector<NamedColumn<std::uint8_t>> covs;
  std::vector<NamedColumn<double>> outs;
  for (const auto& s : specs) {
    if (s.role == Role::indicator) ind_names.push_back(s.name);
    if (s.role == Role::covariate) covs.push_back({s.name, {}});
    if (s.role == Role::outcome) outs.push_back({s.name, {}});
  }

  std::vector<std::uint8_t> cells;
  std::vector<RejectedRow> rejected;
  std::size_t data_row = 0;
  std::vector<std::uint8_t> row_ind;
  std::vector<std::uint8_t> row_cov;
  std::vector<double> row_out;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++data_row;
    auto fields = split_fields(line);
    if (fields.size() != header.size())
      throw InputError("row " + std::to_string(data_row) + ": expected " +
                       std::to_string(header.size()) + " fields, found " +
                       std::to_string(fields.size()));
    row_ind.clear();
    row_cov.clear();
    row_out.clear();
    std::optional<std::string> missing;
    for (const auto& s : specs) {
      const auto& cell = fields[s.field];
      if (is_missing(cell)) {
        if (!missing) missing = s.name;
        continue;
      }
      auto v = parse_number(cell);
      const auto where = role_name(s.role) + " '" + s.name + "', row " +
                         std::to_string(data_row);
      if (s.role == Role::outcome) {
        if (!v) throw InputError(where + ": value '" + cell + "' is not numeric");
        row_out.push_back(*v);
      } else {
        if (!v || (*v != 0.0 && *v != 1.0))
          throw InputError(where + ": value '" + cell + "' is not binary (0/1)");
        (s.role == Role::indicator ? row_ind : row_cov)
            .push_back(static_cast<std::uint8_t>(*v));
      }
    }
    if (missing) {
      rejected.push_back({data_row, *missing});
      continue;
    }
    cells.insert(cells.end(), row_ind.begin(), row_ind.end());
    for (std::size_t k = 0; k < covs.size(); ++k) covs[k].values.push_back(row_cov[k]);
    for (std::size_t k = 0; k < outs.size(); ++k) outs[k].values.push_back(row_out[k]);
  }
  if (data_row == 0) throw InputError("file has a header but no data rows");
  if (cells.empty())
    throw InputError("all " + std::to_string(data_row) +
                     " data rows were rejected for missing values");
  return {CategoricalDataset(std::move(cells), std::move(ind_names), std::move(covs),
                             std::move(outs)),
          std::move(rejected)};
}

LoadResult load_csv(const std::filesystem::path& path, const Schema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_csv(buf.str(), schema);
}

Description describe(const CategoricalDataset& ds) {
  Description d;
  d.names = ds.indicator_names();
  d.proportions.assign(ds.j(), 0.0);
  d.histogram.assign(ds.j() + 1, 0);
  std::vector<double> counts(ds.n());
  std::vector<std::size_t> col_sum(ds.j(), 0);
  for (std::size_t i = 0; i < ds.n(); ++i) {
    std::size_t c = 0;
    for (std::size_t j = 0; j < ds.j(); ++j) {
      col_sum[j] += ds.at(i, j);
      c += ds.at(i, j);
    }
    counts[i] = static_cast<double>(c);
    ++d.histogram[c];
  }
  for (std::size_t j = 0; j < ds.j(); ++j)
    d.proportions[j] = static_cast<double>(col_sum[j]) / static_cast<double>(ds.n());
  d.mean_selected = stats::mean(counts);
  d.sd_selected = stats::sample_sd(counts);
  return d;
}

nlohmann::json to_json(const Description& d) {
  nlohmann::json props = nlohmann::json::object();
  for (std::size_t j = 0; j < d.names.size(); ++j) props[d.names[j]] = d.proportions[j];
  return {{"proportions", props},
          {"indicator_order", d.names},
          {"selection_histogram", d.histogram},
          {"mean_selected", d.mean_selected},
          {"sd_selected", d.sd_selected}};
}

PatternTable collapse_patterns(const CategoricalDataset& ds) {
  PatternTable t;
  t.j = ds.j();
  t.row_pattern.resize(ds.n());
  std::map<std::vector<std::uint8_t>, std::size_t> index;
  for (std::size_t i = 0; i < ds.n(); ++i) {
    auto r = ds.row(i);
    std::vector<std::uint8_t> key(r.begin(), r.end());
    auto [it, inserted] = index.emplace(std::move(key), t.weights.size());
    if (inserted) {
      t.patterns.insert(t.patterns.end(), r.begin(), r.end());
      t.weights.push_back(0.0);
    }
    t.weights[it->second] += 1.0;
    t.row_pattern[i] = it->second;
  }
  return t;
}

}  // namespace catmix
