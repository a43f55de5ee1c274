// Apache License, Version 2.0, refer to LICENSE.txt

#include "catmix/report.hh"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include "catmix/compare.hh"
#include "catmix/diagnostics.hh"
#include "catmix/errors.hh"
#include "catmix/format.hh"
#include "catmix/selection.hh"
#include "catmix/threestep.hh"

namespace catmix {

#ifndef CATMIX_BUILD_ID
#define CATMIX_BUILD_ID "catmix-dev"
#endif

const char* build_id() { return CATMIX_BUILD_ID; }

namespace {

using Eigen::Index;

Index ix(std::size_t v) { return static_cast<Index>(v); }

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string pct_label(double v) { return textfmt::fixed(v, 1) + "%"; }

}  // namespace

ProfilePlot emit_profile_plot(const LcaFit& fit, const CategoricalDataset& ds) {
  const auto k = fit.params.classes();
  if (fit.params.items() != ds.j()) throw InputError("profile plot: item count differs from dataset");
  ProfilePlot p;
  p.items = ds.indicator_names();
  std::vector<double> shares(k, 0.0);
  if (static_cast<std::size_t>(fit.posteriors.rows()) == ds.n() && ds.n() > 0)
    shares = mcap(modal_assignment(fit.posteriors), k);
  for (std::size_t c = 0; c < k; ++c) {
    p.series.push_back("Class " + std::to_string(c + 1));
    p.model_percent.push_back(100.0 * fit.params.pi(ix(c)));
    p.assigned_percent.push_back(100.0 * shares[c]);
    std::vector<double> row(ds.j());
    for (std::size_t j = 0; j < ds.j(); ++j) row[j] = fit.params.rho(ix(c), ix(j));
    p.values.push_back(std::move(row));
  }
  return p;
}

ProfilePlot emit_profile_plot(const KModesModel& model, const CategoricalDataset& ds) {
  if (model.assignment.size() != ds.n() || model.j != ds.j())
    throw InputError("profile plot: model does not match dataset");
  ProfilePlot p;
  p.items = ds.indicator_names();
  std::vector<std::vector<double>> sums(model.k, std::vector<double>(ds.j(), 0.0));
  std::vector<std::size_t> sizes(model.k, 0);
  for (std::size_t i = 0; i < ds.n(); ++i) {
    const auto c = model.assignment[i];
    ++sizes[c];
    for (std::size_t j = 0; j < ds.j(); ++j) sums[c][j] += ds.at(i, j);
  }
  for (std::size_t c = 0; c < model.k; ++c) {
    const double share = 100.0 * static_cast<double>(sizes[c]) / static_cast<double>(ds.n());
    p.series.push_back("Cluster " + std::to_string(c + 1));
    p.model_percent.push_back(share);
    p.assigned_percent.push_back(share);
    for (auto& v : sums[c]) v = sizes[c] > 0 ? v / static_cast<double>(sizes[c]) : 0.0;
    p.values.push_back(std::move(sums[c]));
  }
  return p;
}

std::string to_csv(const ProfilePlot& p) {
  std::string out = "series,model_percent,assigned_percent,item,value\n";
  for (std::size_t s = 0; s < p.series.size(); ++s)
    for (std::size_t j = 0; j < p.items.size(); ++j)
      out += csv_field(p.series[s]) + "," + textfmt::exact(p.model_percent[s]) + "," +
             textfmt::exact(p.assigned_percent[s]) + "," + csv_field(p.items[j]) + "," +
             textfmt::exact(p.values[s][j]) + "\n";
  return out;
}

std::string dataset_csv(const CategoricalDataset& ds) {
  std::vector<std::string> head;
  for (const auto& n : ds.indicator_names()) head.push_back(csv_field("i:" + n));
  for (const auto& c : ds.covariates()) head.push_back(csv_field("c:" + c.name));
  for (const auto& y : ds.outcomes()) head.push_back(csv_field("y:" + y.name));
  std::string out;
  for (std::size_t h = 0; h < head.size(); ++h) out += (h ? "," : "") + head[h];
  out += "\n";
  for (std::size_t i = 0; i < ds.n(); ++i) {
    std::string line;
    for (std::size_t j = 0; j < ds.j(); ++j) line += (j ? "," : "") + std::to_string(ds.at(i, j));
    for (const auto& c : ds.covariates()) line += "," + std::to_string(c.values[i]);
    for (const auto& y : ds.outcomes()) line += "," + textfmt::exact(y.values[i]);
    out += line + "\n";
  }
  return out;
}

void write_atomic(const std::filesystem::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write '" + tmp.string() + "'");
    out << content;
    if (!out.flush()) throw InputError("cannot write '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

ArtifactWriter::ArtifactWriter(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::error_code ec;
  std::filesystem::create_directories(dir_, ec);
  if (ec) throw InputError("cannot create output directory '" + dir_.string() + "': " + ec.message());
}

void ArtifactWriter::write(const std::string& name, const std::string& content) {
  write_atomic(dir_ / name, content);
  if (std::find(files_.begin(), files_.end(), name) == files_.end()) files_.push_back(name);
}

void ArtifactWriter::write_json(const std::string& name, const nlohmann::json& j) {
  write(name, j.dump(2) + "\n");
}

void ArtifactWriter::finish(const nlohmann::json& run_info) {
  auto m = run_info;
  m["build_id"] = build_id();
  m["files"] = files_;
  write_atomic(dir_ / "manifest.json", m.dump(2) + "\n");
}

std::filesystem::path default_output_dir() {
  if (const char* env = std::getenv("CATMIX_OUTPUT_DIR"); env && *env) return env;
  return "catmix-out";
}

nlohmann::json error_json(const std::string& kind, const std::string& message) {
  return {{"error", {{"kind", kind}, {"message", message}}}};
}

bool RunConfig::is_stochastic() const {
  if (subcommand == "describe" || subcommand == "compare") return false;
  if (subcommand == "diagnose") return bootstrap > 0;
  return true;
}

void RunConfig::validate() const {
  static const std::vector<std::string> known{"describe", "fit-kmodes", "sweep-k",   "fit-lca",
                                              "simulate", "enumerate",  "diagnose",  "three-step",
                                              "compare",  "replicate"};
  if (std::find(known.begin(), known.end(), subcommand) == known.end())
    throw InputError("unknown subcommand '" + subcommand + "'");
  if (is_stochastic() && !seed) throw InputError(subcommand + ": --seed is required");
  if (formats.empty()) throw InputError("at least one output format is required");
  const bool needs_input = subcommand == "describe" || subcommand == "fit-kmodes" ||
                           subcommand == "sweep-k" || subcommand == "fit-lca" ||
                           subcommand == "enumerate" || subcommand == "replicate";
  if (needs_input && input.empty()) throw InputError(subcommand + ": --data is required");
  if ((subcommand == "diagnose" || subcommand == "three-step") && fit_path.empty())
    throw InputError(subcommand + ": --fit is required");
  if (subcommand == "three-step" && (covariate.empty() || outcome.empty()))
    throw InputError("three-step: --covariate and --outcome are required");
  if (subcommand == "compare" && (a_path.empty() || b_path.empty()))
    throw InputError("compare: --a and --b are required");
  if (subcommand == "simulate" && (params_path.empty() || n == 0))
    throw InputError("simulate: --params and --n are required");
  if (subcommand == "fit-lca" && n_final > n_initial)
    throw InputError("fit-lca: final starts exceed initial starts");
  if (subcommand == "sweep-k" && (k_min < 1 || k_min > k_max))
    throw InputError("sweep-k: need 1 <= k-min <= k-max");
  if (!(level > 0 && level < 1)) throw InputError("confidence level must be in (0, 1)");
}

namespace {

bool has(const RunConfig& c, Format f) {
  return std::find(c.formats.begin(), c.formats.end(), f) != c.formats.end();
}

std::string fnv1a_hex(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char c;
  while (in.get(c)) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// Shared state of one run: the writer plus the manifest under construction.
struct Session {
  const RunConfig& cfg;
  ArtifactWriter& out;
  nlohmann::json info;

  void add_input(const std::string& role, const std::filesystem::path& p) {
    info["inputs"].push_back({{"role", role}, {"path", p.string()}, {"fnv1a64", fnv1a_hex(p)}});
  }

  void text(const std::string& name, const std::string& body) {
    if (has(cfg, Format::text)) out.write(name, body);
    if (!cfg.quiet) std::cout << body << std::flush;
  }
  void csv(const std::string& name, const std::string& body) {
    if (has(cfg, Format::csv)) out.write(name, body);
  }
  void json(const std::string& name, const nlohmann::json& j) {
    if (has(cfg, Format::json)) out.write_json(name, j);
  }
};

Schema schema_of(const CategoricalDataset& ds) {
  Schema s;
  s.indicators = ds.indicator_names();
  for (const auto& c : ds.covariates()) s.covariates.push_back(c.name);
  for (const auto& y : ds.outcomes()) s.outcomes.push_back(y.name);
  return s;
}

CategoricalDataset load_data(Session& s, const std::filesystem::path& path, const Schema& schema) {
  auto res = load_csv(path, schema);
  s.add_input("data", path);
  s.info["rows_used"] = res.data.n();
  s.info["rows_rejected"] = res.rejected.size();
  if (!res.rejected.empty()) {
    std::string body = "row,column\n";
    for (const auto& r : res.rejected) body += std::to_string(r.row) + "," + csv_field(r.column) + "\n";
    s.out.write("rejected_rows.csv", body);
    std::cerr << "warning: " << res.rejected.size() << " row(s) with missing values were dropped\n";
  }
  return std::move(res.data);
}

std::string labels_csv(const std::vector<std::size_t>& labels, const std::string& column) {
  std::string out = "row," + column + "\n";
  for (std::size_t i = 0; i < labels.size(); ++i)
    out += std::to_string(i + 1) + "," + std::to_string(labels[i] + 1) + "\n";
  return out;
}

std::vector<long> read_labels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw InputError("'" + path.string() + "' is empty");
  std::vector<long> out;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cell = line.substr(line.rfind(',') == std::string::npos ? 0 : line.rfind(',') + 1);
    try {
      std::size_t used = 0;
      out.push_back(std::stol(cell, &used));
      if (used != cell.size()) throw std::invalid_argument(cell);
    } catch (const std::exception&) {
      throw InputError("'" + path.string() + "', row " + std::to_string(row) + ": label '" + cell +
                       "' is not an integer");
    }
  }
  if (out.empty()) throw InputError("'" + path.string() + "' has no labels");
  return out;
}

// ---- describe ----

void do_describe(Session& s, const CategoricalDataset& ds) {
  const auto d = describe(ds);
  std::vector<std::vector<std::string>> rows{{"Indicator", "Endorsed"}};
  std::string items = "indicator,proportion\n";
  for (std::size_t j = 0; j < d.names.size(); ++j) {
    rows.push_back({d.names[j], pct_label(100.0 * d.proportions[j])});
    items += csv_field(d.names[j]) + "," + textfmt::exact(d.proportions[j]) + "\n";
  }
  std::string hist = "selected,rows\n";
  for (std::size_t b = 0; b < d.histogram.size(); ++b)
    hist += std::to_string(b) + "," + std::to_string(d.histogram[b]) + "\n";
  s.csv("describe_items.csv", items);
  s.csv("describe_histogram.csv", hist);
  s.json("describe.json", to_json(d));
  s.text("describe.txt", "N = " + std::to_string(ds.n()) + ", J = " + std::to_string(ds.j()) + "\n" +
                             textfmt::align_table(rows) + "Indicators selected per row: mean " +
                             textfmt::fixed(d.mean_selected, 2) + ", SD " +
                             textfmt::fixed(d.sd_selected, 2) + "\n");
}

// ---- k-modes ----

KModesConfig kmodes_config(const RunConfig& c, std::size_t k) {
  KModesConfig kc;
  kc.k = k;
  kc.max_iter = c.max_iter;
  kc.n_restarts = c.restarts;
  kc.seed = *c.seed;
  return kc;
}

KModesModel do_fit_kmodes(Session& s, const CategoricalDataset& ds, std::size_t k) {
  const auto model = fit_kmodes(ds, kmodes_config(s.cfg, k));
  std::optional<double> sil;
  if (k >= 2) {
    try {
      sil = silhouette_width(model, ds).mean;
    } catch (const InputError&) {
    }
  }
  const auto sizes = model.sizes();
  nlohmann::json centroids = nlohmann::json::array();
  for (std::size_t c = 0; c < k; ++c) {
    const auto m = model.centroid(c);
    centroids.push_back(std::vector<int>(m.begin(), m.end()));
  }
  const std::string stem = "kmodes_k" + std::to_string(k);
  s.json(stem + ".json", {{"k", k},
                          {"indicators", ds.indicator_names()},
                          {"centroids", centroids},
                          {"sizes", sizes},
                          {"cost", model.cost},
                          {"silhouette", sil ? nlohmann::json(*sil) : nlohmann::json(nullptr)},
                          {"iterations", model.iterations},
                          {"converged", model.converged},
                          {"best_restart", model.best_restart},
                          {"cost_trace", model.cost_trace},
                          {"restarts", s.cfg.restarts},
                          {"seed", *s.cfg.seed}});
  s.out.write(stem + "_assign.csv", labels_csv(model.assignment, "cluster"));
  s.out.write(stem + "_profile.csv", to_csv(emit_profile_plot(model, ds)));

  std::vector<std::vector<std::string>> rows{{"Cluster", "Size", "Percent"}};
  for (std::size_t c = 0; c < k; ++c)
    rows.push_back({std::to_string(c + 1), std::to_string(sizes[c]),
                    pct_label(100.0 * static_cast<double>(sizes[c]) / static_cast<double>(ds.n()))});
  s.text(stem + ".txt", "k-modes, k = " + std::to_string(k) + ": cost " + std::to_string(model.cost) +
                            ", silhouette " + textfmt::fixed(sil.value_or(NAN), 3) + "\n" +
                            textfmt::align_table(rows));
  return model;
}

void do_sweep(Session& s, const CategoricalDataset& ds) {
  const auto rows = sweep_k(ds, s.cfg.k_min, std::min(s.cfg.k_max, ds.n()), kmodes_config(s.cfg, s.cfg.k_min));
  std::string csv = "k,cost,silhouette\n";
  nlohmann::json j = nlohmann::json::array();
  std::vector<std::vector<std::string>> table{{"k", "Cost", "Silhouette"}};
  for (const auto& r : rows) {
    csv += std::to_string(r.k) + "," + std::to_string(r.cost) + "," +
           (r.silhouette ? textfmt::exact(*r.silhouette) : "NA") + "\n";
    j.push_back({{"k", r.k}, {"cost", r.cost},
                 {"silhouette", r.silhouette ? nlohmann::json(*r.silhouette) : nlohmann::json(nullptr)}});
    table.push_back({std::to_string(r.k), std::to_string(r.cost),
                     r.silhouette ? textfmt::fixed(*r.silhouette, 3) : "-"});
  }
  s.csv("sweep_k.csv", csv);
  s.json("sweep_k.json", j);
  s.text("sweep_k.txt", textfmt::align_table(table));
}

// ---- LCA ----

StartPolicy start_policy(const RunConfig& c) {
  StartPolicy p;
  p.n_initial = c.n_initial;
  p.n_final = c.n_final;
  p.em.max_iter = c.em_max_iter;
  p.em.tol = c.tol;
  return p;
}

nlohmann::json fit_json(const Session& s, const CategoricalDataset& ds, const MultistartReport& rep,
                        const std::filesystem::path& data_path) {
  const auto& f = rep.best_fit;
  const auto k = f.params.classes();
  const auto modal = modal_assignment(f.posteriors);
  std::vector<std::size_t> counts(k, 0);
  for (auto l : modal) ++counts[l];
  std::vector<double> mean_post(k);
  for (std::size_t c = 0; c < k; ++c) mean_post[c] = f.posteriors.col(ix(c)).mean();
  return {{"data", std::filesystem::absolute(data_path).lexically_normal().string()},
          {"schema", to_json(schema_of(ds))},
          {"classes", k},
          {"seed", *s.cfg.seed},
          {"policy", to_json(start_policy(s.cfg))},
          {"params", to_json(f.params)},
          {"indicators", ds.indicator_names()},
          {"loglik", f.loglik},
          {"npar", f.npar},
          {"n", ds.n()},
          {"iterations", f.iterations},
          {"converged", f.converged},
          {"multistart", to_json(rep)},
          {"posterior_summary", {{"modal_counts", counts}, {"mean_posterior", mean_post}}}};
}

void write_lca(Session& s, const CategoricalDataset& ds, const MultistartReport& rep,
               const std::filesystem::path& data_path, bool text) {
  const auto& f = rep.best_fit;
  const auto k = f.params.classes();
  const std::string stem = "lca_k" + std::to_string(k);
  s.out.write_json(stem + ".json", fit_json(s, ds, rep, data_path));
  s.out.write(stem + "_assign.csv", labels_csv(modal_assignment(f.posteriors), "class"));
  s.out.write(stem + "_profile.csv", to_csv(emit_profile_plot(f, ds)));
  if (s.cfg.posteriors) {
    std::string body = "row";
    for (std::size_t c = 0; c < k; ++c) body += ",class_" + std::to_string(c + 1);
    body += "\n";
    for (std::size_t i = 0; i < ds.n(); ++i) {
      body += std::to_string(i + 1);
      for (std::size_t c = 0; c < k; ++c) body += "," + textfmt::exact(f.posteriors(ix(i), ix(c)));
      body += "\n";
    }
    s.out.write(stem + "_posteriors.csv", body);
  }
  if (!text) return;
  std::vector<std::vector<std::string>> rows{{"Item"}};
  for (std::size_t c = 0; c < k; ++c)
    rows[0].push_back("Class " + std::to_string(c + 1) + " (" + pct_label(100.0 * f.params.pi(ix(c))) + ")");
  for (std::size_t j = 0; j < ds.j(); ++j) {
    std::vector<std::string> r{ds.indicator_names()[j]};
    for (std::size_t c = 0; c < k; ++c) r.push_back(textfmt::fixed(f.params.rho(ix(c), ix(j)), 3));
    rows.push_back(r);
  }
  s.text(stem + ".txt", std::to_string(k) + "-class model: LL " + textfmt::fixed(f.loglik, 2) +
                            ", npar " + std::to_string(f.npar) + ", converged " +
                            textfmt::fixed(rep.pct_converged, 1) + "%, replicated " +
                            textfmt::fixed(rep.pct_replicated, 1) + "%\n" + textfmt::align_table(rows));
}

struct LoadedFit {
  CategoricalDataset data;
  LcaFit fit;
};

LoadedFit load_fit(Session& s) {
  std::ifstream in(s.cfg.fit_path);
  if (!in) throw InputError("cannot open fit file '" + s.cfg.fit_path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InputError("fit file '" + s.cfg.fit_path.string() + "' is not valid JSON: " + e.what());
  }
  s.add_input("fit", s.cfg.fit_path);
  if (!j.contains("params")) throw InputError("fit file has no 'params'");
  const std::filesystem::path data_path =
      s.cfg.input.empty() ? std::filesystem::path(j.value("data", std::string())) : s.cfg.input;
  if (data_path.empty()) throw InputError("fit file names no data; pass --data");
  const Schema schema = s.cfg.schema.empty() ? schema_from_json(j.value("schema", nlohmann::json()))
                                             : s.cfg.schema;
  auto ds = load_data(s, data_path, schema);
  LcaFit fit;
  fit.params = params_from_json(j["params"]);
  if (fit.params.items() != ds.j())
    throw InputError("fit has " + std::to_string(fit.params.items()) + " items but the data has " +
                     std::to_string(ds.j()));
  fit.posteriors = e_step(fit.params, ds);
  fit.loglik = log_likelihood(fit.params, ds);
  fit.converged = j.value("converged", true);
  fit.iterations = j.value("iterations", std::size_t{0});
  fit.npar = lca_npar(fit.params.classes(), fit.params.items());
  return {std::move(ds), std::move(fit)};
}

void do_diagnose(Session& s, const CategoricalDataset& ds, const LcaFit& fit, std::size_t bootstrap,
                 const std::string& stem) {
  const auto rep = diagnose(ds, fit, bootstrap, s.cfg.seed.value_or(0), s.cfg.level);
  auto j = to_json(rep);
  j["classes_total"] = fit.params.classes();
  j["bootstrap"] = bootstrap;
  j["level"] = s.cfg.level;
  s.csv(stem + ".csv", to_csv(rep));
  s.json(stem + ".json", j);
  s.text(stem + ".txt", to_text(rep));
}

void do_threestep(Session& s, const CategoricalDataset& ds, const LcaFit& fit) {
  const auto r = fit_threestep(ds, fit, s.cfg.covariate, s.cfg.outcome, *s.cfg.seed);
  std::string csv = "class,mean_at_0,se_at_0,mean_at_covariate_mean,se_at_covariate_mean\n";
  for (std::size_t c = 0; c < r.class_means.size(); ++c)
    csv += std::to_string(c + 1) + "," + textfmt::exact(r.class_means[c].value) + "," +
           textfmt::exact(r.class_means[c].se) + "," + textfmt::exact(r.class_means_at_mean[c].value) +
           "," + textfmt::exact(r.class_means_at_mean[c].se) + "\n";
  std::string logits = "class,versus,logit,se,p,odds_ratio\n";
  for (const auto& c : r.covariate_contrasts)
    logits += std::to_string(c.a + 1) + "," + std::to_string(c.b + 1) + "," +
              textfmt::exact(c.logit.value) + "," + textfmt::exact(c.logit.se) + "," +
              textfmt::exact(c.logit.p) + "," + textfmt::exact(c.odds_ratio) + "\n";
  s.csv("threestep_means.csv", csv);
  s.csv("threestep_logits.csv", logits);
  s.json("threestep.json", to_json(r));
  s.text("threestep.txt", to_text(r));
  for (const auto& w : r.warnings) std::cerr << "warning: " << w << "\n";
}

void do_compare(Session& s, std::span<const long> a, std::span<const long> b, const std::string& stem) {
  const auto t = crosstab(a, b, s.cfg.row_percent ? PercentOrientation::row : PercentOrientation::column);
  const auto ag = agreement(t);
  s.csv(stem + ".csv", to_csv(t));
  s.json(stem + ".json", to_json(t, ag));
  std::string maxima;
  for (std::size_t m = 0; m < ag.max_percent.size(); ++m)
    maxima += (m ? ", " : "") + pct_label(ag.max_percent[m]);
  s.text(stem + ".txt", "Rows: partition a, columns: partition b\n" + to_text(t) +
                            "Best-match share per " +
                            (t.orientation == PercentOrientation::column ? "column" : "row") + ": " +
                            maxima + "\nMany-to-one agreement " + pct_label(100.0 * ag.many_to_one) +
                            ", one-to-one " + pct_label(100.0 * ag.one_to_one) + "\n");
}

void do_replicate(Session& s, const CategoricalDataset& ds) {
  const auto& c = s.cfg;
  do_describe(s, ds);
  do_sweep(s, ds);
  std::vector<KModesModel> kmodes;
  for (auto k : c.kmodes_k)
    if (k <= ds.n()) kmodes.push_back(do_fit_kmodes(s, ds, k));

  std::optional<BlrtOptions> blrt;
  if (c.blrt) {
    BlrtOptions b;
    b.bootstrap = c.bootstrap;
    b.seed = *c.seed;
    b.replicate_policy.n_initial = c.blrt_initial;
    b.replicate_policy.n_final = c.blrt_final;
    b.replicate_policy.em = {c.blrt_max_iter, c.tol};
    blrt = b;
  }
  const auto table = enumerate_classes(ds, c.max_classes, start_policy(c), *c.seed, blrt);
  s.csv("enumerate.csv", to_csv(table));
  s.out.write("ic_plot.csv", ic_plot_csv(table));
  s.json("enumerate.json", to_json(table));
  s.text("enumerate.txt", to_text(table));
  for (const auto& w : table.warnings) std::cerr << "warning: " << w << "\n";

  const MultistartReport* chosen = nullptr;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    if (table.rows[r].error) continue;
    write_lca(s, ds, table.fits[r], c.input, false);
    if (table.rows[r].classes == c.classes) chosen = &table.fits[r];
  }
  if (!chosen) throw NumericalError("replicate: no usable " + std::to_string(c.classes) + "-class fit");
  const auto& fit = chosen->best_fit;
  do_diagnose(s, ds, fit, c.ci_bootstrap, "diagnostics");
  if (!c.covariate.empty() && !c.outcome.empty()) do_threestep(s, ds, fit);

  const auto modal = modal_assignment(fit.posteriors);
  const std::vector<long> lca_labels(modal.begin(), modal.end());
  for (const auto& m : kmodes) {
    const std::vector<long> km(m.assignment.begin(), m.assignment.end());
    // Labels are shifted to the 1-based numbering used in every other output.
    std::vector<long> a(km.size()), b(lca_labels.size());
    std::transform(km.begin(), km.end(), a.begin(), [](long v) { return v + 1; });
    std::transform(lca_labels.begin(), lca_labels.end(), b.begin(), [](long v) { return v + 1; });
    do_compare(s, a, b, "compare_kmodes_k" + std::to_string(m.k) + "_lca_k" + std::to_string(c.classes));
  }
}

nlohmann::json run_parameters(const RunConfig& c) {
  nlohmann::json p;
  const auto& sc = c.subcommand;
  if (sc == "fit-kmodes" || sc == "sweep-k" || sc == "replicate") {
    p["restarts"] = c.restarts;
    p["max_iter"] = c.max_iter;
  }
  if (sc == "fit-kmodes") p["k"] = c.k;
  if (sc == "sweep-k" || sc == "replicate") p["k_range"] = {c.k_min, c.k_max};
  if (sc == "fit-lca" || sc == "enumerate" || sc == "replicate") {
    p["starts"] = {c.n_initial, c.n_final};
    p["tol"] = c.tol;
    p["em_max_iter"] = c.em_max_iter;
  }
  if (sc == "fit-lca") p["classes"] = c.classes;
  if (sc == "enumerate" || sc == "replicate") {
    p["max_classes"] = c.max_classes;
    p["blrt"] = c.blrt;
    if (c.blrt) {
      p["bootstrap"] = c.bootstrap;
      p["blrt_starts"] = {c.blrt_initial, c.blrt_final};
      p["blrt_max_iter"] = c.blrt_max_iter;
    }
  }
  if (sc == "diagnose") {
    p["bootstrap"] = c.bootstrap;
    p["level"] = c.level;
  }
  if (sc == "replicate") {
    p["classes"] = c.classes;
    p["kmodes_k"] = c.kmodes_k;
    p["ci_bootstrap"] = c.ci_bootstrap;
  }
  if (sc == "three-step" || sc == "replicate") {
    p["covariate"] = c.covariate;
    p["outcome"] = c.outcome;
  }
  if (sc == "simulate") p["n"] = c.n;
  if (sc == "compare") p["percent"] = c.row_percent ? "row" : "column";
  return p;
}

void run_in(Session& s) {
  const auto& c = s.cfg;
  const auto& sc = c.subcommand;
  if (sc == "describe") {
    do_describe(s, load_data(s, c.input, c.schema));
  } else if (sc == "fit-kmodes") {
    const auto ds = load_data(s, c.input, c.schema);
    if (c.k < 1 || c.k > ds.n()) throw InputError("fit-kmodes: k must be in [1, N]");
    do_fit_kmodes(s, ds, c.k);
  } else if (sc == "sweep-k") {
    do_sweep(s, load_data(s, c.input, c.schema));
  } else if (sc == "fit-lca") {
    const auto ds = load_data(s, c.input, c.schema);
    const auto rep = fit_multistart(ds, c.classes, start_policy(c), *c.seed);
    write_lca(s, ds, rep, c.input, true);
  } else if (sc == "simulate") {
    std::ifstream in(c.params_path);
    if (!in) throw InputError("cannot open '" + c.params_path.string() + "'");
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw InputError("'" + c.params_path.string() + "' is not valid JSON: " + e.what());
    }
    s.add_input("params", c.params_path);
    const auto params = params_from_json(j.contains("params") ? j["params"] : j);
    const auto sim = simulate(params, c.n, *c.seed);
    s.out.write("simulated.csv", dataset_csv(sim.data));
    s.out.write("simulated_labels.csv", labels_csv(sim.labels, "class"));
  } else if (sc == "enumerate") {
    const auto ds = load_data(s, c.input, c.schema);
    std::optional<BlrtOptions> blrt;
    if (c.blrt) {
      BlrtOptions b;
      b.bootstrap = c.bootstrap;
      b.seed = *c.seed;
      b.replicate_policy.n_initial = c.blrt_initial;
      b.replicate_policy.n_final = c.blrt_final;
      b.replicate_policy.em = {c.blrt_max_iter, c.tol};
      blrt = b;
    }
    const auto t = enumerate_classes(ds, c.max_classes, start_policy(c), *c.seed, blrt);
    s.csv("enumerate.csv", to_csv(t));
    s.out.write("ic_plot.csv", ic_plot_csv(t));
    s.json("enumerate.json", to_json(t));
    s.text("enumerate.txt", to_text(t));
    for (const auto& w : t.warnings) std::cerr << "warning: " << w << "\n";
  } else if (sc == "diagnose") {
    const auto lf = load_fit(s);
    do_diagnose(s, lf.data, lf.fit, c.bootstrap, "diagnostics");
  } else if (sc == "three-step") {
    const auto lf = load_fit(s);
    do_threestep(s, lf.data, lf.fit);
  } else if (sc == "compare") {
    const auto a = read_labels(c.a_path);
    const auto b = read_labels(c.b_path);
    s.add_input("a", c.a_path);
    s.add_input("b", c.b_path);
    do_compare(s, a, b, "compare");
  } else if (sc == "replicate") {
    do_replicate(s, load_data(s, c.input, c.schema));
  }
}

nlohmann::json base_info(const RunConfig& c) {
  return {{"subcommand", c.subcommand},
          {"seed", c.seed ? nlohmann::json(*c.seed) : nlohmann::json(nullptr)},
          {"schema", to_json(c.schema)},
          {"parameters", run_parameters(c)},
          {"inputs", nlohmann::json::array()}};
}

}  // namespace

void run(const RunConfig& config) {
  config.validate();
  ArtifactWriter out(config.out_dir);
  Session s{config, out, base_info(config)};
  run_in(s);
  s.info["status"] = "ok";
  out.finish(s.info);
}

int run_main(const RunConfig& config) {
  std::string kind;
  std::string message;
  int code = 0;
  std::unique_ptr<ArtifactWriter> out;
  std::optional<Session> s;
  try {
    config.validate();
    out = std::make_unique<ArtifactWriter>(config.out_dir);
    s.emplace(Session{config, *out, base_info(config)});
    run_in(*s);
    s->info["status"] = "ok";
    out->finish(s->info);
    return 0;
  } catch (const InputError& e) {
    kind = "input", message = e.what(), code = 2;
  } catch (const std::filesystem::filesystem_error& e) {
    kind = "input", message = e.what(), code = 2;
  } catch (const NumericalError& e) {
    kind = "numerical", message = e.what(), code = 1;
  } catch (const std::exception& e) {
    kind = "internal", message = e.what(), code = 1;
  }
  const auto err = error_json(kind, message);
  std::cerr << err.dump() << "\n";
  if (out && s) {
    try {
      out->write_json("error.json", err);
      s->info["status"] = "error";
      out->finish(s->info);
    } catch (const std::exception&) {
    }
  }
  return code;
}

}  // namespace catmix
