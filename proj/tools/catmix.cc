// Apache License, Version 2.0, refer to LICENSE.txt
//
// Command-line front end: catmix <subcommand> [flags].

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "catmix/errors.hh"
#include "catmix/report.hh"

namespace {

using catmix::Format;
using catmix::RunConfig;

struct SchemaFlags {
  std::string file;
  std::vector<std::string> indicators;
  std::vector<std::string> covariates;
  std::vector<std::string> outcomes;
};

struct CommonFlags {
  std::string data;
  std::string out;
  std::vector<std::string> formats;
  std::string seed;
  bool quiet = false;
  SchemaFlags schema;
};

void add_data(CLI::App* sc, CommonFlags& f) {
  sc->add_option("--data", f.data, "Input CSV");
  sc->add_option("--schema", f.schema.file,
                 "JSON schema file {\"indicators\":[..],\"covariates\":[..],\"outcomes\":[..]}; "
                 "without one, headers prefixed i:, c:, y: define the roles");
  sc->add_option("--indicators", f.schema.indicators, "Indicator columns")->delimiter(',');
  sc->add_option("--covariates", f.schema.covariates, "Binary covariate columns")->delimiter(',');
  sc->add_option("--outcomes", f.schema.outcomes, "Continuous outcome columns")->delimiter(',');
}

void add_common(CLI::App* sc, CommonFlags& f, bool seeded) {
  sc->add_option("--out", f.out, "Output directory (default $CATMIX_OUTPUT_DIR or ./catmix-out)");
  sc->add_option("--format", f.formats, "Output formats: any of text,csv,json (default all)")
      ->delimiter(',')
      ->check(CLI::IsMember({"text", "csv", "json"}));
  sc->add_flag("--quiet", f.quiet, "Do not print text output");
  if (seeded) sc->add_option("--seed", f.seed, "Master random seed (unsigned 64-bit)");
}

std::uint64_t parse_seed(const std::string& s) {
  try {
    std::size_t used = 0;
    const auto v = std::stoull(s, &used, 0);
    if (used != s.size() || s.front() == '-') throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw catmix::InputError("--seed '" + s + "' is not an unsigned integer");
  }
}

void parse_starts(const std::string& s, RunConfig& c) {
  const auto comma = s.find(',');
  try {
    if (comma == std::string::npos) throw std::invalid_argument(s);
    c.n_initial = std::stoul(s.substr(0, comma));
    c.n_final = std::stoul(s.substr(comma + 1));
  } catch (const std::exception&) {
    throw catmix::InputError("--starts expects INITIAL,FINAL, got '" + s + "'");
  }
  if (c.n_final < 1 || c.n_final > c.n_initial)
    throw catmix::InputError("--starts needs 1 <= FINAL <= INITIAL");
}

catmix::Schema load_schema(const SchemaFlags& f) {
  catmix::Schema s;
  if (!f.file.empty()) {
    std::ifstream in(f.file);
    if (!in) throw catmix::InputError("cannot open schema '" + f.file + "'");
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw catmix::InputError("schema '" + f.file + "' is not valid JSON: " + e.what());
    }
    s = catmix::schema_from_json(j);
  }
  if (!f.indicators.empty()) s.indicators = f.indicators;
  if (!f.covariates.empty()) s.covariates = f.covariates;
  if (!f.outcomes.empty()) s.outcomes = f.outcomes;
  return s;
}

void finalize(RunConfig& c, const CommonFlags& f) {
  c.input = f.data;
  c.schema = load_schema(f.schema);
  c.out_dir = f.out.empty() ? catmix::default_output_dir() : std::filesystem::path(f.out);
  if (!f.formats.empty()) {
    c.formats.clear();
    for (const auto& s : f.formats)
      c.formats.push_back(s == "text" ? Format::text : s == "csv" ? Format::csv : Format::json);
  }
  if (!f.seed.empty()) c.seed = parse_seed(f.seed);
  c.quiet = f.quiet;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"catmix: k-modes clustering and latent class analysis for binary data"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(catmix::build_id()));

  RunConfig cfg;
  CommonFlags f;
  std::string starts = "200,100";
  std::string blrt_starts = "20,5";
  std::size_t k_range_max = 0;

  auto* describe = app.add_subcommand("describe", "Endorsement rates and selection counts");
  add_data(describe, f);
  add_common(describe, f, false);

  auto* kmodes = app.add_subcommand("fit-kmodes", "Fit k-modes with simple-matching distance");
  add_data(kmodes, f);
  add_common(kmodes, f, true);
  kmodes->add_option("--k", cfg.k, "Number of clusters")->capture_default_str();
  kmodes->add_option("--restarts", cfg.restarts, "Random restarts")->capture_default_str();
  kmodes->add_option("--max-iter", cfg.max_iter, "Iterations per restart")->capture_default_str();

  auto* sweep = app.add_subcommand("sweep-k", "Cost and silhouette over a range of k");
  add_data(sweep, f);
  add_common(sweep, f, true);
  sweep->add_option("--k-min", cfg.k_min, "Smallest k")->capture_default_str();
  sweep->add_option("--k-max", cfg.k_max, "Largest k")->capture_default_str();
  sweep->add_option("--restarts", cfg.restarts, "Random restarts per k")->capture_default_str();
  sweep->add_option("--max-iter", cfg.max_iter, "Iterations per restart")->capture_default_str();

  auto* lca = app.add_subcommand("fit-lca", "Fit a latent class model by multi-start EM");
  add_data(lca, f);
  add_common(lca, f, true);
  lca->add_option("--classes", cfg.classes, "Number of classes")->capture_default_str();
  lca->add_option("--starts", starts, "Random starts INITIAL,FINAL")->capture_default_str();
  lca->add_option("--tol", cfg.tol, "Absolute log-likelihood tolerance")->capture_default_str();
  lca->add_option("--max-iter", cfg.em_max_iter, "EM iteration limit")->capture_default_str();
  lca->add_flag("--posteriors", cfg.posteriors, "Also write the full posterior matrix as CSV");

  auto* sim = app.add_subcommand("simulate", "Draw a dataset from latent class parameters");
  add_common(sim, f, true);
  sim->add_option("--params", cfg.params_path,
                  "JSON with {\"pi\":[..],\"rho\":[[..]]}, or a fit file from fit-lca")
      ->required();
  sim->add_option("--n", cfg.n, "Number of rows")->required();

  auto* enumerate = app.add_subcommand("enumerate", "Fit 1..K classes and tabulate fit indices");
  add_data(enumerate, f);
  add_common(enumerate, f, true);
  enumerate->add_option("--max-classes", cfg.max_classes, "Largest K")->capture_default_str();
  enumerate->add_option("--starts", starts, "Random starts INITIAL,FINAL")->capture_default_str();
  enumerate->add_option("--tol", cfg.tol, "Absolute log-likelihood tolerance")->capture_default_str();
  enumerate->add_option("--max-iter", cfg.em_max_iter, "EM iteration limit")->capture_default_str();
  enumerate->add_flag("--blrt", cfg.blrt, "Run the bootstrap likelihood ratio test");
  enumerate->add_option("--bootstrap", cfg.bootstrap, "BLRT replicates")->capture_default_str();
  enumerate->add_option("--blrt-max-iter", cfg.blrt_max_iter, "EM iteration limit per BLRT refit")
      ->capture_default_str();
  enumerate->add_option("--blrt-starts", blrt_starts, "Starts INITIAL,FINAL per BLRT refit")
      ->capture_default_str();

  auto* diag = app.add_subcommand("diagnose", "Entropy, mcaP, AvePP, OCC and proportion intervals");
  add_common(diag, f, true);
  diag->add_option("--fit", cfg.fit_path, "Fit file written by fit-lca")->required();
  diag->add_option("--data", f.data, "Override the data path stored in the fit file");
  diag->add_option("--bootstrap", cfg.bootstrap, "Bootstrap replicates for the intervals (0 skips)")
      ->default_val(200);
  diag->add_option("--level", cfg.level, "Interval level")->capture_default_str();

  auto* three = app.add_subcommand("three-step", "Covariate and distal outcome by ML three-step");
  add_common(three, f, true);
  three->add_option("--fit", cfg.fit_path, "Fit file written by fit-lca")->required();
  three->add_option("--data", f.data, "Override the data path stored in the fit file");
  three->add_option("--covariate", cfg.covariate, "Binary covariate column")->required();
  three->add_option("--outcome", cfg.outcome, "Continuous outcome column")->required();

  auto* cmp = app.add_subcommand("compare", "Cross-tabulate two partitions");
  add_common(cmp, f, false);
  cmp->add_option("--a", cfg.a_path, "Assignment CSV (labels in the last column); table rows")->required();
  cmp->add_option("--b", cfg.b_path, "Assignment CSV (labels in the last column); table columns")->required();
  cmp->add_flag("--row-percent", cfg.row_percent, "Percentages within rows instead of columns");

  auto* rep = app.add_subcommand("replicate", "Full pipeline from description to comparison");
  add_data(rep, f);
  add_common(rep, f, true);
  rep->add_option("--k-max", k_range_max, "Largest k in the k-modes sweep (default 7)");
  rep->add_option("--kmodes-k", cfg.kmodes_k, "k values fitted in full")->delimiter(',')->capture_default_str();
  rep->add_option("--restarts", cfg.restarts, "k-modes restarts")->capture_default_str();
  rep->add_option("--max-classes", cfg.max_classes, "Largest K enumerated")->capture_default_str();
  rep->add_option("--classes", cfg.classes, "K used for diagnostics and three-step")->capture_default_str();
  rep->add_option("--starts", starts, "Random starts INITIAL,FINAL")->capture_default_str();
  rep->add_flag("--blrt", cfg.blrt, "Run the bootstrap likelihood ratio test");
  rep->add_option("--bootstrap", cfg.bootstrap, "BLRT replicates")->capture_default_str();
  rep->add_option("--blrt-max-iter", cfg.blrt_max_iter, "EM iteration limit per BLRT refit")
      ->capture_default_str();
  rep->add_option("--blrt-starts", blrt_starts, "Starts INITIAL,FINAL per BLRT refit")->capture_default_str();
  rep->add_option("--ci-bootstrap", cfg.ci_bootstrap, "Replicates for class-proportion intervals")
      ->capture_default_str();
  rep->add_option("--covariate", cfg.covariate, "Binary covariate for three-step (optional)");
  rep->add_option("--outcome", cfg.outcome, "Continuous outcome for three-step (optional)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << catmix::error_json("input", e.what()).dump() << "\n";
    return 2;
  }

  try {
    cfg.subcommand = app.get_subcommands().front()->get_name();
    finalize(cfg, f);
    parse_starts(starts, cfg);
    const auto comma = blrt_starts.find(',');
    if (comma == std::string::npos) throw catmix::InputError("--blrt-starts expects INITIAL,FINAL");
    cfg.blrt_initial = std::stoul(blrt_starts.substr(0, comma));
    cfg.blrt_final = std::stoul(blrt_starts.substr(comma + 1));
    if (cfg.blrt_final < 1 || cfg.blrt_final > cfg.blrt_initial)
      throw catmix::InputError("--blrt-starts needs 1 <= FINAL <= INITIAL");
    if (cfg.subcommand == "replicate") {
      cfg.k_min = 1;
      cfg.k_max = k_range_max > 0 ? k_range_max : 7;
    }
  } catch (const std::exception& e) {
    std::cerr << catmix::error_json("input", e.what()).dump() << "\n";
    return 2;
  }
  return catmix::run_main(cfg);
}
