// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "catmix/dataset.hh"
#include "catmix/kmodes.hh"
#include "catmix/lca.hh"

namespace catmix {

const char* build_id();

// Per-class (or per-cluster) endorsement curves over the indicators.
struct ProfilePlot {
  std::vector<std::string> items;
  std::vector<std::string> series;          // "Class 1", "Cluster 2", ...
  std::vector<double> model_percent;        // pi_k or cluster share, in percent
  std::vector<double> assigned_percent;     // modal class share, in percent
  std::vector<std::vector<double>> values;  // series x items, in [0, 1]
};

// LCA curves are the item probabilities.
ProfilePlot emit_profile_plot(const LcaFit& fit, const CategoricalDataset& ds);
// k-modes curves are within-cluster endorsement proportions.
ProfilePlot emit_profile_plot(const KModesModel& model, const CategoricalDataset& ds);

// Long format: series,model_percent,assigned_percent,item,value.
std::string to_csv(const ProfilePlot& p);

// CSV with i:/c:/y: prefixed headers, loadable by load_csv.
std::string dataset_csv(const CategoricalDataset& ds);

// Collects every file a run writes. Each write goes to a temporary file that
// is renamed into place.
class ArtifactWriter {
 public:
  explicit ArtifactWriter(std::filesystem::path dir);

  void write(const std::string& name, const std::string& content);
  void write_json(const std::string& name, const nlohmann::json& j);
  // Writes manifest.json listing every file written so far.
  void finish(const nlohmann::json& run_info);

  const std::filesystem::path& dir() const { return dir_; }
  const std::vector<std::string>& files() const { return files_; }

 private:
  std::filesystem::path dir_;
  std::vector<std::string> files_;
};

void write_atomic(const std::filesystem::path& path, const std::string& content);

enum class Format { text, csv, json };

struct RunConfig {
  std::string subcommand;
  std::filesystem::path input;
  Schema schema;
  std::filesystem::path out_dir;
  std::vector<Format> formats{Format::text, Format::csv, Format::json};
  std::optional<std::uint64_t> seed;
  bool quiet = false;  // suppress the text rendering on stdout

  // k-modes
  std::size_t k = 2;
  std::size_t k_min = 1;
  std::size_t k_max = 7;
  std::size_t restarts = 10;
  std::size_t max_iter = 300;

  // LCA
  std::size_t classes = 3;
  std::size_t n_initial = 200;
  std::size_t n_final = 100;
  double tol = 1e-6;
  std::size_t em_max_iter = 500;
  bool posteriors = false;

  // simulate
  std::filesystem::path params_path;
  std::size_t n = 0;

  // enumerate
  std::size_t max_classes = 7;
  bool blrt = false;
  std::size_t bootstrap = 100;
  std::size_t blrt_initial = 20;
  std::size_t blrt_final = 5;
  std::size_t blrt_max_iter = 5000;

  // diagnose
  std::filesystem::path fit_path;
  double level = 0.95;

  // three-step
  std::string covariate;
  std::string outcome;

  // compare
  std::filesystem::path a_path;
  std::filesystem::path b_path;
  bool row_percent = false;

  // replicate
  std::vector<std::size_t> kmodes_k{2, 3};
  std::size_t ci_bootstrap = 200;

  bool is_stochastic() const;
  void validate() const;  // throws InputError
};

// Default output directory: $CATMIX_OUTPUT_DIR, else "catmix-out".
std::filesystem::path default_output_dir();

// Runs one subcommand. Exceptions propagate; see run_main for exit codes.
void run(const RunConfig& config);

// Wraps run(): 0 ok, 1 numerical failure, 2 input error. On failure a JSON
// error object is printed to stderr and written to <out_dir>/error.json.
int run_main(const RunConfig& config);

nlohmann::json error_json(const std::string& kind, const std::string& message);

}  // namespace catmix
