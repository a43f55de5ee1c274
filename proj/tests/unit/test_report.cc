// Apache License, Version 2.0, refer to LICENSE.txt

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "catmix/errors.hh"
#include "catmix/report.hh"
#include "support/generators.hh"

using namespace catmix;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("catmix_test_report_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunConfig config(const std::string& sub, const fs::path& out) {
  RunConfig c;
  c.subcommand = sub;
  c.out_dir = out;
  c.quiet = true;
  return c;
}

}  // namespace

TEST_CASE("single class profile is the column means") {
  std::mt19937_64 rng(1);
  const auto ds = testgen::random_dataset(rng, 60, 5, 0.3);
  auto fit = fit_em(ds, 1, 2);
  auto plot = emit_profile_plot(fit, ds);
  REQUIRE(plot.values.size() == 1);
  for (std::size_t i = 0; i < ds.j(); ++i) {
    double m = 0;
    for (std::size_t r = 0; r < ds.n(); ++r) m += ds.at(r, i);
    CHECK(plot.values[0][i] == doctest::Approx(m / double(ds.n())).epsilon(1e-12));
  }
  CHECK(plot.model_percent[0] == doctest::Approx(100.0));
  CHECK(plot.assigned_percent[0] == doctest::Approx(100.0));
}

TEST_CASE("k-modes profile is the within-cluster endorsement rate") {
  std::mt19937_64 rng(2);
  const auto ds = testgen::random_dataset(rng, 80, 6);
  auto model = fit_kmodes(ds, {3, 300, 5, 4});
  auto plot = emit_profile_plot(model, ds);
  REQUIRE(plot.values.size() == 3);
  for (std::size_t c = 0; c < 3; ++c) {
    std::size_t members = 0;
    std::vector<double> sums(ds.j(), 0.0);
    for (std::size_t r = 0; r < ds.n(); ++r)
      if (model.assignment[r] == c) {
        ++members;
        for (std::size_t i = 0; i < ds.j(); ++i) sums[i] += ds.at(r, i);
      }
    CHECK(plot.model_percent[c] == doctest::Approx(100.0 * double(members) / double(ds.n())));
    for (std::size_t i = 0; i < ds.j(); ++i)
      CHECK(plot.values[c][i] == doctest::Approx(members ? sums[i] / double(members) : 0.0));
  }
  const auto csv = to_csv(plot);
  CHECK(csv.rfind("series,model_percent,assigned_percent,item,value\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == long(1 + 3 * ds.j()));
}

TEST_CASE("dataset CSV round trip") {
  std::vector<NamedColumn<std::uint8_t>> cov{{"x", {0, 1, 1}}};
  std::vector<NamedColumn<double>> out{{"y", {0.5, -1.25, 3.0}}};
  CategoricalDataset ds({1, 0, 0, 1, 1, 1}, {"a", "b"}, cov, out);
  auto back = parse_csv(dataset_csv(ds)).data;
  CHECK(back.n() == 3);
  CHECK(std::equal(back.indicators().begin(), back.indicators().end(), ds.indicators().begin()));
  CHECK(back.covariate("x").values == cov[0].values);
  CHECK(back.outcome("y").values == out[0].values);
}

TEST_CASE("artifact writer is atomic and lists its files") {
  auto dir = scratch("writer") / "nested";
  ArtifactWriter w(dir);
  w.write("a.txt", "hello\n");
  w.write_json("b.json", {{"k", 1}});
  w.finish({{"status", "ok"}});
  CHECK(slurp(dir / "a.txt") == "hello\n");
  auto m = nlohmann::json::parse(slurp(dir / "manifest.json"));
  CHECK(m["files"] == nlohmann::json::array({"a.txt", "b.json"}));
  CHECK(m["build_id"] == build_id());
  for (const auto& e : fs::directory_iterator(dir)) CHECK(e.path().extension() != ".tmp");
}

TEST_CASE("simulate then fit recovers the classes") {
  auto dir = scratch("roundtrip");
  const auto truth = testgen::three_class_params();
  {
    std::ofstream p(dir / "params.json");
    p << to_json(truth).dump();
  }
  auto sim = config("simulate", dir / "sim");
  sim.params_path = dir / "params.json";
  sim.n = 1500;
  sim.seed = 7;
  run(sim);
  REQUIRE(fs::exists(dir / "sim" / "simulated.csv"));

  auto fit = config("fit-lca", dir / "fit");
  fit.input = dir / "sim" / "simulated.csv";
  fit.classes = 3;
  fit.n_initial = 30;
  fit.n_final = 6;
  fit.seed = 8;
  run(fit);
  auto j = nlohmann::json::parse(slurp(dir / "fit" / "lca_k3.json"));
  CHECK(j["converged"] == true);
  auto est = params_from_json(j["params"]);
  auto perm = match_classes(truth.rho, est.rho);
  auto aligned = permute_classes(est, perm);
  CHECK((aligned.pi - truth.pi).cwiseAbs().maxCoeff() <= 0.05);
  CHECK((aligned.rho - truth.rho).cwiseAbs().maxCoeff() <= 0.08);
  auto m = nlohmann::json::parse(slurp(dir / "fit" / "manifest.json"));
  for (const auto& f : m["files"]) CHECK(fs::exists(dir / "fit" / f.get<std::string>()));
  CHECK(m["status"] == "ok");
}

TEST_CASE("runs are byte-for-byte deterministic") {
  auto dir = scratch("determinism");
  std::mt19937_64 rng(3);
  {
    std::ofstream d(dir / "data.csv");
    d << dataset_csv(testgen::random_dataset(rng, 120, 5));
  }
  for (const char* name : {"a", "b"}) {
    auto c = config("sweep-k", dir / name);
    c.input = dir / "data.csv";
    c.k_max = 4;
    c.seed = 99;
    run(c);
  }
  for (const char* f : {"sweep_k.csv", "sweep_k.json", "sweep_k.txt"})
    CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));
}

TEST_CASE("exit codes") {
  auto dir = scratch("codes");
  {
    std::ofstream d(dir / "data.csv");
    d << "i:a,i:b\n0,1\n1,2\n";
  }
  auto bad = config("describe", dir / "bad");
  bad.input = dir / "data.csv";
  CHECK(run_main(bad) == 2);
  auto err = nlohmann::json::parse(slurp(dir / "bad" / "error.json"));
  CHECK(err["error"]["kind"] == "input");
  CHECK(err["error"]["message"].get<std::string>().find("b") != std::string::npos);

  auto unseeded = config("fit-lca", dir / "unseeded");
  unseeded.input = dir / "data.csv";
  CHECK_THROWS_AS(unseeded.validate(), InputError);

  auto missing = config("describe", dir / "missing");
  missing.input = dir / "nope.csv";
  CHECK(run_main(missing) == 2);

  auto schema = config("describe", dir / "schema");
  schema.input = dir / "data.csv";
  schema.schema.indicators = {"absent"};
  CHECK(run_main(schema) == 2);

  {
    std::ofstream d(dir / "ok.csv");
    d << "i:a,i:b\n0,1\n1,1\n1,0\n";
  }
  auto ok = config("describe", dir / "ok");
  ok.input = dir / "ok.csv";
  CHECK(run_main(ok) == 0);
  CHECK(fs::exists(dir / "ok" / "describe.json"));
}
