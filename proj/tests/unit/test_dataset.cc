// Apache License, Version 2.0, refer to LICENSE.txt

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>

#include "catmix/dataset.hh"
#include "catmix/errors.hh"
#include "support/generators.hh"

using namespace catmix;

TEST_CASE("parse a small prefixed csv") {
  auto r = parse_csv("i:a,i:b\n1,0\n0,0\n1,1\n");
  CHECK(r.data.n() == 3);
  CHECK(r.data.j() == 2);
  CHECK(r.data.indicator_names() == std::vector<std::string>{"a", "b"});
  CHECK(r.data.at(2, 1) == 1);
  CHECK(r.rejected.empty());
}

TEST_CASE("explicit schema selects columns and roles") {
  const std::string text = "id,a,b,g,score\n7,1,0,1,2.5\n8,0,1,0,3.25\n";
  Schema s{{"a", "b"}, {"g"}, {"score"}};
  auto r = parse_csv(text, s);
  CHECK(r.data.j() == 2);
  CHECK(r.data.covariate("g").values == std::vector<std::uint8_t>{1, 0});
  CHECK(r.data.outcome("score").values == std::vector<double>{2.5, 3.25});
  CHECK_THROWS_AS(r.data.covariate("nope"), InputError);
}

TEST_CASE("schema names match prefixed headers by bare name") {
  auto r = parse_csv("i:a,c:g\n1,0\n0,1\n", Schema{{"a"}, {"g"}, {}});
  CHECK(r.data.j() == 1);
  CHECK(r.data.covariates().size() == 1);
}

TEST_CASE("non-binary indicator names column and row") {
  try {
    parse_csv("i:a,i:b\n1,0\n0,1\n2,0\n");
    FAIL("expected InputError");
  } catch (const InputError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("'a'") != std::string::npos);
    CHECK(msg.find("row 3") != std::string::npos);
  }
}

TEST_CASE("input errors") {
  CHECK_THROWS_AS(parse_csv(""), InputError);
  CHECK_THROWS_AS(parse_csv("i:a\n"), InputError);
  CHECK_THROWS_AS(parse_csv("i:a,i:b\n1\n"), InputError);
  CHECK_THROWS_AS(parse_csv("a,b\n1,0\n", Schema{{"a", "zz"}, {}, {}}), InputError);
  CHECK_THROWS_AS(parse_csv("i:a,c:g\n1,3\n"), InputError);
  CHECK_THROWS_AS(parse_csv("i:a,y:s\n1,abc\n"), InputError);
  CHECK_THROWS_AS(parse_csv("i:a,i:a\n1,0\n"), InputError);
  CHECK_THROWS_AS(load_csv("/nonexistent/file.csv"), InputError);
}

TEST_CASE("rows with missing cells are rejected and reported") {
  auto r = parse_csv("i:a,i:b,y:s\n1,0,1.0\n,1,2.0\n0,1,NA\n1,1,3\n");
  CHECK(r.data.n() == 2);
  REQUIRE(r.rejected.size() == 2);
  CHECK(r.rejected[0].row == 2);
  CHECK(r.rejected[0].column == "a");
  CHECK(r.rejected[1].row == 3);
  CHECK(r.rejected[1].column == "s");
  CHECK_THROWS_AS(parse_csv("i:a\nNA\n"), InputError);
}

TEST_CASE("load_csv reads a file with a byte order mark and CRLF") {
  const auto path = std::filesystem::temp_directory_path() / "catmix_test_bom.csv";
  {
    std::ofstream out(path, std::ios::binary);
    out << "\xEF\xBB\xBFi:a,i:b\r\n1,0\r\n0,1\r\n";
  }
  auto r = load_csv(path);
  CHECK(r.data.n() == 2);
  CHECK(r.data.indicator_names().front() == "a");
  std::filesystem::remove(path);
}

TEST_CASE("describe by hand") {
  auto d = describe(CategoricalDataset::from_rows({{1, 0}, {0, 0}}));
  CHECK(d.proportions == std::vector<double>{0.5, 0.0});
  CHECK(d.mean_selected == doctest::Approx(0.5));
  CHECK(d.histogram == std::vector<std::size_t>{1, 1, 0});

  auto ones = describe(CategoricalDataset::from_rows({{1, 1, 1}, {1, 1, 1}}));
  for (double p : ones.proportions) CHECK(p == 1.0);
  CHECK(ones.sd_selected == 0.0);
}

TEST_CASE("describe matches single-pass column means") {
  std::mt19937_64 rng(11);
  for (int rep = 0; rep < 20; ++rep) {
    const auto ds = testgen::random_dataset(rng, 1 + rng() % 80, 1 + rng() % 9);
    const auto d = describe(ds);
    std::vector<double> sums(ds.j(), 0.0);
    std::vector<double> counts;
    for (std::size_t i = 0; i < ds.n(); ++i) {
      double c = 0;
      for (std::size_t j = 0; j < ds.j(); ++j) {
        sums[j] += ds.at(i, j);
        c += ds.at(i, j);
      }
      counts.push_back(c);
    }
    for (std::size_t j = 0; j < ds.j(); ++j)
      CHECK(std::fabs(d.proportions[j] - sums[j] / double(ds.n())) < 1e-12);
    double mean = 0;
    for (double c : counts) mean += c;
    mean /= double(counts.size());
    double ss = 0;
    for (double c : counts) ss += (c - mean) * (c - mean);
    CHECK(std::fabs(d.mean_selected - mean) < 1e-12);
    if (counts.size() > 1) CHECK(std::fabs(d.sd_selected - std::sqrt(ss / double(counts.size() - 1))) < 1e-12);
    std::size_t total = 0;
    for (auto h : d.histogram) total += h;
    CHECK(total == ds.n());
    CHECK(d.histogram.size() == ds.j() + 1);
  }
}

TEST_CASE("collapse patterns by hand") {
  auto t = collapse_patterns(CategoricalDataset::from_rows({{1, 1}, {1, 1}, {1, 1}, {1, 1}}));
  CHECK(t.size() == 1);
  CHECK(t.weights == std::vector<double>{4});

  auto u = collapse_patterns(CategoricalDataset::from_rows({{1, 0}, {0, 1}, {1, 0}}));
  CHECK(u.size() == 2);
  CHECK(u.weights == std::vector<double>{2, 1});
  CHECK(u.row_pattern == std::vector<std::size_t>{0, 1, 0});
}

TEST_CASE("collapse then expand reproduces the row multiset") {
  std::mt19937_64 rng(12);
  for (int rep = 0; rep < 30; ++rep) {
    const auto ds = testgen::random_dataset(rng, 1 + rng() % 200, 1 + rng() % 6);
    const auto t = collapse_patterns(ds);
    std::map<std::vector<int>, double> rows, expanded;
    for (std::size_t i = 0; i < ds.n(); ++i) {
      auto r = ds.row(i);
      rows[std::vector<int>(r.begin(), r.end())] += 1;
    }
    double total = 0;
    for (std::size_t p = 0; p < t.size(); ++p) {
      auto r = t.pattern(p);
      auto key = std::vector<int>(r.begin(), r.end());
      CHECK(expanded.count(key) == 0);
      expanded[key] += t.weights[p];
      total += t.weights[p];
    }
    CHECK(total == double(ds.n()));
    CHECK(rows == expanded);
  }
}

TEST_CASE("subset carries auxiliary columns") {
  CategoricalDataset ds({1, 0, 0, 1, 1, 1}, {"a", "b"}, {{"g", {1, 0, 1}}}, {{"y", {0.5, 1.5, 2.5}}});
  std::vector<std::size_t> rows{2, 2, 0};
  auto s = ds.subset(rows);
  CHECK(s.n() == 3);
  CHECK(s.covariate("g").values == std::vector<std::uint8_t>{1, 1, 1});
  CHECK(s.outcome("y").values == std::vector<double>{2.5, 2.5, 0.5});
}

TEST_CASE("schema json round trip") {
  Schema s{{"a", "b"}, {"g"}, {"y"}};
  auto back = schema_from_json(to_json(s));
  CHECK(back.indicators == s.indicators);
  CHECK(back.covariates == s.covariates);
  CHECK(back.outcomes == s.outcomes);
}
