#include <cmath>
#include <filesystem>
#include <fstream>

#include "core/data.hpp"
#include "doctest.h"

using namespace must;
namespace fs = std::filesystem;

namespace {

fs::path test_dir() {
  fs::path dir = fs::temp_directory_path() / "mustlab_test_data";
  fs::create_directories(dir);
  return dir;
}

double correlation(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

TEST_CASE("clusters2d with zero shift and noise collapses to the class centers") {
  SyntheticSpec spec;
  spec.n_per_class = 5;
  spec.num_sources = 2;
  spec.shift = 0.0;
  spec.noise_std = 0.0;
  spec.separation = 4.0;
  GeneratedDomains g = gen_clusters2d(spec);
  REQUIRE(g.sources.size() == 2);
  for (const Dataset* ds : {&g.sources[0], &g.sources[1], &g.target_eval}) {
    for (int64_t i = 0; i < ds->size(); ++i) {
      const double expected_x = i < spec.n_per_class ? -2.0 : 2.0;
      CHECK(ds->features(i, 0) == doctest::Approx(expected_x).epsilon(1e-15));
      CHECK(ds->features(i, 1) == doctest::Approx(0.0));
    }
  }
  CHECK(g.target.fully_unlabeled());
  CHECK(g.target_eval.fully_labeled());
  CHECK(g.target.features == g.target_eval.features);
}

TEST_CASE("generators are pure functions of the spec") {
  SyntheticSpec spec;
  spec.seed = 99;
  spec.n_per_class = 20;
  GeneratedDomains a = gen_clusters2d(spec);
  GeneratedDomains b = gen_clusters2d(spec);
  for (size_t k = 0; k < a.sources.size(); ++k) {
    CHECK(a.sources[k].features == b.sources[k].features);
    CHECK(a.sources[k].labels == b.sources[k].labels);
  }
  CHECK(a.target.features == b.target.features);

  spec.seed = 100;
  GeneratedDomains c = gen_clusters2d(spec);
  CHECK(a.target.features != c.target.features);
}

TEST_CASE("every generated domain is class balanced") {
  SyntheticSpec spec;
  spec.n_per_class = 17;
  spec.num_sources = 3;
  GeneratedDomains g = gen_clusters2d(spec);
  for (const Dataset& ds : g.sources) {
    int64_t c0 = 0, c1 = 0;
    for (int32_t y : ds.labels) (y == 0 ? c0 : c1)++;
    CHECK(c0 == 17);
    CHECK(c1 == 17);
  }
}

TEST_CASE("low-noise labels agree with nearest empirical class center") {
  SyntheticSpec spec;
  spec.n_per_class = 100;
  spec.separation = 4.0;
  spec.noise_std = 0.1 * spec.separation;
  spec.seed = 7;
  GeneratedDomains g = gen_clusters2d(spec);
  const Dataset& ev = g.target_eval;
  double cx[2] = {0, 0}, cy[2] = {0, 0};
  for (int64_t i = 0; i < ev.size(); ++i) {
    const int32_t y = ev.labels[static_cast<size_t>(i)];
    cx[y] += ev.features(i, 0) / spec.n_per_class;
    cy[y] += ev.features(i, 1) / spec.n_per_class;
  }
  int64_t agree = 0;
  for (int64_t i = 0; i < ev.size(); ++i) {
    double d0 = std::hypot(ev.features(i, 0) - cx[0], ev.features(i, 1) - cy[0]);
    double d1 = std::hypot(ev.features(i, 0) - cx[1], ev.features(i, 1) - cy[1]);
    const int32_t nearest = d0 <= d1 ? 0 : 1;
    agree += nearest == ev.labels[static_cast<size_t>(i)] ? 1 : 0;
  }
  CHECK(agree == ev.size());
}

TEST_CASE("spurious coordinate carries the label in sources but not the target") {
  SyntheticSpec spec;
  spec.scenario = Scenario::spurious_feature;
  spec.n_per_class = 500;
  spec.num_sources = 2;
  spec.noise_std = 0.05;
  spec.seed = 11;
  GeneratedDomains g = gen_spurious_feature(spec);
  for (const Dataset& src : g.sources) {
    std::vector<double> col, lab;
    for (int64_t i = 0; i < src.size(); ++i) {
      col.push_back(src.features(i, 2));
      lab.push_back(src.labels[static_cast<size_t>(i)]);
    }
    CHECK(std::abs(correlation(col, lab)) > 0.95);
  }
  std::vector<double> col, lab;
  for (int64_t i = 0; i < g.target_eval.size(); ++i) {
    col.push_back(g.target_eval.features(i, 2));
    lab.push_back(g.target_eval.labels[static_cast<size_t>(i)]);
  }
  CHECK(std::abs(correlation(col, lab)) < 0.1);

  SyntheticSpec exact = spec;
  exact.noise_std = 0.0;
  GeneratedDomains ge = gen_spurious_feature(exact);
  for (int64_t i = 0; i < ge.sources[0].size(); ++i) {
    CHECK(ge.sources[0].features(i, 2) ==
          static_cast<double>(ge.sources[0].labels[static_cast<size_t>(i)]));
  }
}

TEST_CASE("csv round trip preserves the dataset exactly") {
  SyntheticSpec spec;
  spec.n_per_class = 13;
  GeneratedDomains g = gen_clusters2d(spec);
  fs::path p = test_dir() / "roundtrip.csv";
  save_csv(g.sources[0], p.string());
  Dataset back = load_csv(p.string(), g.sources[0].domain_name);
  CHECK(back.features == g.sources[0].features);
  CHECK(back.labels == g.sources[0].labels);

  save_csv(g.target, (test_dir() / "target.csv").string());
  Dataset tgt = load_csv((test_dir() / "target.csv").string(), "target");
  CHECK(tgt.fully_unlabeled());
}

TEST_CASE("csv parse errors name the offending line") {
  fs::path p = test_dir() / "ragged.csv";
  std::ofstream(p) << "label,f0,f1\n1,0.5,0.25\n0,0.125\n";
  try {
    load_csv(p.string(), "bad");
    FAIL("expected parse error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::parse);
    CHECK(std::string(e.what()).find(":3") != std::string::npos);
  }
  fs::path q = test_dir() / "badvalue.csv";
  std::ofstream(q) << "label,f0\n1,zebra\n";
  CHECK_THROWS_AS(load_csv(q.string(), "bad"), Error);
  CHECK_THROWS_AS(load_csv((test_dir() / "nope.csv").string(), "x"), Error);
}

TEST_CASE("manifest round trip and role validation") {
  fs::path dir = test_dir() / "mani";
  fs::create_directories(dir);
  SyntheticSpec spec;
  spec.n_per_class = 8;
  spec.num_sources = 3;
  GeneratedDomains g = gen_clusters2d(spec);

  DomainManifest m;
  m.feature_dim = 2;
  m.num_classes = 2;
  for (size_t k = 0; k < g.sources.size(); ++k) {
    std::string file = "src" + std::to_string(k) + ".csv";
    save_csv(g.sources[k], (dir / file).string());
    m.entries.push_back({DomainRole::source, g.sources[k].domain_name, file});
  }
  save_csv(g.target, (dir / "target.csv").string());
  save_csv(g.target_eval, (dir / "target_eval.csv").string());
  m.entries.push_back({DomainRole::target, "target", "target.csv"});
  m.entries.push_back({DomainRole::target_eval, "target_eval", "target_eval.csv"});
  save_manifest(m, (dir / "manifest.txt").string());

  LoadedDomains loaded = load_manifest((dir / "manifest.txt").string());
  CHECK(loaded.sources.size() == 3);
  CHECK(loaded.target.fully_unlabeled());
  REQUIRE(loaded.target_eval.has_value());
  CHECK(loaded.target_eval->fully_labeled());
  CHECK(loaded.manifest.feature_dim == 2);

  SUBCASE("two targets rejected") {
    DomainManifest bad = m;
    bad.entries.push_back({DomainRole::target, "target2", "target.csv"});
    save_manifest(bad, (dir / "two_targets.txt").string());
    CHECK_THROWS_AS(load_manifest((dir / "two_targets.txt").string()), Error);
  }
  SUBCASE("labeled target rejected") {
    DomainManifest bad;
    bad.feature_dim = 2;
    bad.num_classes = 2;
    bad.entries.push_back({DomainRole::source, "src0", "src0.csv"});
    bad.entries.push_back({DomainRole::target, "target", "target_eval.csv"});
    save_manifest(bad, (dir / "labeled_target.txt").string());
    try {
      load_manifest((dir / "labeled_target.txt").string());
      FAIL("expected role error");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("target must be unlabeled") !=
            std::string::npos);
    }
  }
  SUBCASE("missing target rejected") {
    DomainManifest bad;
    bad.feature_dim = 2;
    bad.num_classes = 2;
    bad.entries.push_back({DomainRole::source, "src0", "src0.csv"});
    save_manifest(bad, (dir / "no_target.txt").string());
    CHECK_THROWS_AS(load_manifest((dir / "no_target.txt").string()), Error);
  }
  SUBCASE("unlabeled source rejected") {
    DomainManifest bad = m;
    bad.entries[0] = {DomainRole::source, "bad", "target.csv"};
    save_manifest(bad, (dir / "unlabeled_source.txt").string());
    CHECK_THROWS_AS(load_manifest((dir / "unlabeled_source.txt").string()), Error);
  }
}

TEST_CASE("spec validation rejects bad fields") {
  SyntheticSpec spec;
  spec.n_per_class = 0;
  CHECK_THROWS_AS(gen_clusters2d(spec), Error);
  spec.n_per_class = 5;
  spec.noise_std = -0.1;
  CHECK_THROWS_AS(gen_clusters2d(spec), Error);
  spec.noise_std = 0.0;
  spec.scenario = Scenario::spurious_feature;
  CHECK_THROWS_AS(gen_clusters2d(spec), Error);
}
