#include <algorithm>
#include <cmath>
#include <map>

#include "core/data.hpp"
#include "core/rv.hpp"
#include "doctest.h"

using namespace must;

namespace {

TrainerConfig candidate(double lambda, double c_th, int64_t steps,
                        int64_t in_dim = 2) {
  TrainerConfig cfg;
  cfg.teacher_arch = parse_arch("bn,affine:8,relu,affine:out,sigmoid", in_dim, 2);
  cfg.student_arch = cfg.teacher_arch;
  cfg.lambda = lambda;
  cfg.confidence_threshold = c_th;
  cfg.steps = steps;
  cfg.batch_size = 16;
  cfg.record_every = 50;
  return cfg;
}

GeneratedDomains easy_data(uint64_t seed, int64_t n_per_class = 50,
                           double shift = 0.0) {
  SyntheticSpec spec;
  spec.n_per_class = n_per_class;
  spec.num_sources = 2;
  spec.shift = shift;
  spec.separation = 4.0;
  spec.noise_std = 0.5;
  spec.seed = seed;
  return gen_clusters2d(spec);
}

}  // namespace

TEST_CASE("split is stratified, exhaustive and deterministic") {
  GeneratedDomains g = easy_data(1);  // 50 per class
  rv::SplitResult s = rv::split(g.sources[0], 0.5, 7);
  CHECK(s.train.size() == 50);
  CHECK(s.val.size() == 50);
  for (const Dataset* part : {&s.train, &s.val}) {
    int64_t c0 = 0, c1 = 0;
    for (int32_t y : part->labels) (y == 0 ? c0 : c1)++;
    CHECK(c0 == 25);
    CHECK(c1 == 25);
  }

  rv::SplitResult again = rv::split(g.sources[0], 0.5, 7);
  CHECK(again.train.features == s.train.features);
  rv::SplitResult other = rv::split(g.sources[0], 0.5, 8);
  CHECK(other.train.features != s.train.features);

  // Union of the parts is the original multiset of rows.
  auto row_key = [](const Dataset& d, int64_t i) {
    return std::pair<double, double>(d.features(i, 0), d.features(i, 1));
  };
  std::map<std::pair<double, double>, int> counts;
  for (int64_t i = 0; i < g.sources[0].size(); ++i) counts[row_key(g.sources[0], i)]++;
  for (const Dataset* part : {&s.train, &s.val}) {
    for (int64_t i = 0; i < part->size(); ++i) counts[row_key(*part, i)]--;
  }
  for (const auto& [key, count] : counts) CHECK(count == 0);
}

TEST_CASE("split rejects degenerate fractions and empty strata") {
  GeneratedDomains g = easy_data(2, 2);  // 2 per class
  CHECK_THROWS_AS(rv::split(g.sources[0], 0.9, 1), Error);  // class side empty
  CHECK_THROWS_AS(rv::split(g.sources[0], 0.0, 1), Error);
  CHECK_THROWS_AS(rv::split(g.sources[0], 1.0, 1), Error);
  CHECK_NOTHROW(rv::split(g.sources[0], 0.5, 1));
  // Unlabeled data splits as a single stratum.
  rv::SplitResult s = rv::split(g.target, 0.5, 3);
  CHECK(s.train.fully_unlabeled());
  CHECK(s.train.size() + s.val.size() == g.target.size());
}

TEST_CASE("steps=0 reverse validation is the untrained baseline") {
  GeneratedDomains g = easy_data(3);
  rv::RVResult a = rv::reverse_validate(candidate(0.5, 0.6, 0), g.sources,
                                        g.target, 11);
  // Training hyperparameters are inert at zero steps: the loss is purely the
  // untrained reverse classifier evaluated on the source validation labels.
  rv::RVResult b = rv::reverse_validate(candidate(1.0, 0.9, 0), g.sources,
                                        g.target, 11);
  rv::RVResult c = rv::reverse_validate(candidate(0.25, 0.0, 0), g.sources,
                                        g.target, 11);
  CHECK(a.rv_loss == b.rv_loss);
  CHECK(a.rv_loss == c.rv_loss);
  // A single random init can land anywhere around ln 2 on separable data;
  // only the order of magnitude is meaningful here.
  CHECK(a.rv_loss > 0.0);
  CHECK(a.rv_loss < 3.0);
}

TEST_CASE("reverse validation is deterministic per (candidate, seed)") {
  GeneratedDomains g = easy_data(4);
  TrainerConfig cfg = candidate(0.5, 0.6, 60);
  rv::RVResult a = rv::reverse_validate(cfg, g.sources, g.target, 5);
  rv::RVResult b = rv::reverse_validate(cfg, g.sources, g.target, 5);
  CHECK(a.rv_loss == b.rv_loss);
  CHECK(a.student_src_acc == b.student_src_acc);
  rv::RVResult c = rv::reverse_validate(cfg, g.sources, g.target, 6);
  CHECK(a.rv_loss != c.rv_loss);
}

TEST_CASE("select returns the single element of a one-point grid") {
  GeneratedDomains g = easy_data(5);
  std::vector<TrainerConfig> grid{candidate(0.5, 0.6, 0)};
  rv::SelectOutcome out =
      rv::select(grid, g.sources, g.target, 1, rv::SelectCriterion::rv);
  CHECK(out.best_index == 0);
  CHECK(out.results.size() == 1);
}

TEST_CASE("a converged candidate beats an untrained one under both criteria") {
  GeneratedDomains g = easy_data(6);
  std::vector<TrainerConfig> grid{candidate(0.5, 0.6, 0),
                                  candidate(0.5, 0.6, 400)};
  rv::SelectOutcome by_rv =
      rv::select(grid, g.sources, g.target, 2, rv::SelectCriterion::rv);
  CHECK(by_rv.best_index == 1);
  CHECK(by_rv.results[1].rv_loss < by_rv.results[0].rv_loss);

  rv::SelectOutcome by_acc = rv::select(grid, g.sources, g.target, 2,
                                        rv::SelectCriterion::student_src_acc);
  CHECK(by_acc.best_index == 1);
  CHECK(by_acc.results[1].student_src_acc > by_acc.results[0].student_src_acc);
}

TEST_CASE("duplicated candidates tie toward the first occurrence") {
  GeneratedDomains g = easy_data(7);
  TrainerConfig cfg = candidate(0.5, 0.6, 30);
  std::vector<TrainerConfig> grid{cfg, cfg, cfg};
  rv::SelectOutcome out =
      rv::select(grid, g.sources, g.target, 3, rv::SelectCriterion::rv);
  CHECK(out.results[0].rv_loss == out.results[1].rv_loss);
  CHECK(out.results[1].rv_loss == out.results[2].rv_loss);
  CHECK(out.best_index == 0);
}

TEST_CASE("reverse validation never reads target labels") {
  // The API admits only an unlabeled target; a labeled one is rejected at
  // the training boundary inside the forward direction.
  GeneratedDomains g = easy_data(8);
  TrainerConfig cfg = candidate(0.5, 0.6, 10);
  CHECK_THROWS_AS(rv::reverse_validate(cfg, g.sources, g.target_eval, 1), Error);
}

TEST_CASE("rv ranking correlates non-negatively with true target error") {
  // 6-point lambda x c_th grid, 5 seeds; mean Spearman over seeds >= 0.
  // Candidates differ mostly through training length to keep real spread.
  std::vector<TrainerConfig> grid;
  for (double lambda : {0.25, 0.5, 1.0}) {
    for (double c_th : {0.6, 0.9}) {
      grid.push_back(candidate(lambda, c_th, lambda < 0.3 ? 30 : 300));
    }
  }
  double spearman_sum = 0.0;
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    GeneratedDomains g = easy_data(100 + seed, 40, 1.0);
    rv::SelectOutcome out =
        rv::select(grid, g.sources, g.target, seed, rv::SelectCriterion::rv);
    std::vector<double> err;
    for (const auto& res : out.results) {
      TrainerConfig cfg = res.candidate;
      cfg.seed = seed;
      TrainedPair pair = train(cfg, g.sources, g.target);
      err.push_back(1.0 - accuracy(pair.student, g.target_eval.features,
                                   g.target_eval.labels, 0));
    }
    auto ranks = [](const std::vector<double>& v) {
      std::vector<double> r(v.size());
      for (size_t i = 0; i < v.size(); ++i) {
        for (size_t j = 0; j < v.size(); ++j) {
          if (v[j] < v[i] || (v[j] == v[i] && j < i)) r[i] += 1.0;
        }
      }
      return r;
    };
    std::vector<double> rv_rank, err_rank;
    {
      std::vector<double> losses;
      for (const auto& res : out.results) losses.push_back(res.rv_loss);
      rv_rank = ranks(losses);
      err_rank = ranks(err);
    }
    const double n = static_cast<double>(grid.size());
    double d2 = 0.0;
    for (size_t i = 0; i < grid.size(); ++i) {
      d2 += (rv_rank[i] - err_rank[i]) * (rv_rank[i] - err_rank[i]);
    }
    spearman_sum += 1.0 - 6.0 * d2 / (n * (n * n - 1.0));
  }
  CHECK(spearman_sum / 5.0 >= 0.0);
}
