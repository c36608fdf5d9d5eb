#include "core/rv.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <map>

#include "core/rng.hpp"

namespace must {
namespace rv {

namespace {

constexpr uint64_t kSaltSplitBase = 0x53504C49ull;
constexpr uint64_t kSaltForward = 0x464F5257ull;
constexpr uint64_t kSaltReverse = 0x52455653ull;

PairSummary summarize(const TrainedPair& pair) {
  PairSummary s;
  if (!pair.log.empty()) {
    const StepRecord& last = pair.log.back();
    s.loss_teacher_clf = last.loss_teacher_clf;
    s.loss_student = last.loss_student;
    s.loss_teacher_total = last.loss_teacher_total;
    s.pct_confident = last.pct_confident;
  }
  return s;
}

Dataset concat_features(const std::vector<const Dataset*>& parts,
                        const std::string& name, bool keep_labels) {
  int64_t rows = 0;
  for (const Dataset* p : parts) rows += p->size();
  Dataset out;
  out.domain_name = name;
  out.features = Matrix(rows, parts.front()->dim());
  out.labels.reserve(static_cast<size_t>(rows));
  int64_t at = 0;
  for (const Dataset* p : parts) {
    for (int64_t i = 0; i < p->size(); ++i, ++at) {
      for (int64_t c = 0; c < p->dim(); ++c) {
        out.features(at, c) = p->features(i, c);
      }
      out.labels.push_back(keep_labels ? p->labels[static_cast<size_t>(i)] : -1);
    }
  }
  return out;
}

}  // namespace

SplitResult split(const Dataset& ds, double frac, uint64_t seed) {
  if (!(frac > 0.0) || !(frac < 1.0)) {
    fail(ErrorCode::invalid_argument, "split fraction must be in (0,1), got ",
         frac);
  }
  // Strata in ascending label order; unlabeled data is the single -1 stratum.
  std::map<int32_t, std::vector<int64_t>> strata;
  for (int64_t i = 0; i < ds.size(); ++i) {
    strata[ds.labels[static_cast<size_t>(i)]].push_back(i);
  }
  Rng rng(Rng::derive_stream(seed, kSaltSplitBase));
  std::vector<int64_t> train_idx, val_idx;
  for (auto& [label, idx] : strata) {
    // Fisher-Yates with draws from the split stream.
    for (size_t i = idx.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(rng.uniform_int(static_cast<int64_t>(i)));
      std::swap(idx[i - 1], idx[j]);
    }
    const auto n = static_cast<int64_t>(idx.size());
    const int64_t take = static_cast<int64_t>(
        std::floor(frac * static_cast<double>(n) + 0.5));
    if (take < 1 || take >= n) {
      fail(ErrorCode::invalid_argument, "split leaves label ", label,
           " empty on one side (", n, " samples, frac ", frac, ")");
    }
    train_idx.insert(train_idx.end(), idx.begin(), idx.begin() + take);
    val_idx.insert(val_idx.end(), idx.begin() + take, idx.end());
  }
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(val_idx.begin(), val_idx.end());

  auto take_rows = [&](const std::vector<int64_t>& idx, const char* suffix) {
    Dataset part;
    part.domain_name = ds.domain_name + suffix;
    part.features = ds.features.select_rows(idx);
    part.labels.reserve(idx.size());
    for (int64_t i : idx) part.labels.push_back(ds.labels[static_cast<size_t>(i)]);
    return part;
  };
  return {take_rows(train_idx, ""), take_rows(val_idx, "")};
}

RVResult reverse_validate(const TrainerConfig& candidate,
                          const std::vector<Dataset>& sources,
                          const Dataset& target, uint64_t seed,
                          double split_frac) {
  candidate.validate();
  if (sources.empty()) {
    fail(ErrorCode::invalid_argument, "reverse_validate: no sources");
  }

  std::vector<Dataset> src_train, src_val;
  for (size_t k = 0; k < sources.size(); ++k) {
    SplitResult s = split(sources[k], split_frac,
                          Rng::derive_stream(seed, kSaltSplitBase + 1 + k));
    src_train.push_back(std::move(s.train));
    src_val.push_back(std::move(s.val));
  }
  SplitResult tgt = split(target, split_frac,
                          Rng::derive_stream(seed, kSaltSplitBase + 1000));

  TrainerConfig forward_cfg = candidate;
  forward_cfg.seed = Rng::derive_stream(seed, kSaltForward);
  TrainedPair forward = train(forward_cfg, src_train, tgt.train);

  // Pseudo-label the held-out target samples with the forward student.
  Dataset reverse_source;
  reverse_source.domain_name = "pseudo-target";
  reverse_source.features = tgt.val.features;
  reverse_source.labels = predict(forward.student, tgt.val.features, 0);

  std::vector<const Dataset*> pool;
  for (const Dataset& d : src_train) pool.push_back(&d);
  Dataset reverse_target = concat_features(pool, "sources-as-target", false);

  TrainerConfig reverse_cfg = candidate;
  reverse_cfg.seed = Rng::derive_stream(seed, kSaltReverse);
  TrainedPair reverse = train(reverse_cfg, {reverse_source}, reverse_target);

  std::vector<const Dataset*> vals;
  for (const Dataset& d : src_val) vals.push_back(&d);
  Dataset val_all = concat_features(vals, "source-val", true);
  Matrix probs = reverse.student.forward_eval(val_all.features, 0);
  RVResult result;
  result.candidate = candidate;
  result.rv_loss = cross_entropy(probs, val_all.labels).loss;
  double acc = 0.0;
  for (const Dataset& d : src_val) {
    acc += accuracy(forward.student, d.features, d.labels, 0);
  }
  result.student_src_acc = acc / static_cast<double>(src_val.size());
  result.forward_final = summarize(forward);
  result.reverse_final = summarize(reverse);
  if (!std::isfinite(result.rv_loss) || result.rv_loss < 0.0) {
    fail(ErrorCode::state, "reverse validation produced rv_loss ",
         result.rv_loss);
  }
  return result;
}

const char* criterion_name(SelectCriterion c) {
  return c == SelectCriterion::rv ? "rv" : "student-src-acc";
}

SelectCriterion criterion_from_string(const std::string& s) {
  if (s == "rv") return SelectCriterion::rv;
  if (s == "student-src-acc") return SelectCriterion::student_src_acc;
  fail(ErrorCode::invalid_argument, "unknown criterion '", s,
       "' (rv | student-src-acc)");
}

SelectOutcome select(const std::vector<TrainerConfig>& grid,
                     const std::vector<Dataset>& sources, const Dataset& target,
                     uint64_t seed, SelectCriterion criterion,
                     double split_frac) {
  if (grid.empty()) {
    fail(ErrorCode::invalid_argument, "select: empty candidate grid");
  }
  SelectOutcome out;
  out.results.resize(grid.size());

  auto evaluate = [&](size_t i) {
    CandidateResult r;
    r.candidate = grid[i];
    if (criterion == SelectCriterion::rv) {
      RVResult rv = reverse_validate(grid[i], sources, target, seed, split_frac);
      r.rv_loss = rv.rv_loss;
      r.student_src_acc = rv.student_src_acc;
      r.forward_final = rv.forward_final;
      r.reverse_final = rv.reverse_final;
    } else {
      TrainerConfig cfg = grid[i];
      cfg.seed = Rng::derive_stream(seed, kSaltForward);
      TrainedPair pair = train(cfg, sources, target);
      double acc = 0.0;
      for (const Dataset& d : sources) {
        acc += accuracy(pair.student, d.features, d.labels, 0);
      }
      r.student_src_acc = acc / static_cast<double>(sources.size());
      r.forward_final = summarize(pair);
    }
    return r;
  };

  std::vector<std::future<CandidateResult>> jobs;
  jobs.reserve(grid.size());
  for (size_t i = 0; i < grid.size(); ++i) {
    jobs.push_back(std::async(std::launch::async, evaluate, i));
  }
  for (size_t i = 0; i < grid.size(); ++i) {
    out.results[i] = jobs[i].get();
  }

  size_t best = 0;
  for (size_t i = 1; i < out.results.size(); ++i) {
    if (criterion == SelectCriterion::rv) {
      if (out.results[i].rv_loss < out.results[best].rv_loss) best = i;
    } else {
      if (out.results[i].student_src_acc > out.results[best].student_src_acc) {
        best = i;
      }
    }
  }
  out.best_index = best;
  return out;
}

}  // namespace rv
}  // namespace must
