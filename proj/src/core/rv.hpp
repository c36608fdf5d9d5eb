#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "core/data.hpp"
#include "core/trainer.hpp"

namespace must {
namespace rv {

/// Disjoint, exhaustive split; label-stratified for labeled data (an
/// unlabeled set is one stratum). Deterministic per seed.
struct SplitResult {
  Dataset train;
  Dataset val;
};
SplitResult split(const Dataset& ds, double frac, uint64_t seed);

/// Final-record summary of one training direction.
struct PairSummary {
  double loss_teacher_clf = 0.0;
  double loss_student = 0.0;
  double loss_teacher_total = 0.0;
  double pct_confident = 0.0;
};

struct RVResult {
  TrainerConfig candidate;
  double rv_loss = 0.0;         // reverse student CE on held-out source labels
  double student_src_acc = 0.0; // forward student accuracy on source val splits
  PairSummary forward_final;
  PairSummary reverse_final;
};

/// Label-free candidate scoring: split every domain, train the candidate
/// forward on the training splits, pseudo-label the target validation split
/// with the forward student, train the same configuration in reverse
/// (pseudo-labeled target-val as the single source, the pooled unlabeled
/// source training features as the target), and score the reverse student's
/// cross-entropy on the held-out labeled source validation splits.
/// All internal seeds derive from `seed`; the candidate's own seed field is
/// ignored so every candidate in a sweep sees identical splits and draws.
RVResult reverse_validate(const TrainerConfig& candidate,
                          const std::vector<Dataset>& sources,
                          const Dataset& target, uint64_t seed,
                          double split_frac = 0.8);

enum class SelectCriterion { rv, student_src_acc };

const char* criterion_name(SelectCriterion c);
SelectCriterion criterion_from_string(const std::string& s);

/// One sweep row; fields not computed under the active criterion are NaN.
struct CandidateResult {
  TrainerConfig candidate;
  double rv_loss = std::numeric_limits<double>::quiet_NaN();
  double student_src_acc = std::numeric_limits<double>::quiet_NaN();
  PairSummary forward_final;
  PairSummary reverse_final;
};

struct SelectOutcome {
  size_t best_index = 0;
  std::vector<CandidateResult> results;  // grid order
};

/// criterion rv: argmin rv_loss over the grid. criterion student_src_acc:
/// train each candidate on the full data and argmax the student's mean
/// accuracy across source domains. Ties break toward grid order. Candidates
/// are independent and evaluated concurrently; aggregation is by grid index.
SelectOutcome select(const std::vector<TrainerConfig>& grid,
                     const std::vector<Dataset>& sources, const Dataset& target,
                     uint64_t seed, SelectCriterion criterion,
                     double split_frac = 0.8);

}  // namespace rv
}  // namespace must
