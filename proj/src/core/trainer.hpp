#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "core/data.hpp"
#include "core/net.hpp"

namespace must {

/// must: joint teacher/student procedure.
/// only_bn: teacher alone, per-domain batch norm, target statistics adapt.
/// source_only: teacher alone, single shared batch-norm entry, the target is
/// never seen during training.
enum class Variant { must, only_bn, source_only };

const char* variant_name(Variant v);
Variant variant_from_string(const std::string& s);

struct TrainerConfig {
  double lambda = 0.5;                // teacher-regularizer weight
  double confidence_threshold = 0.6;  // min teacher max-class probability
  double lr = 0.001;
  double momentum = 0.9;
  int64_t steps = 3000;
  int64_t batch_size = 32;
  uint64_t seed = 1;
  int64_t record_every = 10;
  std::vector<LayerSpec> teacher_arch;
  std::vector<LayerSpec> student_arch;
  Variant variant = Variant::must;

  void validate() const;
};

struct StepRecord {
  int64_t step = 0;
  double loss_teacher_clf = 0.0;
  double loss_student = 0.0;
  double loss_teacher_total = 0.0;
  double pct_confident = 0.0;
  double teacher_src_acc = std::numeric_limits<double>::quiet_NaN();
  double teacher_tgt_acc = std::numeric_limits<double>::quiet_NaN();
  double student_tgt_acc = std::numeric_limits<double>::quiet_NaN();
};

struct TrainedPair {
  Network teacher;
  Network student;
  std::vector<StepRecord> log;
};

/// Teacher eval-time probabilities on a fixed target set, captured every
/// `snapshot_every` steps for the consistency analysis.
struct ProbSnapshots {
  std::vector<int64_t> steps;
  std::vector<Matrix> probs;
};

/// mask[i] = (max class probability of row i) >= c_th. Single-column inputs
/// are binary sigmoid outputs with class probabilities (1-f, f).
std::vector<bool> confidence_mask(const Matrix& probs, double c_th);

/// Argmax of the eval-mode forward; ties break toward the lowest class index.
std::vector<int32_t> predict(const Network& net, const Matrix& x,
                             int32_t domain_id);

double accuracy(const Network& net, const Matrix& x,
                std::span<const int32_t> labels, int32_t domain_id);

/// The deployed-on-target batch-norm entry: the bank's last slot (slot K for
/// a K-source teacher; slot 0 for single-entry networks).
int32_t target_domain_of(const Network& net);

/// One joint optimization step, in order: teacher classification loss on the
/// source batch; teacher pseudo-probabilities on the target batch (train-mode
/// batch norm, target entry); confidence gate; student step on the surviving
/// samples (L1 to the teacher's probabilities); teacher step on
/// classification + lambda * distillation, the distillation gradient flowing
/// through the teacher's target outputs with the student's pre-update outputs
/// held fixed. With no survivors (or too few for the student's train-mode
/// batch norm) the student is left untouched and loss_student is 0.
StepRecord train_step(Network& teacher, Network& student, const Matrix& src_x,
                      std::span<const int32_t> src_y, int32_t src_domain_id,
                      const Matrix& tgt_x, const TrainerConfig& cfg);

/// Runs cfg.steps iterations. Each step samples a uniformly random source
/// domain, then a source batch and a target batch uniformly with
/// replacement (sampling streams are separate, so variants that skip the
/// target stay batch-for-batch aligned with those that do not). The teacher owns K+1 batch-norm entries (sources 0..K-1,
/// target K); source_only collapses to a single entry and never touches the
/// target. Deterministic per cfg.seed.
TrainedPair train(const TrainerConfig& cfg, const std::vector<Dataset>& sources,
                  const Dataset& target, const Dataset* target_eval = nullptr,
                  int64_t snapshot_every = 0, ProbSnapshots* snapshots = nullptr);

}  // namespace must
