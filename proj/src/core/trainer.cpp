#include "core/trainer.hpp"

#include <cmath>

#include "core/rng.hpp"

namespace must {

namespace {

// Stream salts; one independent stream per concern so variants that skip a
// draw (no student, no target batch) leave the others untouched.
constexpr uint64_t kSaltTeacherInit = 1;
constexpr uint64_t kSaltStudentInit = 2;
constexpr uint64_t kSaltSourceBatch = 3;
constexpr uint64_t kSaltTargetBatch = 4;

}  // namespace

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::must: return "must";
    case Variant::only_bn: return "only-bn";
    case Variant::source_only: return "source-only";
  }
  return "unknown";
}

Variant variant_from_string(const std::string& s) {
  if (s == "must") return Variant::must;
  if (s == "only-bn") return Variant::only_bn;
  if (s == "source-only") return Variant::source_only;
  fail(ErrorCode::invalid_argument, "unknown variant '", s,
       "' (must | only-bn | source-only)");
}

void TrainerConfig::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    fail(ErrorCode::invalid_argument, "lambda must be >= 0, got ", lambda);
  }
  if (!(confidence_threshold >= 0.0) || !(confidence_threshold <= 1.0)) {
    fail(ErrorCode::invalid_argument, "c_th must be in [0,1], got ",
         confidence_threshold);
  }
  if (!(lr > 0.0) || !std::isfinite(lr)) {
    fail(ErrorCode::invalid_argument, "lr must be > 0, got ", lr);
  }
  if (!(momentum >= 0.0) || momentum >= 1.0) {
    fail(ErrorCode::invalid_argument, "momentum must be in [0,1), got ",
         momentum);
  }
  if (steps < 0) {
    fail(ErrorCode::invalid_argument, "steps must be >= 0, got ", steps);
  }
  if (batch_size < 2) {
    fail(ErrorCode::invalid_argument, "batch_size must be >= 2, got ",
         batch_size);
  }
  if (record_every < 1) {
    fail(ErrorCode::invalid_argument, "record_every must be >= 1, got ",
         record_every);
  }
  validate_arch(teacher_arch);
  validate_arch(student_arch);
  if (teacher_arch.front().in_dim != student_arch.front().in_dim) {
    fail(ErrorCode::invalid_argument, "teacher expects ",
         teacher_arch.front().in_dim, " inputs, student ",
         student_arch.front().in_dim);
  }
  if (teacher_arch.back().kind != student_arch.back().kind ||
      teacher_arch.back().out_dim != student_arch.back().out_dim) {
    fail(ErrorCode::invalid_argument,
         "teacher and student heads must match for distillation");
  }
}

std::vector<bool> confidence_mask(const Matrix& probs, double c_th) {
  if (!(c_th >= 0.0) || !(c_th <= 1.0)) {
    fail(ErrorCode::invalid_argument, "confidence threshold ", c_th,
         " not in [0,1]");
  }
  std::vector<bool> mask(static_cast<size_t>(probs.rows()));
  for (int64_t i = 0; i < probs.rows(); ++i) {
    double conf;
    if (probs.cols() == 1) {
      const double f = probs(i, 0);
      conf = std::max(f, 1.0 - f);
    } else {
      conf = probs(i, 0);
      for (int64_t c = 1; c < probs.cols(); ++c) {
        conf = std::max(conf, probs(i, c));
      }
    }
    mask[static_cast<size_t>(i)] = conf >= c_th;
  }
  return mask;
}

std::vector<int32_t> predict(const Network& net, const Matrix& x,
                             int32_t domain_id) {
  Matrix probs = net.forward_eval(x, domain_id);
  std::vector<int32_t> labels(static_cast<size_t>(probs.rows()));
  for (int64_t i = 0; i < probs.rows(); ++i) {
    if (probs.cols() == 1) {
      labels[static_cast<size_t>(i)] = probs(i, 0) > 0.5 ? 1 : 0;
    } else {
      int32_t best = 0;
      for (int64_t c = 1; c < probs.cols(); ++c) {
        if (probs(i, c) > probs(i, best)) best = static_cast<int32_t>(c);
      }
      labels[static_cast<size_t>(i)] = best;
    }
  }
  return labels;
}

double accuracy(const Network& net, const Matrix& x,
                std::span<const int32_t> labels, int32_t domain_id) {
  if (static_cast<int64_t>(labels.size()) != x.rows()) {
    fail(ErrorCode::dimension_mismatch, "accuracy: ", labels.size(),
         " labels for ", x.rows(), " rows");
  }
  std::vector<int32_t> got = predict(net, x, domain_id);
  int64_t correct = 0;
  for (size_t i = 0; i < got.size(); ++i) {
    correct += got[i] == labels[i] ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

int32_t target_domain_of(const Network& net) { return net.num_domains() - 1; }

StepRecord train_step(Network& teacher, Network& student, const Matrix& src_x,
                      std::span<const int32_t> src_y, int32_t src_domain_id,
                      const Matrix& tgt_x, const TrainerConfig& cfg) {
  if (src_x.rows() < 1 || tgt_x.rows() < 1) {
    fail(ErrorCode::invalid_argument, "train_step: empty batch");
  }
  StepRecord rec;

  // (a) teacher classification loss on the source batch.
  ForwardTrace src_trace;
  Matrix src_probs = teacher.forward(src_x, src_domain_id, Mode::train, &src_trace);
  auto [clf_loss, clf_grad] = cross_entropy(src_probs, src_y);
  Gradients teacher_grads = teacher.backward(src_trace, clf_grad);
  rec.loss_teacher_clf = clf_loss;

  // (b) teacher pseudo-probabilities on the target batch (target bn entry).
  const int32_t tgt_entry = target_domain_of(teacher);
  ForwardTrace tgt_trace;
  Matrix tgt_probs = teacher.forward(tgt_x, tgt_entry, Mode::train, &tgt_trace);

  // (c) confidence gate.
  std::vector<bool> mask = confidence_mask(tgt_probs, cfg.confidence_threshold);
  std::vector<int64_t> survivors;
  for (size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) survivors.push_back(static_cast<int64_t>(i));
  }
  rec.pct_confident = static_cast<double>(survivors.size()) /
                      static_cast<double>(tgt_x.rows());

  const int64_t min_batch = student.has_batchnorm() ? 2 : 1;
  if (static_cast<int64_t>(survivors.size()) >= min_batch) {
    Matrix conf_x = tgt_x.select_rows(survivors);
    Matrix pseudo = tgt_probs.select_rows(survivors);

    // (d) student step toward the teacher's soft labels.
    ForwardTrace stu_trace;
    Matrix stu_probs = student.forward(conf_x, 0, Mode::train, &stu_trace);
    auto [stu_loss, stu_grad] = l1_distill_loss(stu_probs, pseudo);
    rec.loss_student = stu_loss;
    Gradients student_grads = student.backward(stu_trace, stu_grad);
    student.sgd_momentum_step(student_grads, cfg.lr, cfg.momentum);

    // (e) distillation term of the teacher loss, student outputs held at
    // their pre-update values. d|s - t|/dt = sign(t - s) per entry, spread
    // over the full batch with zeros on gated-out rows.
    if (cfg.lambda > 0.0) {
      const double inv = 1.0 / static_cast<double>(stu_probs.size());
      Matrix dteacher(tgt_probs.rows(), tgt_probs.cols());
      for (size_t s = 0; s < survivors.size(); ++s) {
        const int64_t row = survivors[s];
        for (int64_t c = 0; c < tgt_probs.cols(); ++c) {
          const double d = tgt_probs(row, c) - stu_probs(static_cast<int64_t>(s), c);
          const double sign = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
          dteacher(row, c) = cfg.lambda * sign * inv;
        }
      }
      teacher_grads.add(teacher.backward(tgt_trace, dteacher));
    }
  }

  // (f) teacher step on the combined loss.
  teacher.sgd_momentum_step(teacher_grads, cfg.lr, cfg.momentum);
  rec.loss_teacher_total = rec.loss_teacher_clf + cfg.lambda * rec.loss_student;
  return rec;
}

namespace {

struct Batch {
  Matrix x;
  std::vector<int32_t> y;
};

Batch sample_batch(Rng& rng, const Dataset& ds, int64_t batch_size) {
  std::vector<int64_t> idx(static_cast<size_t>(batch_size));
  for (auto& v : idx) v = rng.uniform_int(ds.size());
  Batch b;
  b.x = ds.features.select_rows(idx);
  b.y.reserve(idx.size());
  for (int64_t v : idx) b.y.push_back(ds.labels[static_cast<size_t>(v)]);
  return b;
}

// Teacher-alone step used by the ablation variants. Bitwise-identical source
// arithmetic to the must step: same forward, same loss, same update.
StepRecord baseline_step(Network& teacher, const Batch& src, int32_t src_entry,
                         const Matrix* tgt_x, int32_t tgt_entry,
                         const TrainerConfig& cfg) {
  StepRecord rec;
  ForwardTrace src_trace;
  Matrix src_probs = teacher.forward(src.x, src_entry, Mode::train, &src_trace);
  auto [clf_loss, clf_grad] = cross_entropy(src_probs, src.y);
  Gradients grads = teacher.backward(src_trace, clf_grad);
  rec.loss_teacher_clf = clf_loss;
  if (tgt_x) {
    // adaBN-style pass: refreshes the target entry's running statistics.
    Matrix tgt_probs = teacher.forward(*tgt_x, tgt_entry, Mode::train);
    std::vector<bool> mask = confidence_mask(tgt_probs, cfg.confidence_threshold);
    int64_t passing = 0;
    for (bool m : mask) passing += m ? 1 : 0;
    rec.pct_confident =
        static_cast<double>(passing) / static_cast<double>(tgt_x->rows());
  }
  teacher.sgd_momentum_step(grads, cfg.lr, cfg.momentum);
  rec.loss_teacher_total = rec.loss_teacher_clf;
  return rec;
}

double pooled_source_accuracy(const Network& teacher,
                              const std::vector<Dataset>& sources,
                              Variant variant) {
  int64_t correct = 0, total = 0;
  for (size_t k = 0; k < sources.size(); ++k) {
    const int32_t entry = variant == Variant::source_only ? 0
                                                          : static_cast<int32_t>(k);
    std::vector<int32_t> got =
        predict(teacher, sources[k].features, entry);
    for (size_t i = 0; i < got.size(); ++i) {
      correct += got[i] == sources[k].labels[i] ? 1 : 0;
    }
    total += sources[k].size();
  }
  return static_cast<double>(correct) / static_cast<double>(total);
}

}  // namespace

TrainedPair train(const TrainerConfig& cfg, const std::vector<Dataset>& sources,
                  const Dataset& target, const Dataset* target_eval,
                  int64_t snapshot_every, ProbSnapshots* snapshots) {
  cfg.validate();
  if (sources.empty()) {
    fail(ErrorCode::invalid_argument, "train: no source domains");
  }
  const int32_t num_sources = static_cast<int32_t>(sources.size());
  const int64_t dim = cfg.teacher_arch.front().in_dim;
  Rng teacher_init(Rng::derive_stream(cfg.seed, kSaltTeacherInit));
  Rng student_init(Rng::derive_stream(cfg.seed, kSaltStudentInit));
  Rng src_rng(Rng::derive_stream(cfg.seed, kSaltSourceBatch));
  Rng tgt_rng(Rng::derive_stream(cfg.seed, kSaltTargetBatch));

  const int32_t teacher_domains =
      cfg.variant == Variant::source_only ? 1 : num_sources + 1;
  TrainedPair pair{Network(cfg.teacher_arch, teacher_domains, teacher_init),
                   Network(cfg.student_arch, 1, student_init),
                   {}};
  Network& teacher = pair.teacher;
  Network& student = pair.student;
  const int64_t classes = teacher.num_classes();

  for (size_t k = 0; k < sources.size(); ++k) {
    const Dataset& ds = sources[k];
    if (ds.dim() != dim) {
      fail(ErrorCode::dimension_mismatch, "source '", ds.domain_name, "' has ",
           ds.dim(), " features, network expects ", dim);
    }
    if (!ds.fully_labeled()) {
      fail(ErrorCode::invalid_argument, "source '", ds.domain_name,
           "' must be fully labeled");
    }
    validate_dataset(ds, static_cast<int32_t>(classes));
  }
  if (target.dim() != dim) {
    fail(ErrorCode::dimension_mismatch, "target has ", target.dim(),
         " features, network expects ", dim);
  }
  if (!target.fully_unlabeled()) {
    fail(ErrorCode::invalid_argument,
         "training target must be unlabeled (all labels -1)");
  }
  if (target_eval) {
    if (target_eval->dim() != dim || !target_eval->fully_labeled()) {
      fail(ErrorCode::invalid_argument,
           "target-eval must be fully labeled with matching feature dim");
    }
    validate_dataset(*target_eval, static_cast<int32_t>(classes));
  }

  const bool sees_target = cfg.variant != Variant::source_only;
  for (int64_t t = 0; t < cfg.steps; ++t) {
    const int32_t k = static_cast<int32_t>(src_rng.uniform_int(num_sources));
    Batch src = sample_batch(src_rng, sources[k], cfg.batch_size);
    Matrix tgt_x;
    if (sees_target) {
      std::vector<int64_t> idx(static_cast<size_t>(cfg.batch_size));
      for (auto& v : idx) v = tgt_rng.uniform_int(target.size());
      tgt_x = target.features.select_rows(idx);
    }

    StepRecord rec;
    switch (cfg.variant) {
      case Variant::must:
        rec = train_step(teacher, student, src.x, src.y, k, tgt_x, cfg);
        break;
      case Variant::only_bn:
        rec = baseline_step(teacher, src, k, &tgt_x, target_domain_of(teacher),
                            cfg);
        break;
      case Variant::source_only:
        rec = baseline_step(teacher, src, 0, nullptr, 0, cfg);
        break;
    }
    rec.step = t;

    if (t % cfg.record_every == 0) {
      rec.teacher_src_acc = pooled_source_accuracy(teacher, sources, cfg.variant);
      if (target_eval) {
        rec.teacher_tgt_acc =
            accuracy(teacher, target_eval->features, target_eval->labels,
                     target_domain_of(teacher));
        if (cfg.variant == Variant::must) {
          rec.student_tgt_acc = accuracy(student, target_eval->features,
                                         target_eval->labels, 0);
        }
      }
      pair.log.push_back(rec);
    }
    if (snapshots && snapshot_every > 0 && t % snapshot_every == 0) {
      snapshots->steps.push_back(t);
      snapshots->probs.push_back(
          teacher.forward_eval(target.features, target_domain_of(teacher)));
    }
  }
  return pair;
}

}  // namespace must
