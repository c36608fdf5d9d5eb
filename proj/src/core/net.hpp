#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "core/matrix.hpp"
#include "core/rng.hpp"

namespace must {

// ----------------------------- layer specs -----------------------------

enum class LayerKind : uint8_t {
  affine,
  relu,
  batchnorm,      // one statistics/affine entry per domain
  sigmoid_head,   // single-unit binary head
  softmax_head,
};

const char* layer_kind_name(LayerKind kind);

struct LayerSpec {
  LayerKind kind;
  int64_t in_dim;
  int64_t out_dim;

  bool operator==(const LayerSpec&) const = default;
};

bool is_head(LayerKind kind);

/// Dims must chain, every layer dim positive, exactly one head and it is
/// last. Sigmoid heads are single-unit (binary); softmax heads need >= 2
/// classes. Throws on violation.
void validate_arch(const std::vector<LayerSpec>& specs);

/// Compact architecture notation, e.g. "bn,affine:16,relu,affine:out,sigmoid".
/// Tokens: bn | relu | affine:<width|out> | sigmoid | softmax. "out" resolves
/// to 1 for sigmoid heads and num_classes for softmax heads; "auto" expands
/// to "bn,affine:16,relu,affine:out,<head>" with the head chosen by class
/// count (sigmoid when binary).
std::vector<LayerSpec> parse_arch(const std::string& text, int64_t input_dim,
                                  int64_t num_classes);
std::string arch_to_string(const std::vector<LayerSpec>& specs);

// ----------------------------- network state -----------------------------

enum class Mode { train, eval };

/// Per-domain batch-norm entry: affine parameters, running statistics and
/// the momentum buffers of the affine part.
struct BnDomainState {
  Matrix gamma, beta;          // 1 x C
  Matrix run_mean, run_var;    // 1 x C, run_var strictly positive
  Matrix vel_gamma, vel_beta;  // 1 x C
};

struct Layer {
  LayerSpec spec;
  Matrix w, b, vel_w, vel_b;      // affine layers
  std::vector<BnDomainState> bn;  // batchnorm layers, one entry per domain
};

/// Cached intermediates from one forward pass, enough to run backward
/// without touching network state again.
struct LayerTrace {
  Matrix input;             // every layer
  Matrix xhat, inv_std;     // batchnorm (inv_std = 1/sqrt(var + eps), 1 x C)
  Matrix mean;              // batchnorm train mode (batch mean, 1 x C)
  Matrix output;            // heads (cached probabilities)
};

struct ForwardTrace {
  int32_t domain_id = -1;
  Mode mode = Mode::eval;
  int64_t batch = 0;
  std::vector<LayerTrace> layers;
};

struct BnGrad {
  int32_t domain_id;
  Matrix dgamma, dbeta;
};

struct LayerGrads {
  Matrix dw, db;
  std::vector<BnGrad> bn;
};

/// Gradients for one loss term. Terms from several passes (e.g. a source
/// classification pass and a target distillation pass) combine with add();
/// batch-norm entries for distinct domains stay separate.
struct Gradients {
  std::vector<LayerGrads> layers;
  Matrix input_grad;  // dLoss/dx of the pass

  void add(const Gradients& other);
};

// ----------------------------- network -----------------------------

constexpr double kBnEpsilon = 1e-5;     // inside the sqrt
constexpr double kBnMomentum = 0.1;     // running-stat EMA: new = 0.9 old + 0.1 batch

class Network {
 public:
  /// He-style init: affine weights ~ N(0, sqrt(2/fan_in)) drawn row-major in
  /// layer order from `init`, biases 0, gamma 1, beta 0, running stats (0,1).
  Network(std::vector<LayerSpec> specs, int32_t num_domains, Rng& init);

  /// Train mode normalizes with batch statistics (batch >= 2 required) and
  /// updates the selected domain's running stats; eval mode uses the frozen
  /// running stats and mutates nothing.
  Matrix forward(const Matrix& x, int32_t domain_id, Mode mode,
                 ForwardTrace* trace = nullptr);
  Matrix forward_eval(const Matrix& x, int32_t domain_id,
                      ForwardTrace* trace = nullptr) const;

  /// Backprop of dLoss/dProbs through a trace produced by this network.
  Gradients backward(const ForwardTrace& trace,
                     const Matrix& dloss_dprobs) const;
  /// Same, but the upstream gradient is taken w.r.t. the head's
  /// pre-activation (the head backward is skipped). Used by the bound
  /// analysis, which needs d(logit)/d(theta).
  Gradients backward_from_logits(const ForwardTrace& trace,
                                 const Matrix& dloss_dlogits) const;

  /// v <- momentum * v + g; p <- p - lr * v, for every parameter covered by
  /// `grads`. Batch-norm entries of domains absent from `grads` are left
  /// untouched (their velocity does not decay).
  void sgd_momentum_step(const Gradients& grads, double lr, double momentum);

  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers_mut() { return layers_; }
  int32_t num_domains() const { return num_domains_; }
  int64_t input_dim() const { return layers_.front().spec.in_dim; }
  int64_t output_dim() const { return layers_.back().spec.out_dim; }
  bool has_sigmoid_head() const {
    return layers_.back().spec.kind == LayerKind::sigmoid_head;
  }
  int64_t num_classes() const {
    return has_sigmoid_head() ? 2 : output_dim();
  }
  bool has_batchnorm() const;

  /// Visits every trainable parameter (not running stats) with a stable
  /// name: "L<i>.w", "L<i>.b", "L<i>.bn<d>.gamma", "L<i>.bn<d>.beta".
  void for_each_parameter(
      const std::function<void(const std::string&, const Matrix& value,
                               const Matrix& velocity)>& fn) const;

  /// Versioned binary checkpoint; round-trips bit-exactly.
  void save(const std::string& path) const;
  static Network load(const std::string& path);

  friend bool params_bitwise_equal(const Network& a, const Network& b);
  friend bool state_bitwise_equal(const Network& a, const Network& b);

 private:
  Network() = default;

  static Matrix run_forward(const Network& net, Network* mutable_net,
                            const Matrix& x, int32_t domain_id, Mode mode,
                            ForwardTrace* trace);
  Gradients run_backward(const ForwardTrace& trace, const Matrix& upstream,
                         bool upstream_is_logit_grad) const;

  std::vector<Layer> layers_;
  int32_t num_domains_ = 1;
};

/// Trainable params and velocities equal bit-for-bit (running stats ignored).
bool params_bitwise_equal(const Network& a, const Network& b);
/// params_bitwise_equal plus running statistics.
bool state_bitwise_equal(const Network& a, const Network& b);

// ----------------------------- losses -----------------------------

struct LossGrad {
  double loss;
  Matrix grad;
};

/// Mean negative log-likelihood. Multiclass: probs rows normalized, labels in
/// [0, C). Single-column probs are a binary sigmoid head: labels in {0,1},
/// loss -mean[y ln f + (1-y) ln(1-f)]. Gradient is w.r.t. probs.
LossGrad cross_entropy(const Matrix& probs, std::span<const int32_t> labels);

/// Mean absolute difference over all entries; subgradient 0 at ties.
/// Gradient is w.r.t. the first argument.
LossGrad l1_distill_loss(const Matrix& student_probs,
                         const Matrix& teacher_probs);

/// Mean squared difference over all entries; gradient 2(a-b)/n w.r.t. a.
LossGrad l2_distill_loss(const Matrix& a_probs, const Matrix& b_probs);

}  // namespace must
