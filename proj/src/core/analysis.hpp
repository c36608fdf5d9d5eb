#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "core/data.hpp"
#include "core/net.hpp"

namespace must {
namespace analysis {

// ----------------------------- sigmoid identity -----------------------------

/// Confronts the two routes to the sigmoid derivative, sigma(g)(1-sigma(g))
/// versus 1/(2 + e^-g + e^g), and the envelope sigma'(g) <= e^-|g|.
struct SigmoidIdentityReport {
  double max_identity_error = 0.0;  // max |route1 - route2| over the grid
  double max_bound_violation = 0.0; // max (sigma'(g) - e^-|g|), <= 0 when tight
  bool pass = false;                // both within 1e-12
};

SigmoidIdentityReport check_sigmoid_derivative_identity(
    std::span<const double> g_values);

// ----------------------------- gradient bound -----------------------------

/// Per-scalar-parameter audit of the distillation term's gradient against
/// its envelope. For a binary sigmoid-head teacher f = sigma(g(z)):
///   lhs_j  = |d/dtheta_j  lambda * mean_z (f(z) - s(z))^2|   (measured)
///   A_j    = max_z |d g/d theta_j (z)|,  rho = min_z |g(z)|
///   rhs    = 2 lambda * mean_z|f - s| * A_j * e^-rho  (abs variant)
/// The signed variant replaces mean|f-s| by mean(f-s); only the abs variant
/// is an actual envelope, so slack = rhs_abs - lhs. The per-sample inequality
/// |df/dtheta_j(z)| <= |dg/dtheta_j(z)| * e^-|g(z)| is checked as well.
struct BoundReport {
  int64_t num_samples = 0;
  double rho = 0.0;
  double mean_abs_residual = 0.0;
  double mean_signed_residual = 0.0;
  std::vector<std::string> param_names;  // one entry per scalar parameter
  std::vector<double> A;
  std::vector<double> lhs;
  std::vector<double> rhs_signed;
  std::vector<double> rhs_abs;
  std::vector<double> slack;  // rhs_abs - lhs
  double min_slack = 0.0;
  double max_per_sample_violation = 0.0;
  bool pass = false;  // min_slack >= -1e-9 and per-sample violation <= 1e-12
};

/// Eval-mode audit on the given target sample; the teacher must be a binary
/// sigmoid-head network. Uses the L2 distillation loss (the bound's loss)
/// independently of whatever the trainer optimizes.
BoundReport lemma_bound_report(const Network& teacher, const Network& student,
                               const Dataset& target, double lambda);

// ----------------------------- prediction consistency -----------------------------

/// Sliding-window standard deviation of per-sample teacher predictions over
/// training. The tracked scalar is the class-0 probability for binary heads
/// and the max-class probability otherwise; std is the population form.
struct ConsistencyReport {
  std::vector<int64_t> snapshot_steps;
  int64_t window = 0;
  std::vector<int64_t> window_end_steps;          // one per window position
  std::vector<std::vector<double>> per_sample_std; // [position][sample]
  std::vector<double> mean_std;                    // mean over samples
  double time_averaged_mean_std = 0.0;
};

ConsistencyReport consistency_track(const std::vector<Matrix>& snapshots,
                                    std::span<const int64_t> steps,
                                    int64_t window);

/// Same computation over an already reduced series (rows = snapshots,
/// columns = samples), as stored in snapshot CSV files.
ConsistencyReport consistency_from_series(const Matrix& series,
                                          std::span<const int64_t> steps,
                                          int64_t window);

// ----------------------------- margin probe -----------------------------

/// Flip counting along the adversarial direction: each sample moves against
/// the unit-normalized input gradient of its predicted-class probability,
/// x' = x - eps * ghat, and the smallest grid eps that changes the argmax is
/// its flip radius. Counts are cumulative in eps, hence non-decreasing.
struct MarginCurve {
  std::vector<double> epsilons;
  std::vector<int64_t> flip_counts;   // cumulative
  std::vector<double> flip_eps;       // per sample; +inf = never flipped
  int64_t num_samples = 0;
  int64_t never_flipped = 0;
  int64_t zero_grad_samples = 0;      // zero input gradient, counted as never
};

MarginCurve margin_probe(const Network& net, const Matrix& target_features,
                         int32_t domain_id, std::span<const double> eps_grid);

/// "start:step:stop" (inclusive) or a comma list; strictly increasing, >= 0.
std::vector<double> parse_eps_grid(const std::string& text);

}  // namespace analysis
}  // namespace must
