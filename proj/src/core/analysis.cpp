#include "core/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>

#include "core/trainer.hpp"

namespace must {
namespace analysis {

// ----------------------------- sigmoid identity -----------------------------

SigmoidIdentityReport check_sigmoid_derivative_identity(
    std::span<const double> g_values) {
  SigmoidIdentityReport report;
  report.max_bound_violation = -std::numeric_limits<double>::infinity();
  for (double g : g_values) {
    const double sig = 1.0 / (1.0 + std::exp(-g));
    const double route1 = sig * (1.0 - sig);
    const double route2 = 1.0 / (2.0 + std::exp(-g) + std::exp(g));
    report.max_identity_error =
        std::max(report.max_identity_error, std::abs(route1 - route2));
    report.max_bound_violation =
        std::max(report.max_bound_violation, route1 - std::exp(-std::abs(g)));
  }
  report.pass = report.max_identity_error <= 1e-12 &&
                report.max_bound_violation <= 1e-12;
  return report;
}

// ----------------------------- gradient bound -----------------------------

namespace {

/// Flattens one gradient pass into scalars, affine weights/biases in layer
/// order followed by the used batch-norm entry's gamma/beta. `names` is
/// filled on the first call only.
void flatten_grads(const Network& net, const Gradients& grads,
                   std::vector<double>& out, std::vector<std::string>* names) {
  out.clear();
  const auto& layers = net.layers();
  for (size_t i = 0; i < layers.size(); ++i) {
    const LayerGrads& lg = grads.layers[i];
    const std::string prefix = "L" + std::to_string(i);
    auto push = [&](const Matrix& m, const std::string& base) {
      for (int64_t k = 0; k < m.size(); ++k) {
        out.push_back(m.data()[k]);
        if (names) names->push_back(base + "[" + std::to_string(k) + "]");
      }
    };
    if (layers[i].spec.kind == LayerKind::affine) {
      push(lg.dw, prefix + ".w");
      push(lg.db, prefix + ".b");
    } else if (layers[i].spec.kind == LayerKind::batchnorm) {
      for (const BnGrad& bg : lg.bn) {
        const std::string bp = prefix + ".bn" + std::to_string(bg.domain_id);
        push(bg.dgamma, bp + ".gamma");
        push(bg.dbeta, bp + ".beta");
      }
    }
  }
}

}  // namespace

BoundReport lemma_bound_report(const Network& teacher, const Network& student,
                               const Dataset& target, double lambda) {
  if (!teacher.has_sigmoid_head()) {
    fail(ErrorCode::invalid_argument,
         "lemma_bound_report needs a binary sigmoid-head teacher");
  }
  if (target.size() < 1) {
    fail(ErrorCode::invalid_argument, "lemma_bound_report: empty target");
  }
  if (target.dim() != teacher.input_dim() ||
      student.input_dim() != teacher.input_dim()) {
    fail(ErrorCode::dimension_mismatch,
         "lemma_bound_report: feature dims do not line up");
  }
  const int32_t t_entry = target_domain_of(teacher);
  const int32_t s_entry = target_domain_of(student);
  const int64_t n = target.size();

  ForwardTrace full_trace;
  Matrix f = teacher.forward_eval(target.features, t_entry, &full_trace);
  Matrix g = full_trace.layers.back().input;  // head pre-activation
  Matrix s = student.forward_eval(target.features, s_entry);
  if (s.cols() != 1) {
    fail(ErrorCode::invalid_argument,
         "lemma_bound_report needs a binary sigmoid-head student");
  }

  BoundReport report;
  report.num_samples = n;
  report.rho = std::numeric_limits<double>::infinity();
  for (int64_t i = 0; i < n; ++i) {
    const double resid = f(i, 0) - s(i, 0);
    report.mean_signed_residual += resid / static_cast<double>(n);
    report.mean_abs_residual += std::abs(resid) / static_cast<double>(n);
    report.rho = std::min(report.rho, std::abs(g(i, 0)));
  }

  // Measured gradient of lambda * mean_z l2(f, s) via the standard backward.
  Matrix dL_df(n, 1);
  for (int64_t i = 0; i < n; ++i) {
    dL_df(i, 0) = lambda * 2.0 * (f(i, 0) - s(i, 0)) / static_cast<double>(n);
  }
  Gradients measured = teacher.backward(full_trace, dL_df);
  std::vector<double> lhs_raw;
  flatten_grads(teacher, measured, lhs_raw, &report.param_names);
  report.lhs.reserve(lhs_raw.size());
  for (double v : lhs_raw) report.lhs.push_back(std::abs(v));

  // Per-sample dg/dtheta for the envelope constants and the per-sample check.
  report.A.assign(report.lhs.size(), 0.0);
  report.max_per_sample_violation = -std::numeric_limits<double>::infinity();
  std::vector<double> dg_flat;
  for (int64_t i = 0; i < n; ++i) {
    ForwardTrace row_trace;
    Matrix row = target.features.row(i);
    teacher.forward_eval(row, t_entry, &row_trace);
    Gradients dg = teacher.backward_from_logits(row_trace, Matrix{{1.0}});
    flatten_grads(teacher, dg, dg_flat, nullptr);
    const double gz = g(i, 0);
    const double sig = 1.0 / (1.0 + std::exp(-gz));
    const double sprime = sig * (1.0 - sig);
    const double envelope = std::exp(-std::abs(gz));
    for (size_t j = 0; j < dg_flat.size(); ++j) {
      const double abs_dg = std::abs(dg_flat[j]);
      report.A[j] = std::max(report.A[j], abs_dg);
      // |df/dtheta_j| = sigma'(g) |dg/dtheta_j| <= |dg/dtheta_j| e^-|g|
      report.max_per_sample_violation = std::max(
          report.max_per_sample_violation, sprime * abs_dg - abs_dg * envelope);
    }
  }

  const double scale = 2.0 * lambda * std::exp(-report.rho);
  report.rhs_abs.reserve(report.A.size());
  report.rhs_signed.reserve(report.A.size());
  report.slack.reserve(report.A.size());
  report.min_slack = std::numeric_limits<double>::infinity();
  for (size_t j = 0; j < report.A.size(); ++j) {
    report.rhs_abs.push_back(scale * report.mean_abs_residual * report.A[j]);
    report.rhs_signed.push_back(scale * report.mean_signed_residual *
                                report.A[j]);
    report.slack.push_back(report.rhs_abs[j] - report.lhs[j]);
    report.min_slack = std::min(report.min_slack, report.slack[j]);
  }
  report.pass =
      report.min_slack >= -1e-9 && report.max_per_sample_violation <= 1e-12;
  return report;
}

// ----------------------------- prediction consistency -----------------------------

ConsistencyReport consistency_from_series(const Matrix& series,
                                          std::span<const int64_t> steps,
                                          int64_t window) {
  const int64_t snapshots = series.rows();
  const int64_t samples = series.cols();
  if (static_cast<int64_t>(steps.size()) != snapshots) {
    fail(ErrorCode::invalid_argument, "consistency: ", steps.size(),
         " steps for ", snapshots, " snapshots");
  }
  if (window < 1) {
    fail(ErrorCode::invalid_argument, "consistency: window must be >= 1");
  }
  if (window > snapshots) {
    fail(ErrorCode::invalid_argument, "consistency: window ", window,
         " exceeds ", snapshots, " snapshots");
  }
  ConsistencyReport report;
  report.snapshot_steps.assign(steps.begin(), steps.end());
  report.window = window;
  const int64_t positions = snapshots - window + 1;
  const double inv_w = 1.0 / static_cast<double>(window);
  for (int64_t t = 0; t < positions; ++t) {
    std::vector<double> stds(static_cast<size_t>(samples));
    double mean_std = 0.0;
    for (int64_t j = 0; j < samples; ++j) {
      double mean = 0.0;
      for (int64_t w = 0; w < window; ++w) mean += series(t + w, j);
      mean *= inv_w;
      double var = 0.0;
      for (int64_t w = 0; w < window; ++w) {
        const double d = series(t + w, j) - mean;
        var += d * d;
      }
      stds[static_cast<size_t>(j)] = std::sqrt(var * inv_w);
      mean_std += stds[static_cast<size_t>(j)];
    }
    report.per_sample_std.push_back(std::move(stds));
    report.mean_std.push_back(mean_std / static_cast<double>(samples));
    report.window_end_steps.push_back(steps[static_cast<size_t>(t + window - 1)]);
  }
  for (double v : report.mean_std) {
    report.time_averaged_mean_std += v / static_cast<double>(positions);
  }
  return report;
}

ConsistencyReport consistency_track(const std::vector<Matrix>& snapshots,
                                    std::span<const int64_t> steps,
                                    int64_t window) {
  if (snapshots.empty()) {
    fail(ErrorCode::invalid_argument, "consistency: no snapshots");
  }
  const int64_t samples = snapshots.front().rows();
  const int64_t classes = snapshots.front().cols();
  Matrix series(static_cast<int64_t>(snapshots.size()), samples);
  for (size_t t = 0; t < snapshots.size(); ++t) {
    const Matrix& p = snapshots[t];
    if (p.rows() != samples || p.cols() != classes) {
      fail(ErrorCode::invalid_argument,
           "consistency: snapshot shapes differ (fixed sample set required)");
    }
    for (int64_t j = 0; j < samples; ++j) {
      double tracked;
      if (classes == 1) {
        tracked = 1.0 - p(j, 0);  // class-0 probability of a sigmoid head
      } else if (classes == 2) {
        tracked = p(j, 0);
      } else {
        tracked = p(j, 0);
        for (int64_t c = 1; c < classes; ++c) tracked = std::max(tracked, p(j, c));
      }
      series(static_cast<int64_t>(t), j) = tracked;
    }
  }
  return consistency_from_series(series, steps, window);
}

// ----------------------------- margin probe -----------------------------

std::vector<double> parse_eps_grid(const std::string& text) {
  std::vector<double> grid;
  if (text.find(':') != std::string::npos) {
    double start = 0.0, step = 0.0, stop = 0.0;
    char c1 = 0, c2 = 0;
    std::istringstream is(text);
    is >> start >> c1 >> step >> c2 >> stop;
    if (is.fail() || c1 != ':' || c2 != ':' || !(step > 0.0) || stop < start) {
      fail(ErrorCode::parse, "eps grid '", text, "' is not start:step:stop");
    }
    const int64_t count =
        static_cast<int64_t>(std::floor((stop - start) / step + 0.5)) + 1;
    for (int64_t i = 0; i < count; ++i) {
      grid.push_back(start + static_cast<double>(i) * step);
    }
  } else {
    std::istringstream is(text);
    std::string tok;
    while (std::getline(is, tok, ',')) {
      char* end = nullptr;
      double v = std::strtod(tok.c_str(), &end);
      if (end == tok.c_str() || *end != '\0') {
        fail(ErrorCode::parse, "eps grid: bad value '", tok, "'");
      }
      grid.push_back(v);
    }
  }
  return grid;
}

MarginCurve margin_probe(const Network& net, const Matrix& target_features,
                         int32_t domain_id, std::span<const double> eps_grid) {
  if (eps_grid.empty()) {
    fail(ErrorCode::invalid_argument, "margin_probe: empty eps grid");
  }
  for (size_t i = 0; i < eps_grid.size(); ++i) {
    if (eps_grid[i] < 0.0 || (i > 0 && eps_grid[i] <= eps_grid[i - 1])) {
      fail(ErrorCode::invalid_argument,
           "margin_probe: eps grid must be strictly increasing and >= 0");
    }
  }
  const int64_t n = target_features.rows();
  MarginCurve curve;
  curve.epsilons.assign(eps_grid.begin(), eps_grid.end());
  curve.num_samples = n;
  curve.flip_eps.assign(static_cast<size_t>(n),
                        std::numeric_limits<double>::infinity());

  std::vector<int32_t> base = predict(net, target_features, domain_id);

  // Gradient of the predicted-class probability w.r.t. the input; rows are
  // independent in eval mode, so one batched backward pass suffices.
  ForwardTrace trace;
  Matrix probs = net.forward_eval(target_features, domain_id, &trace);
  Matrix upstream(n, probs.cols());
  for (int64_t i = 0; i < n; ++i) {
    if (probs.cols() == 1) {
      upstream(i, 0) = base[static_cast<size_t>(i)] == 1 ? 1.0 : -1.0;
    } else {
      upstream(i, base[static_cast<size_t>(i)]) = 1.0;
    }
  }
  Matrix dirs = net.backward(trace, upstream).input_grad;
  std::vector<int64_t> alive;
  for (int64_t i = 0; i < n; ++i) {
    double norm = 0.0;
    for (int64_t c = 0; c < dirs.cols(); ++c) norm += dirs(i, c) * dirs(i, c);
    norm = std::sqrt(norm);
    if (norm == 0.0) {
      curve.zero_grad_samples++;
      continue;  // flat probability: recorded as never flipping
    }
    for (int64_t c = 0; c < dirs.cols(); ++c) dirs(i, c) /= norm;
    alive.push_back(i);
  }

  int64_t flipped = 0;
  for (double eps : eps_grid) {
    if (!alive.empty() && eps > 0.0) {
      Matrix probe(static_cast<int64_t>(alive.size()), target_features.cols());
      for (size_t a = 0; a < alive.size(); ++a) {
        const int64_t i = alive[a];
        for (int64_t c = 0; c < probe.cols(); ++c) {
          probe(static_cast<int64_t>(a), c) =
              target_features(i, c) - eps * dirs(i, c);
        }
      }
      std::vector<int32_t> moved = predict(net, probe, domain_id);
      std::vector<int64_t> still;
      for (size_t a = 0; a < alive.size(); ++a) {
        const int64_t i = alive[a];
        if (moved[a] != base[static_cast<size_t>(i)]) {
          curve.flip_eps[static_cast<size_t>(i)] = eps;
          ++flipped;
        } else {
          still.push_back(i);
        }
      }
      alive.swap(still);
    }
    curve.flip_counts.push_back(flipped);
  }
  curve.never_flipped = n - flipped;
  return curve;
}

}  // namespace analysis
}  // namespace must
