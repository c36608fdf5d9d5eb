#include "core/net.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace must {

// ----------------------------- layer specs -----------------------------

const char* layer_kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::affine: return "affine";
    case LayerKind::relu: return "relu";
    case LayerKind::batchnorm: return "bn";
    case LayerKind::sigmoid_head: return "sigmoid";
    case LayerKind::softmax_head: return "softmax";
  }
  return "unknown";
}

bool is_head(LayerKind kind) {
  return kind == LayerKind::sigmoid_head || kind == LayerKind::softmax_head;
}

void validate_arch(const std::vector<LayerSpec>& specs) {
  if (specs.empty()) {
    fail(ErrorCode::invalid_argument, "architecture has no layers");
  }
  for (size_t i = 0; i < specs.size(); ++i) {
    const LayerSpec& s = specs[i];
    if (s.in_dim <= 0 || s.out_dim <= 0) {
      fail(ErrorCode::invalid_argument, "layer ", i, " (",
           layer_kind_name(s.kind), ") has non-positive dims ", s.in_dim, "->",
           s.out_dim);
    }
    if (s.kind != LayerKind::affine && s.in_dim != s.out_dim) {
      fail(ErrorCode::invalid_argument, "layer ", i, " (",
           layer_kind_name(s.kind), ") must preserve dims, got ", s.in_dim,
           "->", s.out_dim);
    }
    if (i + 1 < specs.size() && specs[i + 1].in_dim != s.out_dim) {
      fail(ErrorCode::invalid_argument, "layer ", i, " outputs ", s.out_dim,
           " but layer ", i + 1, " expects ", specs[i + 1].in_dim);
    }
    if (is_head(s.kind) && i + 1 != specs.size()) {
      fail(ErrorCode::invalid_argument, "head layer at position ", i,
           " is not last");
    }
  }
  const LayerSpec& head = specs.back();
  if (!is_head(head.kind)) {
    fail(ErrorCode::invalid_argument, "architecture must end with a head");
  }
  if (head.kind == LayerKind::sigmoid_head && head.out_dim != 1) {
    fail(ErrorCode::invalid_argument, "sigmoid head must be single-unit, got ",
         head.out_dim);
  }
  if (head.kind == LayerKind::softmax_head && head.out_dim < 2) {
    fail(ErrorCode::invalid_argument, "softmax head needs >= 2 classes, got ",
         head.out_dim);
  }
  size_t heads = 0;
  for (const LayerSpec& s : specs) heads += is_head(s.kind) ? 1 : 0;
  if (heads != 1) {
    fail(ErrorCode::invalid_argument, "architecture must have exactly one head");
  }
}

namespace {

std::vector<std::string> split_tokens(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    if (ch == sep) {
      out.push_back(cur);
      cur.clear();
    } else if (!std::isspace(static_cast<unsigned char>(ch))) {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

std::vector<LayerSpec> parse_arch(const std::string& text, int64_t input_dim,
                                  int64_t num_classes) {
  if (input_dim <= 0 || num_classes < 2) {
    fail(ErrorCode::invalid_argument, "parse_arch: input_dim ", input_dim,
         ", num_classes ", num_classes);
  }
  std::string spec = text;
  if (spec == "auto" || spec.empty()) {
    spec = num_classes == 2 ? "bn,affine:16,relu,affine:out,sigmoid"
                            : "bn,affine:16,relu,affine:out,softmax";
  }
  const auto tokens = split_tokens(spec, ',');
  // "out" widths resolve against the head: 1 unit for a sigmoid head,
  // num_classes otherwise.
  const bool sigmoid_headed = !tokens.empty() && tokens.back() == "sigmoid";
  if (sigmoid_headed && num_classes != 2) {
    fail(ErrorCode::invalid_argument,
         "sigmoid head is binary but num_classes is ", num_classes);
  }
  std::vector<LayerSpec> out;
  int64_t dim = input_dim;
  for (const std::string& tok : tokens) {
    if (tok == "bn") {
      out.push_back({LayerKind::batchnorm, dim, dim});
    } else if (tok == "relu") {
      out.push_back({LayerKind::relu, dim, dim});
    } else if (tok == "sigmoid") {
      out.push_back({LayerKind::sigmoid_head, dim, dim});
    } else if (tok == "softmax") {
      out.push_back({LayerKind::softmax_head, dim, dim});
    } else if (tok.rfind("affine:", 0) == 0) {
      std::string width = tok.substr(7);
      int64_t w = 0;
      if (width == "out") {
        w = sigmoid_headed ? 1 : num_classes;
      } else {
        try {
          w = std::stoll(width);
        } catch (const std::exception&) {
          fail(ErrorCode::parse, "parse_arch: bad affine width '", width, "'");
        }
      }
      out.push_back({LayerKind::affine, dim, w});
      dim = w;
    } else {
      fail(ErrorCode::parse, "parse_arch: unknown layer token '", tok, "'");
    }
  }
  validate_arch(out);
  return out;
}

std::string arch_to_string(const std::vector<LayerSpec>& specs) {
  std::string out;
  for (size_t i = 0; i < specs.size(); ++i) {
    if (i) out += ',';
    out += layer_kind_name(specs[i].kind);
    if (specs[i].kind == LayerKind::affine) {
      out += ':' + std::to_string(specs[i].out_dim);
    }
  }
  return out;
}

// ----------------------------- construction -----------------------------

Network::Network(std::vector<LayerSpec> specs, int32_t num_domains, Rng& init)
    : num_domains_(num_domains) {
  validate_arch(specs);
  if (num_domains < 1) {
    fail(ErrorCode::invalid_argument, "num_domains must be >= 1, got ",
         num_domains);
  }
  layers_.reserve(specs.size());
  for (const LayerSpec& s : specs) {
    Layer layer;
    layer.spec = s;
    if (s.kind == LayerKind::affine) {
      layer.w = init.normal_matrix(s.in_dim, s.out_dim, 0.0,
                                   std::sqrt(2.0 / static_cast<double>(s.in_dim)));
      layer.b = Matrix(1, s.out_dim);
      layer.vel_w = Matrix(s.in_dim, s.out_dim);
      layer.vel_b = Matrix(1, s.out_dim);
    } else if (s.kind == LayerKind::batchnorm) {
      layer.bn.resize(static_cast<size_t>(num_domains));
      for (BnDomainState& d : layer.bn) {
        d.gamma = Matrix::filled(1, s.out_dim, 1.0);
        d.beta = Matrix(1, s.out_dim);
        d.run_mean = Matrix(1, s.out_dim);
        d.run_var = Matrix::filled(1, s.out_dim, 1.0);
        d.vel_gamma = Matrix(1, s.out_dim);
        d.vel_beta = Matrix(1, s.out_dim);
      }
    }
    layers_.push_back(std::move(layer));
  }
}

bool Network::has_batchnorm() const {
  for (const Layer& l : layers_) {
    if (l.spec.kind == LayerKind::batchnorm) return true;
  }
  return false;
}

// ----------------------------- forward -----------------------------

Matrix Network::run_forward(const Network& net, Network* mutable_net,
                            const Matrix& x, int32_t domain_id, Mode mode,
                            ForwardTrace* trace) {
  if (domain_id < 0 || domain_id >= net.num_domains_) {
    fail(ErrorCode::invalid_argument, "unknown domain_id ", domain_id,
         " (network has ", net.num_domains_, " domains)");
  }
  if (x.cols() != net.input_dim()) {
    fail(ErrorCode::dimension_mismatch, "forward: input is ", x.rows(), "x",
         x.cols(), ", network expects ", net.input_dim(), " features");
  }
  if (x.rows() < 1) {
    fail(ErrorCode::invalid_argument, "forward: empty batch");
  }
  if (trace) {
    trace->domain_id = domain_id;
    trace->mode = mode;
    trace->batch = x.rows();
    trace->layers.assign(net.layers_.size(), LayerTrace{});
  }

  const int64_t m = x.rows();
  Matrix cur = x;
  for (size_t li = 0; li < net.layers_.size(); ++li) {
    const Layer& layer = net.layers_[li];
    LayerTrace* lt = trace ? &trace->layers[li] : nullptr;
    if (lt) lt->input = cur;

    switch (layer.spec.kind) {
      case LayerKind::affine: {
        Matrix y = matmul(cur, layer.w);
        for (int64_t i = 0; i < y.rows(); ++i) {
          for (int64_t j = 0; j < y.cols(); ++j) y(i, j) += layer.b(0, j);
        }
        cur = std::move(y);
        break;
      }
      case LayerKind::relu: {
        Matrix y = cur;
        for (double& v : y.data()) v = v > 0.0 ? v : 0.0;
        cur = std::move(y);
        break;
      }
      case LayerKind::batchnorm: {
        const int64_t c_dim = layer.spec.out_dim;
        const BnDomainState& dget = layer.bn[static_cast<size_t>(domain_id)];
        Matrix mean(1, c_dim), inv_std(1, c_dim);
        if (mode == Mode::train) {
          if (m < 2) {
            fail(ErrorCode::invalid_argument,
                 "train-mode batchnorm needs batch >= 2, got ", m);
          }
          Matrix var(1, c_dim);
          for (int64_t c = 0; c < c_dim; ++c) {
            double s = 0.0;
            for (int64_t i = 0; i < m; ++i) s += cur(i, c);
            mean(0, c) = s / static_cast<double>(m);
            double sq = 0.0;
            for (int64_t i = 0; i < m; ++i) {
              double d = cur(i, c) - mean(0, c);
              sq += d * d;
            }
            var(0, c) = sq / static_cast<double>(m);  // biased, used for x-hat
            inv_std(0, c) = 1.0 / std::sqrt(var(0, c) + kBnEpsilon);
          }
          if (mutable_net) {
            // Running stats track the unbiased batch variance.
            BnDomainState& dset =
                mutable_net->layers_[li].bn[static_cast<size_t>(domain_id)];
            const double unbias =
                static_cast<double>(m) / static_cast<double>(m - 1);
            for (int64_t c = 0; c < c_dim; ++c) {
              dset.run_mean(0, c) = (1.0 - kBnMomentum) * dset.run_mean(0, c) +
                                    kBnMomentum * mean(0, c);
              dset.run_var(0, c) = (1.0 - kBnMomentum) * dset.run_var(0, c) +
                                   kBnMomentum * unbias * var(0, c);
            }
          }
        } else {
          for (int64_t c = 0; c < c_dim; ++c) {
            mean(0, c) = dget.run_mean(0, c);
            inv_std(0, c) = 1.0 / std::sqrt(dget.run_var(0, c) + kBnEpsilon);
          }
        }
        Matrix xhat(m, c_dim), y(m, c_dim);
        for (int64_t i = 0; i < m; ++i) {
          for (int64_t c = 0; c < c_dim; ++c) {
            xhat(i, c) = (cur(i, c) - mean(0, c)) * inv_std(0, c);
            y(i, c) = dget.gamma(0, c) * xhat(i, c) + dget.beta(0, c);
          }
        }
        if (lt) {
          lt->xhat = xhat;
          lt->inv_std = inv_std;
          lt->mean = mean;
        }
        cur = std::move(y);
        break;
      }
      case LayerKind::sigmoid_head: {
        Matrix y = cur;
        for (double& v : y.data()) v = 1.0 / (1.0 + std::exp(-v));
        if (lt) lt->output = y;
        cur = std::move(y);
        break;
      }
      case LayerKind::softmax_head: {
        Matrix y = cur;
        for (int64_t i = 0; i < y.rows(); ++i) {
          double mx = y(i, 0);
          for (int64_t c = 1; c < y.cols(); ++c) mx = std::max(mx, y(i, c));
          double sum = 0.0;
          for (int64_t c = 0; c < y.cols(); ++c) {
            y(i, c) = std::exp(y(i, c) - mx);
            sum += y(i, c);
          }
          for (int64_t c = 0; c < y.cols(); ++c) y(i, c) /= sum;
        }
        if (lt) lt->output = y;
        cur = std::move(y);
        break;
      }
    }
  }
  cur.ensure_finite("forward");
  return cur;
}

Matrix Network::forward(const Matrix& x, int32_t domain_id, Mode mode,
                        ForwardTrace* trace) {
  return run_forward(*this, mode == Mode::train ? this : nullptr, x, domain_id,
                     mode, trace);
}

Matrix Network::forward_eval(const Matrix& x, int32_t domain_id,
                             ForwardTrace* trace) const {
  return run_forward(*this, nullptr, x, domain_id, Mode::eval, trace);
}

// ----------------------------- backward -----------------------------

Gradients Network::run_backward(const ForwardTrace& trace,
                                const Matrix& upstream,
                                bool upstream_is_logit_grad) const {
  if (trace.layers.size() != layers_.size()) {
    fail(ErrorCode::state, "backward: trace has ", trace.layers.size(),
         " layers, network has ", layers_.size());
  }
  if (trace.domain_id < 0 || trace.domain_id >= num_domains_) {
    fail(ErrorCode::state, "backward: trace domain ", trace.domain_id,
         " invalid for this network");
  }
  if (upstream.rows() != trace.batch || upstream.cols() != output_dim()) {
    fail(ErrorCode::dimension_mismatch, "backward: upstream is ",
         upstream.rows(), "x", upstream.cols(), ", expected ", trace.batch,
         "x", output_dim());
  }

  Gradients grads;
  grads.layers.resize(layers_.size());
  const int64_t m = trace.batch;
  Matrix g = upstream;

  for (size_t ri = layers_.size(); ri-- > 0;) {
    const Layer& layer = layers_[ri];
    const LayerTrace& lt = trace.layers[ri];
    if (lt.input.rows() != m || lt.input.cols() != layer.spec.in_dim) {
      fail(ErrorCode::state, "backward: trace/network mismatch at layer ", ri);
    }
    switch (layer.spec.kind) {
      case LayerKind::sigmoid_head: {
        if (!upstream_is_logit_grad) {
          Matrix dz = g;
          for (int64_t i = 0; i < dz.rows(); ++i) {
            for (int64_t c = 0; c < dz.cols(); ++c) {
              const double y = lt.output(i, c);
              dz(i, c) = g(i, c) * y * (1.0 - y);
            }
          }
          g = std::move(dz);
        }
        break;
      }
      case LayerKind::softmax_head: {
        if (!upstream_is_logit_grad) {
          Matrix dz(m, layer.spec.out_dim);
          for (int64_t i = 0; i < m; ++i) {
            double s = 0.0;
            for (int64_t c = 0; c < g.cols(); ++c) s += g(i, c) * lt.output(i, c);
            for (int64_t c = 0; c < g.cols(); ++c) {
              dz(i, c) = lt.output(i, c) * (g(i, c) - s);
            }
          }
          g = std::move(dz);
        }
        break;
      }
      case LayerKind::relu: {
        Matrix dx = g;
        for (int64_t i = 0; i < m; ++i) {
          for (int64_t c = 0; c < dx.cols(); ++c) {
            if (!(lt.input(i, c) > 0.0)) dx(i, c) = 0.0;
          }
        }
        g = std::move(dx);
        break;
      }
      case LayerKind::affine: {
        grads.layers[ri].dw = matmul(transpose(lt.input), g);
        Matrix db(1, layer.spec.out_dim);
        for (int64_t c = 0; c < g.cols(); ++c) {
          double s = 0.0;
          for (int64_t i = 0; i < m; ++i) s += g(i, c);
          db(0, c) = s;
        }
        grads.layers[ri].db = std::move(db);
        g = matmul(g, transpose(layer.w));
        break;
      }
      case LayerKind::batchnorm: {
        const int64_t c_dim = layer.spec.out_dim;
        const BnDomainState& dom = layer.bn[static_cast<size_t>(trace.domain_id)];
        Matrix dgamma(1, c_dim), dbeta(1, c_dim);
        for (int64_t c = 0; c < c_dim; ++c) {
          double sg = 0.0, sb = 0.0;
          for (int64_t i = 0; i < m; ++i) {
            sg += g(i, c) * lt.xhat(i, c);
            sb += g(i, c);
          }
          dgamma(0, c) = sg;
          dbeta(0, c) = sb;
        }
        Matrix dx(m, c_dim);
        if (trace.mode == Mode::train) {
          for (int64_t c = 0; c < c_dim; ++c) {
            const double gam = dom.gamma(0, c);
            const double istd = lt.inv_std(0, c);
            double sum_dxhat = 0.0, dvar = 0.0, sum_xmu = 0.0;
            for (int64_t i = 0; i < m; ++i) {
              const double dxhat = g(i, c) * gam;
              const double xmu = lt.input(i, c) - lt.mean(0, c);
              sum_dxhat += dxhat;
              dvar += dxhat * xmu;
              sum_xmu += xmu;
            }
            dvar *= -0.5 * istd * istd * istd;
            const double dmean = -istd * sum_dxhat +
                                 dvar * (-2.0 / static_cast<double>(m)) * sum_xmu;
            for (int64_t i = 0; i < m; ++i) {
              const double dxhat = g(i, c) * gam;
              const double xmu = lt.input(i, c) - lt.mean(0, c);
              dx(i, c) = dxhat * istd +
                         dvar * 2.0 * xmu / static_cast<double>(m) +
                         dmean / static_cast<double>(m);
            }
          }
        } else {
          for (int64_t c = 0; c < c_dim; ++c) {
            const double scale = dom.gamma(0, c) * lt.inv_std(0, c);
            for (int64_t i = 0; i < m; ++i) dx(i, c) = g(i, c) * scale;
          }
        }
        grads.layers[ri].bn.push_back(
            {trace.domain_id, std::move(dgamma), std::move(dbeta)});
        g = std::move(dx);
        break;
      }
    }
  }
  grads.input_grad = std::move(g);
  return grads;
}

Gradients Network::backward(const ForwardTrace& trace,
                            const Matrix& dloss_dprobs) const {
  return run_backward(trace, dloss_dprobs, false);
}

Gradients Network::backward_from_logits(const ForwardTrace& trace,
                                        const Matrix& dloss_dlogits) const {
  return run_backward(trace, dloss_dlogits, true);
}

void Gradients::add(const Gradients& other) {
  if (layers.size() != other.layers.size()) {
    fail(ErrorCode::dimension_mismatch, "Gradients::add: ", layers.size(),
         " vs ", other.layers.size(), " layers");
  }
  for (size_t i = 0; i < layers.size(); ++i) {
    LayerGrads& dst = layers[i];
    const LayerGrads& src = other.layers[i];
    if (!src.dw.empty()) {
      if (dst.dw.empty()) {
        dst.dw = src.dw;
        dst.db = src.db;
      } else {
        if (dst.dw.rows() != src.dw.rows() || dst.dw.cols() != src.dw.cols()) {
          fail(ErrorCode::dimension_mismatch,
               "Gradients::add: affine shape mismatch at layer ", i);
        }
        for (int64_t k = 0; k < dst.dw.size(); ++k) {
          dst.dw.data()[k] += src.dw.data()[k];
        }
        for (int64_t k = 0; k < dst.db.size(); ++k) {
          dst.db.data()[k] += src.db.data()[k];
        }
      }
    }
    for (const BnGrad& bg : src.bn) {
      bool merged = false;
      for (BnGrad& mine : dst.bn) {
        if (mine.domain_id == bg.domain_id) {
          for (int64_t k = 0; k < mine.dgamma.size(); ++k) {
            mine.dgamma.data()[k] += bg.dgamma.data()[k];
          }
          for (int64_t k = 0; k < mine.dbeta.size(); ++k) {
            mine.dbeta.data()[k] += bg.dbeta.data()[k];
          }
          merged = true;
          break;
        }
      }
      if (!merged) dst.bn.push_back(bg);
    }
  }
}

// ----------------------------- optimizer -----------------------------

namespace {

void momentum_update(Matrix& param, Matrix& velocity, const Matrix& grad,
                     double lr, double momentum, const char* what) {
  if (param.rows() != grad.rows() || param.cols() != grad.cols()) {
    fail(ErrorCode::dimension_mismatch, "sgd step: ", what, " is ",
         param.rows(), "x", param.cols(), " but gradient is ", grad.rows(),
         "x", grad.cols());
  }
  for (int64_t k = 0; k < param.size(); ++k) {
    velocity.data()[k] = momentum * velocity.data()[k] + grad.data()[k];
    param.data()[k] -= lr * velocity.data()[k];
  }
}

}  // namespace

void Network::sgd_momentum_step(const Gradients& grads, double lr,
                                double momentum) {
  if (!(lr > 0.0)) {
    fail(ErrorCode::invalid_argument, "sgd step: lr must be > 0, got ", lr);
  }
  if (momentum < 0.0 || momentum >= 1.0) {
    fail(ErrorCode::invalid_argument, "sgd step: momentum must be in [0,1), got ",
         momentum);
  }
  if (grads.layers.size() != layers_.size()) {
    fail(ErrorCode::dimension_mismatch, "sgd step: gradient for ",
         grads.layers.size(), " layers, network has ", layers_.size());
  }
  for (size_t i = 0; i < layers_.size(); ++i) {
    Layer& layer = layers_[i];
    const LayerGrads& lg = grads.layers[i];
    if (!lg.dw.empty()) {
      momentum_update(layer.w, layer.vel_w, lg.dw, lr, momentum, "weights");
      momentum_update(layer.b, layer.vel_b, lg.db, lr, momentum, "bias");
    }
    for (const BnGrad& bg : lg.bn) {
      if (bg.domain_id < 0 ||
          bg.domain_id >= static_cast<int32_t>(layer.bn.size())) {
        fail(ErrorCode::invalid_argument, "sgd step: bn gradient for domain ",
             bg.domain_id, " at layer ", i);
      }
      BnDomainState& dom = layer.bn[static_cast<size_t>(bg.domain_id)];
      momentum_update(dom.gamma, dom.vel_gamma, bg.dgamma, lr, momentum, "gamma");
      momentum_update(dom.beta, dom.vel_beta, bg.dbeta, lr, momentum, "beta");
    }
  }
}

// ----------------------------- introspection -----------------------------

void Network::for_each_parameter(
    const std::function<void(const std::string&, const Matrix&, const Matrix&)>&
        fn) const {
  for (size_t i = 0; i < layers_.size(); ++i) {
    const Layer& layer = layers_[i];
    const std::string prefix = "L" + std::to_string(i);
    if (layer.spec.kind == LayerKind::affine) {
      fn(prefix + ".w", layer.w, layer.vel_w);
      fn(prefix + ".b", layer.b, layer.vel_b);
    } else if (layer.spec.kind == LayerKind::batchnorm) {
      for (size_t d = 0; d < layer.bn.size(); ++d) {
        const std::string bp = prefix + ".bn" + std::to_string(d);
        fn(bp + ".gamma", layer.bn[d].gamma, layer.bn[d].vel_gamma);
        fn(bp + ".beta", layer.bn[d].beta, layer.bn[d].vel_beta);
      }
    }
  }
}

bool params_bitwise_equal(const Network& a, const Network& b) {
  if (a.layers_.size() != b.layers_.size()) return false;
  for (size_t i = 0; i < a.layers_.size(); ++i) {
    const Layer& la = a.layers_[i];
    const Layer& lb = b.layers_[i];
    if (!(la.spec == lb.spec)) return false;
    if (la.w != lb.w || la.b != lb.b || la.vel_w != lb.vel_w ||
        la.vel_b != lb.vel_b) {
      return false;
    }
    if (la.bn.size() != lb.bn.size()) return false;
    for (size_t d = 0; d < la.bn.size(); ++d) {
      if (la.bn[d].gamma != lb.bn[d].gamma || la.bn[d].beta != lb.bn[d].beta ||
          la.bn[d].vel_gamma != lb.bn[d].vel_gamma ||
          la.bn[d].vel_beta != lb.bn[d].vel_beta) {
        return false;
      }
    }
  }
  return true;
}

bool state_bitwise_equal(const Network& a, const Network& b) {
  if (!params_bitwise_equal(a, b)) return false;
  for (size_t i = 0; i < a.layers_.size(); ++i) {
    for (size_t d = 0; d < a.layers_[i].bn.size(); ++d) {
      if (a.layers_[i].bn[d].run_mean != b.layers_[i].bn[d].run_mean ||
          a.layers_[i].bn[d].run_var != b.layers_[i].bn[d].run_var) {
        return false;
      }
    }
  }
  return true;
}

// ----------------------------- serialization -----------------------------

namespace {

constexpr char kMagic[8] = {'M', 'U', 'S', 'T', 'N', 'E', 'T', '1'};
constexpr uint32_t kVersion = 1;

template <class T>
void write_pod(std::ofstream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
void read_pod(std::ifstream& is, T& v, const std::string& path) {
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) fail(ErrorCode::parse, "checkpoint truncated: ", path);
}

void write_matrix(std::ofstream& os, const Matrix& m) {
  write_pod(os, static_cast<uint64_t>(m.rows()));
  write_pod(os, static_cast<uint64_t>(m.cols()));
  os.write(reinterpret_cast<const char*>(m.data().data()),
           static_cast<std::streamsize>(m.data().size() * sizeof(double)));
}

Matrix read_matrix(std::ifstream& is, const std::string& path) {
  uint64_t rows = 0, cols = 0;
  read_pod(is, rows, path);
  read_pod(is, cols, path);
  if (rows == 0 || cols == 0 || rows > (1u << 24) || cols > (1u << 24)) {
    fail(ErrorCode::parse, "checkpoint has bad matrix shape ", rows, "x", cols,
         ": ", path);
  }
  Matrix m(static_cast<int64_t>(rows), static_cast<int64_t>(cols));
  is.read(reinterpret_cast<char*>(m.data().data()),
          static_cast<std::streamsize>(m.data().size() * sizeof(double)));
  if (!is) fail(ErrorCode::parse, "checkpoint truncated: ", path);
  return m;
}

}  // namespace

void Network::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) fail(ErrorCode::io, "cannot open checkpoint for writing: ", path);
  os.write(kMagic, sizeof(kMagic));
  write_pod(os, kVersion);
  write_pod(os, num_domains_);
  write_pod(os, static_cast<uint64_t>(layers_.size()));
  for (const Layer& layer : layers_) {
    write_pod(os, static_cast<uint8_t>(layer.spec.kind));
    write_pod(os, layer.spec.in_dim);
    write_pod(os, layer.spec.out_dim);
    if (layer.spec.kind == LayerKind::affine) {
      write_matrix(os, layer.w);
      write_matrix(os, layer.b);
      write_matrix(os, layer.vel_w);
      write_matrix(os, layer.vel_b);
    } else if (layer.spec.kind == LayerKind::batchnorm) {
      for (const BnDomainState& d : layer.bn) {
        write_matrix(os, d.gamma);
        write_matrix(os, d.beta);
        write_matrix(os, d.run_mean);
        write_matrix(os, d.run_var);
        write_matrix(os, d.vel_gamma);
        write_matrix(os, d.vel_beta);
      }
    }
  }
  os.flush();
  if (!os) fail(ErrorCode::io, "write failed: ", path);
}

Network Network::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorCode::io, "cannot open checkpoint: ", path);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    fail(ErrorCode::parse, "not a network checkpoint: ", path);
  }
  uint32_t version = 0;
  read_pod(is, version, path);
  if (version != kVersion) {
    fail(ErrorCode::parse, "unsupported checkpoint version ", version, ": ",
         path);
  }
  Network net;
  read_pod(is, net.num_domains_, path);
  if (net.num_domains_ < 1) {
    fail(ErrorCode::parse, "checkpoint has bad domain count ", net.num_domains_,
         ": ", path);
  }
  uint64_t n_layers = 0;
  read_pod(is, n_layers, path);
  if (n_layers == 0 || n_layers > 1024) {
    fail(ErrorCode::parse, "checkpoint has bad layer count ", n_layers, ": ",
         path);
  }
  std::vector<LayerSpec> specs;
  for (uint64_t i = 0; i < n_layers; ++i) {
    Layer layer;
    uint8_t kind = 0;
    read_pod(is, kind, path);
    if (kind > static_cast<uint8_t>(LayerKind::softmax_head)) {
      fail(ErrorCode::parse, "checkpoint has bad layer kind ", int(kind), ": ",
           path);
    }
    layer.spec.kind = static_cast<LayerKind>(kind);
    read_pod(is, layer.spec.in_dim, path);
    read_pod(is, layer.spec.out_dim, path);
    if (layer.spec.kind == LayerKind::affine) {
      layer.w = read_matrix(is, path);
      layer.b = read_matrix(is, path);
      layer.vel_w = read_matrix(is, path);
      layer.vel_b = read_matrix(is, path);
    } else if (layer.spec.kind == LayerKind::batchnorm) {
      layer.bn.resize(static_cast<size_t>(net.num_domains_));
      for (BnDomainState& d : layer.bn) {
        d.gamma = read_matrix(is, path);
        d.beta = read_matrix(is, path);
        d.run_mean = read_matrix(is, path);
        d.run_var = read_matrix(is, path);
        d.vel_gamma = read_matrix(is, path);
        d.vel_beta = read_matrix(is, path);
      }
    }
    specs.push_back(layer.spec);
    net.layers_.push_back(std::move(layer));
  }
  validate_arch(specs);
  return net;
}

// ----------------------------- losses -----------------------------

namespace {

// Keeps ln() finite on saturated heads; never reached by healthy nets.
constexpr double kProbFloor = 1e-300;
constexpr double kProbCeil = 1.0 - 1e-16;

}  // namespace

LossGrad cross_entropy(const Matrix& probs, std::span<const int32_t> labels) {
  if (static_cast<int64_t>(labels.size()) != probs.rows()) {
    fail(ErrorCode::dimension_mismatch, "cross_entropy: ", labels.size(),
         " labels for ", probs.rows(), " rows");
  }
  const int64_t n = probs.rows();
  const double inv_n = 1.0 / static_cast<double>(n);
  Matrix grad(probs.rows(), probs.cols());
  double loss = 0.0;
  if (probs.cols() == 1) {
    for (int64_t i = 0; i < n; ++i) {
      const int32_t y = labels[i];
      if (y != 0 && y != 1) {
        fail(ErrorCode::invalid_argument, "cross_entropy: binary label ", y,
             " at row ", i, " not in {0,1}");
      }
      const double f =
          std::min(std::max(probs(i, 0), kProbFloor), kProbCeil);
      if (y == 1) {
        loss -= std::log(f);
        grad(i, 0) = -inv_n / f;
      } else {
        loss -= std::log(1.0 - f);
        grad(i, 0) = inv_n / (1.0 - f);
      }
    }
  } else {
    for (int64_t i = 0; i < n; ++i) {
      const int32_t y = labels[i];
      if (y < 0 || y >= probs.cols()) {
        fail(ErrorCode::invalid_argument, "cross_entropy: label ", y,
             " at row ", i, " not in [0,", probs.cols(), ")");
      }
      const double p = std::max(probs(i, y), kProbFloor);
      loss -= std::log(p);
      grad(i, y) = -inv_n / p;
    }
  }
  return {loss * inv_n, std::move(grad)};
}

LossGrad l1_distill_loss(const Matrix& student_probs,
                         const Matrix& teacher_probs) {
  if (student_probs.rows() != teacher_probs.rows() ||
      student_probs.cols() != teacher_probs.cols()) {
    fail(ErrorCode::dimension_mismatch, "l1_distill_loss: ",
         student_probs.rows(), "x", student_probs.cols(), " vs ",
         teacher_probs.rows(), "x", teacher_probs.cols());
  }
  const double inv = 1.0 / static_cast<double>(student_probs.size());
  Matrix grad(student_probs.rows(), student_probs.cols());
  double loss = 0.0;
  for (int64_t k = 0; k < student_probs.size(); ++k) {
    const double d = student_probs.data()[k] - teacher_probs.data()[k];
    loss += std::abs(d);
    grad.data()[k] = d > 0.0 ? inv : (d < 0.0 ? -inv : 0.0);
  }
  return {loss * inv, std::move(grad)};
}

LossGrad l2_distill_loss(const Matrix& a_probs, const Matrix& b_probs) {
  if (a_probs.rows() != b_probs.rows() || a_probs.cols() != b_probs.cols()) {
    fail(ErrorCode::dimension_mismatch, "l2_distill_loss: ", a_probs.rows(),
         "x", a_probs.cols(), " vs ", b_probs.rows(), "x", b_probs.cols());
  }
  const double inv = 1.0 / static_cast<double>(a_probs.size());
  Matrix grad(a_probs.rows(), a_probs.cols());
  double loss = 0.0;
  for (int64_t k = 0; k < a_probs.size(); ++k) {
    const double d = a_probs.data()[k] - b_probs.data()[k];
    loss += d * d;
    grad.data()[k] = 2.0 * d * inv;
  }
  return {loss * inv, std::move(grad)};
}

}  // namespace must
