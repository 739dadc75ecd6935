#include "demlearn/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "demlearn/errors.hpp"

namespace demlearn {

namespace {

constexpr double kLogFloor = 1e-12;
constexpr double kInitStddev = 0.01;

using ConstMatMap = Eigen::Map<const RowMatrix>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;
using MatMap = Eigen::Map<RowMatrix>;
using VecMap = Eigen::Map<Eigen::VectorXd>;

void check_inputs(const ModelSpec& spec, const ParamVector& w, const Batch& batch) {
  if (w.size() != spec.param_count()) {
    throw DimensionError("parameter vector has length " + std::to_string(w.size()) +
                         ", model expects " + std::to_string(spec.param_count()));
  }
  if (batch.size() < 1) throw DimensionError("batch must hold at least one sample");
  if (batch.features.cols() != spec.input_dim) {
    throw DimensionError("batch feature width " + std::to_string(batch.features.cols()) +
                         " != input_dim " + std::to_string(spec.input_dim));
  }
  if (static_cast<Index>(batch.labels.size()) != batch.size()) {
    throw DimensionError("batch has " + std::to_string(batch.size()) + " rows but " +
                         std::to_string(batch.labels.size()) + " labels");
  }
  for (int y : batch.labels) {
    if (y < 0 || y >= spec.num_classes) {
      throw DimensionError("label " + std::to_string(y) + " outside [0, " +
                           std::to_string(spec.num_classes) + ")");
    }
  }
}

void check_prox(const ParamVector& w, std::span<const ProxAnchor> anchors, double mu) {
  if (!(mu >= 0.0)) throw ArgumentError("mu must be non-negative");
  for (const auto& a : anchors) {
    if (a.anchor.size() != w.size()) {
      throw DimensionError("anchor length " + std::to_string(a.anchor.size()) +
                           " != parameter length " + std::to_string(w.size()));
    }
    if (!(a.coeff > 0.0 && a.coeff <= 1.0)) {
      throw ArgumentError("anchor coefficient must lie in (0, 1]");
    }
  }
}

void softmax_rows(RowMatrix& z) {
  for (Index i = 0; i < z.rows(); ++i) {
    auto row = z.row(i);
    const double peak = row.maxCoeff();
    row = (row.array() - peak).exp();
    row /= row.sum();
  }
}

// Forward pass keeping the hidden activations for backprop.
struct Activations {
  RowMatrix hidden;  // empty for logistic
  RowMatrix probs;
};

Activations run_forward(const ModelSpec& spec, const ParamVector& w, const Batch& batch) {
  const ParamLayout lay = spec.layout();
  const double* p = w.data();
  Activations act;
  if (spec.kind == ModelKind::Logistic) {
    ConstMatMap W(p + lay.out_w, spec.num_classes, spec.input_dim);
    ConstVecMap b(p + lay.out_b, spec.num_classes);
    act.probs.noalias() = batch.features * W.transpose();
  } else {
    ConstMatMap W1(p + lay.hidden_w, spec.hidden_dim, spec.input_dim);
    ConstVecMap b1(p + lay.hidden_b, spec.hidden_dim);
    act.hidden.noalias() = batch.features * W1.transpose();
    act.hidden.rowwise() += b1.transpose();
    act.hidden = act.hidden.array().tanh();
    ConstMatMap W2(p + lay.out_w, spec.num_classes, spec.hidden_dim);
    act.probs.noalias() = act.hidden * W2.transpose();
  }
  act.probs.rowwise() += ConstVecMap(p + lay.out_b, spec.num_classes).transpose();
  softmax_rows(act.probs);
  return act;
}

}  // namespace

std::string to_string(ModelKind kind) {
  return kind == ModelKind::Logistic ? "logistic" : "mlp";
}

ModelKind parse_model_kind(const std::string& text) {
  if (text == "logistic") return ModelKind::Logistic;
  if (text == "mlp") return ModelKind::Mlp;
  throw ArgumentError("unknown model kind '" + text + "' (expected logistic or mlp)");
}

ModelSpec ModelSpec::logistic(int input_dim, int num_classes) {
  ModelSpec s{ModelKind::Logistic, input_dim, 0, num_classes};
  s.validate();
  return s;
}

ModelSpec ModelSpec::mlp(int input_dim, int hidden_dim, int num_classes) {
  ModelSpec s{ModelKind::Mlp, input_dim, hidden_dim, num_classes};
  s.validate();
  return s;
}

void ModelSpec::validate() const {
  if (input_dim < 1) throw ArgumentError("input_dim must be positive");
  if (num_classes < 2) throw ArgumentError("num_classes must be at least 2");
  if (kind == ModelKind::Logistic && hidden_dim != 0) {
    throw ArgumentError("logistic model takes hidden_dim = 0");
  }
  if (kind == ModelKind::Mlp && hidden_dim < 1) {
    throw ArgumentError("mlp model needs hidden_dim >= 1");
  }
}

ParamLayout ModelSpec::layout() const {
  ParamLayout lay;
  const Index in = input_dim, hid = hidden_dim, out = num_classes;
  if (kind == ModelKind::Logistic) {
    lay.out_w = 0;
    lay.out_b = out * in;
    lay.total = out * in + out;
  } else {
    lay.hidden_w = 0;
    lay.hidden_b = hid * in;
    lay.out_w = lay.hidden_b + hid;
    lay.out_b = lay.out_w + out * hid;
    lay.total = lay.out_b + out;
  }
  return lay;
}

ParamVector init_params(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  ParamVector w(spec.param_count());
  for (Index i = 0; i < w.size(); ++i) w[i] = normal(rng, 0.0, kInitStddev);
  return w;
}

RowMatrix forward(const ModelSpec& spec, const ParamVector& w, const Batch& batch) {
  check_inputs(spec, w, batch);
  return run_forward(spec, w, batch).probs;
}

double loss(const ModelSpec& spec, const ParamVector& w, const Batch& batch) {
  const RowMatrix probs = forward(spec, w, batch);
  double total = 0.0;
  for (Index i = 0; i < probs.rows(); ++i) {
    total -= std::log(std::max(probs(i, batch.labels[i]), kLogFloor));
  }
  return total / static_cast<double>(probs.rows());
}

ParamVector grad(const ModelSpec& spec, const ParamVector& w, const Batch& batch) {
  check_inputs(spec, w, batch);
  Activations act = run_forward(spec, w, batch);
  const ParamLayout lay = spec.layout();
  const double inv_b = 1.0 / static_cast<double>(batch.size());

  // dL/dz = (p - onehot(y)) / B
  RowMatrix& dz = act.probs;
  for (Index i = 0; i < dz.rows(); ++i) dz(i, batch.labels[i]) -= 1.0;
  dz *= inv_b;

  ParamVector g(lay.total);
  VecMap(g.data() + lay.out_b, spec.num_classes) = dz.colwise().sum().transpose();
  if (spec.kind == ModelKind::Logistic) {
    MatMap(g.data() + lay.out_w, spec.num_classes, spec.input_dim).noalias() =
        dz.transpose() * batch.features;
    return g;
  }

  MatMap(g.data() + lay.out_w, spec.num_classes, spec.hidden_dim).noalias() =
      dz.transpose() * act.hidden;
  ConstMatMap W2(w.data() + lay.out_w, spec.num_classes, spec.hidden_dim);
  RowMatrix da = dz * W2;
  da.array() *= 1.0 - act.hidden.array().square();
  VecMap(g.data() + lay.hidden_b, spec.hidden_dim) = da.colwise().sum().transpose();
  MatMap(g.data() + lay.hidden_w, spec.hidden_dim, spec.input_dim).noalias() =
      da.transpose() * batch.features;
  return g;
}

double prox_penalty(const ParamVector& w, std::span<const ProxAnchor> anchors) {
  double total = 0.0;
  for (const auto& a : anchors) total += a.coeff * (w - a.anchor).squaredNorm();
  return total;
}

double prox_objective(const ModelSpec& spec, const ParamVector& w, const Batch& batch,
                      std::span<const ProxAnchor> anchors, double mu) {
  check_prox(w, anchors, mu);
  const double data_loss = loss(spec, w, batch);
  if (mu == 0.0) return data_loss;
  return data_loss + 0.5 * mu * prox_penalty(w, anchors);
}

ParamVector prox_grad(const ModelSpec& spec, const ParamVector& w, const Batch& batch,
                      std::span<const ProxAnchor> anchors, double mu) {
  check_prox(w, anchors, mu);
  ParamVector g = grad(spec, w, batch);
  if (mu == 0.0) return g;
  for (const auto& a : anchors) g += (mu * a.coeff) * (w - a.anchor);
  return g;
}

ParamVector sgd_minimize(ParamVector w, std::size_t n_samples, const SolveOptions& opts,
                         Rng& rng, const MinibatchGradient& gradient) {
  if (opts.epochs < 1) throw ArgumentError("epochs must be >= 1");
  if (opts.batch_size < 1) throw ArgumentError("batch_size must be >= 1");
  if (!(opts.lr >= 0.0)) throw ArgumentError("learning rate must be non-negative");
  if (n_samples == 0) throw ArgumentError("client must hold at least one training sample");

  std::vector<int> order(n_samples);
  std::iota(order.begin(), order.end(), 0);
  const std::size_t bs = static_cast<std::size_t>(opts.batch_size);
  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    shuffle(std::span<int>(order), rng);
    for (std::size_t start = 0; start < n_samples; start += bs) {
      const std::size_t count = std::min(bs, n_samples - start);
      w -= opts.lr * gradient(w, std::span<const int>(order).subspan(start, count));
    }
  }
  if (!w.allFinite()) throw NumericalError("local solve produced non-finite parameters");
  return w;
}

ParamVector local_solve(const ModelSpec& spec, const ParamVector& w_init, const Batch& train,
                        std::span<const ProxAnchor> anchors, double mu,
                        const SolveOptions& opts, Rng& rng) {
  if (train.size() == 0) {
    throw ArgumentError("client must hold at least one training sample");
  }
  check_inputs(spec, w_init, train);
  check_prox(w_init, anchors, mu);

  RowMatrix scratch(std::min<Index>(opts.batch_size, train.size()), train.features.cols());
  std::vector<int> labels(static_cast<std::size_t>(scratch.rows()));
  auto gradient = [&](const ParamVector& w, std::span<const int> idx) {
    for (std::size_t r = 0; r < idx.size(); ++r) {
      scratch.row(static_cast<Index>(r)) = train.features.row(idx[r]);
      labels[r] = train.labels[idx[r]];
    }
    const Batch mb(scratch.data(), static_cast<Index>(idx.size()), scratch.cols(),
                   std::span<const int>(labels).first(idx.size()));
    return prox_grad(spec, w, mb, anchors, mu);
  };
  return sgd_minimize(w_init, static_cast<std::size_t>(train.size()), opts, rng, gradient);
}

ParamVector local_solve(const ModelSpec& spec, const ParamVector& w_init, const Batch& train,
                        std::span<const ProxAnchor> anchors, double mu,
                        const SolveOptions& opts, std::uint64_t seed) {
  Rng rng(seed);
  return local_solve(spec, w_init, train, anchors, mu, opts, rng);
}

std::vector<int> predict(const ModelSpec& spec, const ParamVector& w, const Batch& batch) {
  const RowMatrix probs = forward(spec, w, batch);
  std::vector<int> out(static_cast<std::size_t>(probs.rows()));
  for (Index i = 0; i < probs.rows(); ++i) {
    Index best = 0;
    for (Index c = 1; c < probs.cols(); ++c) {
      if (probs(i, c) > probs(i, best)) best = c;
    }
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

}  // namespace demlearn
