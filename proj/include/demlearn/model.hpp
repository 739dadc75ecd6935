#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "demlearn/random.hpp"

namespace demlearn {

using Index = Eigen::Index;
/// Flat vector of every model parameter. Length is fixed per ModelSpec.
using ParamVector = Eigen::VectorXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class ModelKind { Logistic, Mlp };

std::string to_string(ModelKind kind);
ModelKind parse_model_kind(const std::string& text);

/// Offsets into a ParamVector. For the MLP the layout is
///   [W1 hidden x input][b1 hidden][W2 classes x hidden][b2 classes]
/// with row-major weight blocks. The logistic model has no hidden block and
/// stores [W classes x input][b classes] in the output slots.
struct ParamLayout {
  Index hidden_w = 0;
  Index hidden_b = 0;
  Index out_w = 0;
  Index out_b = 0;
  Index total = 0;
};

struct ModelSpec {
  ModelKind kind = ModelKind::Logistic;
  int input_dim = 0;
  int hidden_dim = 0;  // 0 for logistic
  int num_classes = 0;

  static ModelSpec logistic(int input_dim, int num_classes);
  static ModelSpec mlp(int input_dim, int hidden_dim, int num_classes);

  void validate() const;
  [[nodiscard]] ParamLayout layout() const;
  [[nodiscard]] Index param_count() const { return layout().total; }

  bool operator==(const ModelSpec&) const = default;
};

/// Non-owning view of B samples. Rows of `features` are samples.
struct Batch {
  Eigen::Map<const RowMatrix> features;
  std::span<const int> labels;

  Batch(const RowMatrix& f, std::span<const int> l)
      : features(f.data(), f.rows(), f.cols()), labels(l) {}
  Batch(const double* data, Index rows, Index cols, std::span<const int> l)
      : features(data, rows, cols), labels(l) {}

  [[nodiscard]] Index size() const { return features.rows(); }
};

/// Proximal pull towards a group model with weight `coeff` = 1 / group size.
struct ProxAnchor {
  ParamVector anchor;
  double coeff = 1.0;
};

/// Gaussian(0, 0.01) initialization, one draw per parameter in layout order.
ParamVector init_params(const ModelSpec& spec, std::uint64_t seed);

RowMatrix forward(const ModelSpec& spec, const ParamVector& w, const Batch& batch);

/// Mean cross-entropy, log clamped at 1e-12.
double loss(const ModelSpec& spec, const ParamVector& w, const Batch& batch);

ParamVector grad(const ModelSpec& spec, const ParamVector& w, const Batch& batch);

/// Sum of coeff_k * ||w - anchor_k||^2 over anchors (no mu/2 factor).
double prox_penalty(const ParamVector& w, std::span<const ProxAnchor> anchors);

double prox_objective(const ModelSpec& spec, const ParamVector& w, const Batch& batch,
                      std::span<const ProxAnchor> anchors, double mu);

ParamVector prox_grad(const ModelSpec& spec, const ParamVector& w, const Batch& batch,
                      std::span<const ProxAnchor> anchors, double mu);

struct SolveOptions {
  int epochs = 2;
  int batch_size = 16;
  double lr = 0.01;
};

/// Gradient of some objective evaluated on the samples listed in `indices`.
using MinibatchGradient =
    std::function<ParamVector(const ParamVector& w, std::span<const int> indices)>;

/// Plain mini-batch SGD: `epochs` passes over n_samples, reshuffled with `rng`
/// at the start of every epoch, trailing partial batch included.
ParamVector sgd_minimize(ParamVector w, std::size_t n_samples, const SolveOptions& opts,
                         Rng& rng, const MinibatchGradient& gradient);

/// In-exact minimizer of prox_objective over `train`, starting from w_init.
ParamVector local_solve(const ModelSpec& spec, const ParamVector& w_init, const Batch& train,
                        std::span<const ProxAnchor> anchors, double mu,
                        const SolveOptions& opts, Rng& rng);

ParamVector local_solve(const ModelSpec& spec, const ParamVector& w_init, const Batch& train,
                        std::span<const ProxAnchor> anchors, double mu,
                        const SolveOptions& opts, std::uint64_t seed);

/// Argmax per row, ties resolved to the lowest class index.
std::vector<int> predict(const ModelSpec& spec, const ParamVector& w, const Batch& batch);

}  // namespace demlearn
