#pragma once

#include "compmap/bundle.hpp"
#include "compmap/types.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

namespace compmap {

enum class OptimizerKind { sgd, adam };

struct TrainConfig {
  std::size_t epochs = 200;
  double learning_rate = 1e-3;
  std::size_t batch_size = 256;
  double l2_penalty = 1.0;
  double temperature = 0.05;
  std::size_t shared_dim = 512;
  std::uint64_t seed = 0;
  OptimizerKind optimizer = OptimizerKind::adam;
  // Full-batch (logistic regression) solver limits.
  std::size_t max_iterations = 500;
  double gradient_tolerance = 1e-7;
  double init_std = 0.02;
  bool fit_bias = true;
  bool normalize_activation_side = true;

  static TrainConfig logreg_defaults();
  static TrainConfig contrastive_defaults();

  void validate() const;  // throws UsageError
  bool operator==(const TrainConfig&) const = default;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

// H_q(e) = w_q . e + b_q, one row per composite in `composites` order.
struct LinearCompositionModel {
  MatrixF weights;  // |composites| x |primitives|
  VectorF bias;     // zero when disabled
  std::vector<Index> composites;

  std::size_t input_dim() const { return static_cast<std::size_t>(weights.cols()); }
  double score(std::span<const float> e, std::size_t row) const;
  std::optional<std::size_t> row_of(Index composite) const;
};

// score(e, q) = unit(A e) . unit(B g_q) / temperature.
struct DualProjectionModel {
  MatrixF a;  // shared_dim x input_dim
  MatrixF b;  // shared_dim x embed_dim
  double temperature = 0.05;
  bool normalize_activation_side = true;

  std::size_t input_dim() const { return static_cast<std::size_t>(a.cols()); }
};

using CompositionModel = std::variant<LinearCompositionModel, DualProjectionModel>;

bool operator==(const LinearCompositionModel& x, const LinearCompositionModel& y);
bool operator==(const DualProjectionModel& x, const DualProjectionModel& y);

template <class Model>
struct TrainResult {
  Model model;
  double final_loss = 0.0;
  std::vector<double> loss_history;
};

// ---------------------------------------------------------------------------
// Objectives. Both take a flat parameter vector and a batch of inputs, and
// return mean loss plus penalty. Gradients with respect to parameters and,
// optionally, inputs are written when the pointers are non-null.

class LogisticLoss {
 public:
  LogisticLoss(std::size_t num_classes, std::size_t num_features, double l2_penalty, bool fit_bias);

  std::size_t num_params() const;
  std::size_t input_dim() const { return num_features_; }
  double evaluate(const VectorD& params, const MatrixD& x, std::span<const Index> targets, VectorD* grad,
                  MatrixD* grad_x = nullptr) const;

  // Parameter layout: W row-major (classes x features), then bias.
  LinearCompositionModel unpack(const VectorD& params, std::vector<Index> composites) const;

 private:
  std::size_t num_classes_;
  std::size_t num_features_;
  double l2_;
  bool fit_bias_;
};

class ContrastiveLoss {
 public:
  // `embeddings`: one row per class the targets index into.
  ContrastiveLoss(MatrixD embeddings, std::size_t input_dim, std::size_t shared_dim, double temperature,
                  double l2_penalty, bool normalize_activation_side);

  std::size_t num_params() const;
  std::size_t input_dim() const { return input_dim_; }
  double evaluate(const VectorD& params, const MatrixD& x, std::span<const Index> targets, VectorD* grad,
                  MatrixD* grad_x = nullptr) const;

  // Parameter layout: A row-major (shared x input), then B (shared x embed).
  DualProjectionModel unpack(const VectorD& params) const;

 private:
  MatrixD embeddings_;
  std::size_t input_dim_;
  std::size_t shared_dim_;
  double temperature_;
  double l2_;
  bool normalize_;
};

// A trainable input projection P (out x in) in front of an inner loss:
// inner(x P^T). Parameters are [P row-major | inner params].
template <class Inner>
class ProjectedLoss {
 public:
  ProjectedLoss(Inner inner, std::size_t source_dim)
      : inner_(std::move(inner)), source_dim_(source_dim) {}

  std::size_t projection_size() const { return inner_.input_dim() * source_dim_; }
  std::size_t num_params() const { return projection_size() + inner_.num_params(); }
  std::size_t input_dim() const { return source_dim_; }
  const Inner& inner() const { return inner_; }

  double evaluate(const VectorD& params, const MatrixD& x, std::span<const Index> targets, VectorD* grad,
                  MatrixD* grad_x = nullptr) const {
    const auto out = eidx(inner_.input_dim());
    const auto in = eidx(source_dim_);
    Eigen::Map<const MatrixD> p(params.data(), out, in);
    const VectorD inner_params = params.tail(eidx(inner_.num_params()));
    const MatrixD projected = x * p.transpose();
    VectorD inner_grad;
    MatrixD projected_grad;
    const double loss = inner_.evaluate(inner_params, projected, targets, grad ? &inner_grad : nullptr,
                                        (grad || grad_x) ? &projected_grad : nullptr);
    if (grad) {
      grad->resize(eidx(num_params()));
      Eigen::Map<MatrixD> gp(grad->data(), out, in);
      gp = projected_grad.transpose() * x;
      grad->tail(eidx(inner_.num_params())) = inner_grad;
    }
    if (grad_x) *grad_x = projected_grad * p;
    return loss;
  }

 private:
  Inner inner_;
  std::size_t source_dim_;
};

// Central finite-difference check. Returns max over coordinates of
// |analytic - numeric| / max(|analytic|, |numeric|, floor).
using ObjectiveFn = std::function<double(const VectorD& params, VectorD* grad)>;
double gradient_check(const ObjectiveFn& objective, const VectorD& point, double eps, double floor = 1e-6);

// ---------------------------------------------------------------------------
// Trainers

// Multinomial logistic regression, full batch. `classes` fixes the model's
// composite order; every label must appear in it.
TrainResult<LinearCompositionModel> train_logreg(const MatrixF& x, std::span<const Index> labels,
                                                 std::span<const Index> classes, const TrainConfig& cfg);
TrainResult<LinearCompositionModel> train_logreg(const MatrixF& x, std::span<const Index> labels,
                                                 const TrainConfig& cfg);

// Dual-projection softmax/contrastive trainer over the seen composites.
// `embeddings` has one row per vocabulary composite.
TrainResult<DualProjectionModel> train_contrastive(const MatrixF& x, std::span<const Index> labels,
                                                   const CompositeEmbeddingMatrix& embeddings,
                                                   std::span<const Index> seen, const TrainConfig& cfg);

// ---------------------------------------------------------------------------
// Scoring

// One score per candidate. `embeddings` is required for dual-projection
// models (vocabulary-ordered rows).
std::vector<double> score_candidates(const CompositionModel& model, std::span<const float> e_row,
                                     std::span<const Index> candidates,
                                     const CompositeEmbeddingMatrix* embeddings = nullptr);

// samples x candidates score matrix.
MatrixD score_matrix(const CompositionModel& model, const MatrixF& inputs, std::span<const Index> candidates,
                     const CompositeEmbeddingMatrix* embeddings = nullptr);

// w_q = (1/temperature) A^T unit(B g_q) for each candidate.
LinearCompositionModel reduce_to_linear(const DualProjectionModel& model, const CompositeEmbeddingMatrix& embeddings,
                                        std::span<const Index> composites);

// ---------------------------------------------------------------------------
// Projection baselines over raw image embeddings.

enum class ProjectionKind { none, random, learned };

std::string_view to_string(ProjectionKind k);
ProjectionKind parse_projection_kind(std::string_view s);

struct InputTransform {
  ProjectionKind kind = ProjectionKind::none;
  MatrixF matrix;  // output_dim x source_dim; empty for `none`
  std::size_t source_dim = 0;

  std::size_t output_dim() const;
  MatrixF apply(const MatrixF& x) const;
};

// `none`: identity. `random`: frozen Gaussian with entry variance
// 1/source_dim. `learned`: same initialization, meant to be trained jointly
// by the projected trainers below.
InputTransform make_projection_baseline(ProjectionKind kind, std::size_t source_dim, std::size_t target_dim,
                                        const TrainConfig& cfg);

struct ProjectedContrastiveResult {
  InputTransform transform;
  TrainResult<DualProjectionModel> trained;
};

// Trains the transform jointly with the dual-projection model; `transform`
// must be of kind `learned`.
ProjectedContrastiveResult train_projected_contrastive(const InputTransform& transform, const MatrixF& x,
                                                       std::span<const Index> labels,
                                                       const CompositeEmbeddingMatrix& embeddings,
                                                       std::span<const Index> seen, const TrainConfig& cfg);

// ---------------------------------------------------------------------------
// Model files: directory with model.json sidecar plus CMAP float32 matrices.

struct SavedModel {
  CompositionModel model;
  TrainConfig config;
  std::optional<InputTransform> transform;
};

void save_model(const SavedModel& m, const std::filesystem::path& dir);
SavedModel load_model(const std::filesystem::path& dir);

}  // namespace compmap
