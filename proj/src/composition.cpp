#include "compmap/composition.hpp"

#include "compmap/errors.hpp"
#include "compmap/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

namespace compmap {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kNormFloor = 1e-12;

// Row-wise softmax cross-entropy. Returns mean loss; overwrites `logits`
// with (softmax - onehot) / rows.
double softmax_xent_inplace(MatrixD& logits, std::span<const Index> targets) {
  const auto m = logits.rows();
  double total = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    auto row = logits.row(i);
    const double mx = row.maxCoeff();
    row.array() -= mx;
    row = row.array().exp().matrix();
    const double z = row.sum();
    const auto t = eidx(targets[static_cast<std::size_t>(i)]);
    total += std::log(z) - std::log(row(t));
    row /= z;
    row(t) -= 1.0;
  }
  if (m > 0) logits /= static_cast<double>(m);
  return m > 0 ? total / static_cast<double>(m) : 0.0;
}

// In-place L2 normalization of each row; returns the (floored) norms.
VectorD normalize_rows(MatrixD& m) {
  VectorD norms(m.rows());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    norms(i) = std::max(m.row(i).norm(), kNormFloor);
    m.row(i) /= norms(i);
  }
  return norms;
}

// Backward pass of row normalization: d(u/|u|) given d(unit).
MatrixD normalize_rows_backward(const MatrixD& unit, const VectorD& norms, const MatrixD& d_unit) {
  MatrixD out(unit.rows(), unit.cols());
  for (Eigen::Index i = 0; i < unit.rows(); ++i) {
    const double proj = unit.row(i).dot(d_unit.row(i));
    out.row(i) = (d_unit.row(i) - proj * unit.row(i)) / norms(i);
  }
  return out;
}

VectorD gaussian_vector(std::size_t n, double std, Rng& rng) {
  VectorD v(eidx(n));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = std * rng.normal();
  return v;
}

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw NumericError(std::string(what) + ": non-finite loss during training");
}

struct LbfgsResult {
  VectorD x;
  double value = 0.0;
  std::vector<double> history;
};

// Full-batch L-BFGS with Armijo backtracking.
LbfgsResult minimize_lbfgs(const ObjectiveFn& f, VectorD x, std::size_t max_iter, double grad_tol,
                           std::size_t memory = 10) {
  VectorD g;
  double fx = f(x, &g);
  require_finite(fx, "logistic regression");
  LbfgsResult res;
  res.history.push_back(fx);

  std::vector<VectorD> s_hist, y_hist;
  std::vector<double> rho_hist;
  for (std::size_t iter = 0; iter < max_iter; ++iter) {
    if (g.lpNorm<Eigen::Infinity>() < grad_tol) break;

    // Two-loop recursion.
    VectorD q = g;
    std::vector<double> alpha(s_hist.size());
    for (std::size_t k = s_hist.size(); k-- > 0;) {
      alpha[k] = rho_hist[k] * s_hist[k].dot(q);
      q -= alpha[k] * y_hist[k];
    }
    if (!s_hist.empty()) q *= s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
    for (std::size_t k = 0; k < s_hist.size(); ++k) {
      const double beta = rho_hist[k] * y_hist[k].dot(q);
      q += (alpha[k] - beta) * s_hist[k];
    }
    VectorD dir = -q;
    double slope = g.dot(dir);
    if (slope >= 0.0) {
      dir = -g;
      slope = -g.squaredNorm();
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
    }

    double step = s_hist.empty() ? std::min(1.0, 1.0 / std::max(g.lpNorm<Eigen::Infinity>(), 1e-12)) : 1.0;
    VectorD x_new, g_new;
    double f_new = 0.0;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      x_new = x + step * dir;
      f_new = f(x_new, &g_new);
      if (std::isfinite(f_new) && f_new <= fx + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;

    VectorD s = x_new - x;
    VectorD y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-12) {
      if (s_hist.size() == memory) {
        s_hist.erase(s_hist.begin());
        y_hist.erase(y_hist.begin());
        rho_hist.erase(rho_hist.begin());
      }
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(y));
      rho_hist.push_back(1.0 / sy);
    }
    const double prev = fx;
    x = std::move(x_new);
    g = std::move(g_new);
    fx = f_new;
    res.history.push_back(fx);
    if (prev - fx <= 1e-15 * std::max(1.0, std::abs(fx))) break;
  }
  res.x = std::move(x);
  res.value = fx;
  return res;
}

class Adam {
 public:
  Adam(std::size_t n, double lr) : m_(VectorD::Zero(eidx(n))), v_(VectorD::Zero(eidx(n))), lr_(lr) {}

  void step(VectorD& params, const VectorD& grad) {
    ++t_;
    m_ = kBeta1 * m_ + (1.0 - kBeta1) * grad;
    v_ = kBeta2 * v_ + (1.0 - kBeta2) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
    params.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + kEps);
  }

 private:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;
  VectorD m_, v_;
  double lr_;
  std::size_t t_ = 0;
};

// Minibatch first-order training loop shared by the contrastive trainers.
template <class Loss>
std::vector<double> minimize_minibatch(const Loss& loss, const MatrixD& x, std::span<const Index> targets,
                                       VectorD& params, const TrainConfig& cfg, Rng& rng) {
  const auto n = static_cast<std::size_t>(x.rows());
  std::vector<Index> order(n);
  std::iota(order.begin(), order.end(), Index{0});
  Adam adam(static_cast<std::size_t>(params.size()), cfg.learning_rate);
  std::vector<double> history;
  history.reserve(cfg.epochs);

  VectorD grad;
  MatrixD xb;
  std::vector<Index> tb;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const auto stop = std::min(n, start + cfg.batch_size);
      const auto m = stop - start;
      xb.resize(eidx(m), x.cols());
      tb.resize(m);
      for (std::size_t i = 0; i < m; ++i) {
        xb.row(eidx(i)) = x.row(eidx(order[start + i]));
        tb[i] = targets[order[start + i]];
      }
      const double value = loss.evaluate(params, xb, tb, &grad);
      require_finite(value, "contrastive training");
      epoch_loss += value * static_cast<double>(m);
      if (cfg.optimizer == OptimizerKind::adam) {
        adam.step(params, grad);
      } else {
        params -= cfg.learning_rate * grad;
      }
    }
    history.push_back(epoch_loss / static_cast<double>(std::max<std::size_t>(n, 1)));
  }
  return history;
}

struct SeenTargets {
  MatrixD embeddings;            // seen rows, seen order
  std::vector<Index> positions;  // per-sample position in seen order
};

SeenTargets seen_targets(std::span<const Index> labels, const CompositeEmbeddingMatrix& embeddings,
                         std::span<const Index> seen) {
  if (seen.size() < 2) {
    throw std::invalid_argument("train_contrastive: need at least two seen composites (loss is degenerate)");
  }
  std::map<Index, Index> pos;
  SeenTargets out;
  out.embeddings.resize(eidx(seen.size()), embeddings.data.cols());
  for (std::size_t i = 0; i < seen.size(); ++i) {
    if (seen[i] >= static_cast<std::size_t>(embeddings.data.rows())) {
      throw DataError("train_contrastive: embedding row missing for seen composite " + std::to_string(seen[i]));
    }
    if (!pos.emplace(seen[i], i).second) throw std::invalid_argument("train_contrastive: duplicate seen composite");
    out.embeddings.row(eidx(i)) = embeddings.data.row(eidx(seen[i])).cast<double>();
  }
  out.positions.reserve(labels.size());
  for (Index l : labels) {
    auto it = pos.find(l);
    if (it == pos.end()) {
      throw std::invalid_argument("train_contrastive: label " + std::to_string(l) + " is not a seen composite");
    }
    out.positions.push_back(it->second);
  }
  return out;
}

const char* optimizer_name(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "sgd"; }

json matrix_entry(const std::string& file, const MatrixF& m) {
  return json{{"file", file}, {"rows", m.rows()}, {"cols", m.cols()}};
}

MatrixF load_matrix_entry(const fs::path& dir, const json& j) {
  const auto m = read_matrix_f32(dir / j.at("file").get<std::string>());
  if (m.rows() != j.at("rows").get<Eigen::Index>() || m.cols() != j.at("cols").get<Eigen::Index>()) {
    throw DataError("model: dimension mismatch for " + j.at("file").get<std::string>());
  }
  return m;
}

}  // namespace

// ---------------------------------------------------------------------------

TrainConfig TrainConfig::logreg_defaults() { return TrainConfig{}; }

TrainConfig TrainConfig::contrastive_defaults() {
  TrainConfig c;
  c.l2_penalty = 0.0;
  return c;
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw UsageError("train config: " + m); };
  if (epochs == 0) fail("epochs must be positive");
  if (!(learning_rate > 0.0)) fail("learning_rate must be positive");
  if (batch_size == 0) fail("batch_size must be positive");
  if (!(l2_penalty >= 0.0)) fail("l2_penalty must be nonnegative");
  if (!(temperature > 0.0)) fail("temperature must be positive");
  if (shared_dim == 0) fail("shared_dim must be positive");
  if (max_iterations == 0) fail("max_iterations must be positive");
  if (!(gradient_tolerance > 0.0)) fail("gradient_tolerance must be positive");
  if (!(init_std > 0.0)) fail("init_std must be positive");
}

void to_json(json& j, const TrainConfig& c) {
  j = json{{"epochs", c.epochs},
           {"learning_rate", c.learning_rate},
           {"batch_size", c.batch_size},
           {"l2_penalty", c.l2_penalty},
           {"temperature", c.temperature},
           {"shared_dim", c.shared_dim},
           {"seed", c.seed},
           {"optimizer", optimizer_name(c.optimizer)},
           {"max_iterations", c.max_iterations},
           {"gradient_tolerance", c.gradient_tolerance},
           {"init_std", c.init_std},
           {"fit_bias", c.fit_bias},
           {"normalize_activation_side", c.normalize_activation_side}};
}

void from_json(const json& j, TrainConfig& c) {
  static const std::vector<std::string> known{"epochs",     "learning_rate",  "batch_size",         "l2_penalty",
                                              "temperature", "shared_dim",     "seed",               "optimizer",
                                              "max_iterations", "gradient_tolerance", "init_std", "fit_bias",
                                              "normalize_activation_side"};
  for (const auto& [key, _] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw UsageError("train config: unknown field '" + key + "'");
    }
  }
  try {
    c.epochs = j.value("epochs", c.epochs);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.l2_penalty = j.value("l2_penalty", c.l2_penalty);
    c.temperature = j.value("temperature", c.temperature);
    c.shared_dim = j.value("shared_dim", c.shared_dim);
    c.seed = j.value("seed", c.seed);
    c.max_iterations = j.value("max_iterations", c.max_iterations);
    c.gradient_tolerance = j.value("gradient_tolerance", c.gradient_tolerance);
    c.init_std = j.value("init_std", c.init_std);
    c.fit_bias = j.value("fit_bias", c.fit_bias);
    c.normalize_activation_side = j.value("normalize_activation_side", c.normalize_activation_side);
    if (j.contains("optimizer")) {
      const auto name = j.at("optimizer").get<std::string>();
      if (name == "adam") {
        c.optimizer = OptimizerKind::adam;
      } else if (name == "sgd") {
        c.optimizer = OptimizerKind::sgd;
      } else {
        throw UsageError("train config: unknown optimizer '" + name + "'");
      }
    }
  } catch (const json::exception& e) {
    throw UsageError(std::string("train config: ") + e.what());
  }
}

// ---------------------------------------------------------------------------

double LinearCompositionModel::score(std::span<const float> e, std::size_t row) const {
  if (e.size() != input_dim()) throw std::invalid_argument("score: dimension mismatch");
  double s = bias.size() ? static_cast<double>(bias(eidx(row))) : 0.0;
  for (std::size_t j = 0; j < e.size(); ++j) {
    s += static_cast<double>(weights(eidx(row), eidx(j))) * static_cast<double>(e[j]);
  }
  return s;
}

std::optional<std::size_t> LinearCompositionModel::row_of(Index composite) const {
  auto it = std::find(composites.begin(), composites.end(), composite);
  if (it == composites.end()) return std::nullopt;
  return static_cast<std::size_t>(it - composites.begin());
}

bool operator==(const LinearCompositionModel& x, const LinearCompositionModel& y) {
  return same_matrix(x.weights, y.weights) && same_matrix(x.bias, y.bias) && x.composites == y.composites;
}

bool operator==(const DualProjectionModel& x, const DualProjectionModel& y) {
  return same_matrix(x.a, y.a) && same_matrix(x.b, y.b) && x.temperature == y.temperature &&
         x.normalize_activation_side == y.normalize_activation_side;
}

// ---------------------------------------------------------------------------

LogisticLoss::LogisticLoss(std::size_t num_classes, std::size_t num_features, double l2_penalty, bool fit_bias)
    : num_classes_(num_classes), num_features_(num_features), l2_(l2_penalty), fit_bias_(fit_bias) {}

std::size_t LogisticLoss::num_params() const {
  return num_classes_ * num_features_ + (fit_bias_ ? num_classes_ : 0);
}

double LogisticLoss::evaluate(const VectorD& params, const MatrixD& x, std::span<const Index> targets, VectorD* grad,
                              MatrixD* grad_x) const {
  const auto c = eidx(num_classes_);
  const auto f = eidx(num_features_);
  Eigen::Map<const MatrixD> w(params.data(), c, f);
  MatrixD logits = x * w.transpose();
  if (fit_bias_) {
    const auto b = params.segment(c * f, c).transpose();
    logits.rowwise() += b;
  }
  const double data_loss = softmax_xent_inplace(logits, targets);  // logits now holds dZ
  const double loss = data_loss + 0.5 * l2_ * w.squaredNorm();
  if (grad) {
    grad->resize(eidx(num_params()));
    Eigen::Map<MatrixD> gw(grad->data(), c, f);
    gw = logits.transpose() * x + l2_ * w;
    if (fit_bias_) grad->segment(c * f, c) = logits.colwise().sum().transpose();
  }
  if (grad_x) *grad_x = logits * w;
  return loss;
}

LinearCompositionModel LogisticLoss::unpack(const VectorD& params, std::vector<Index> composites) const {
  const auto c = eidx(num_classes_);
  const auto f = eidx(num_features_);
  LinearCompositionModel m;
  m.weights = Eigen::Map<const MatrixD>(params.data(), c, f).cast<float>();
  m.bias = fit_bias_ ? VectorF(params.segment(c * f, c).cast<float>()) : VectorF(VectorF::Zero(c));
  m.composites = std::move(composites);
  return m;
}

ContrastiveLoss::ContrastiveLoss(MatrixD embeddings, std::size_t input_dim, std::size_t shared_dim,
                                 double temperature, double l2_penalty, bool normalize_activation_side)
    : embeddings_(std::move(embeddings)),
      input_dim_(input_dim),
      shared_dim_(shared_dim),
      temperature_(temperature),
      l2_(l2_penalty),
      normalize_(normalize_activation_side) {}

std::size_t ContrastiveLoss::num_params() const {
  return shared_dim_ * input_dim_ + shared_dim_ * static_cast<std::size_t>(embeddings_.cols());
}

double ContrastiveLoss::evaluate(const VectorD& params, const MatrixD& x, std::span<const Index> targets,
                                 VectorD* grad, MatrixD* grad_x) const {
  const auto d = eidx(shared_dim_);
  const auto in = eidx(input_dim_);
  const auto emb = embeddings_.cols();
  Eigen::Map<const MatrixD> a(params.data(), d, in);
  Eigen::Map<const MatrixD> b(params.data() + d * in, d, emb);

  MatrixD u = x * a.transpose();
  VectorD u_norms;
  if (normalize_) u_norms = normalize_rows(u);
  MatrixD v = embeddings_ * b.transpose();
  const VectorD v_norms = normalize_rows(v);

  MatrixD logits = (u * v.transpose()) / temperature_;
  const double data_loss = softmax_xent_inplace(logits, targets);
  const double loss = data_loss + 0.5 * l2_ * (a.squaredNorm() + b.squaredNorm());
  if (!grad && !grad_x) return loss;

  MatrixD du = (logits * v) / temperature_;
  const MatrixD dv_unit = (logits.transpose() * u) / temperature_;
  if (normalize_) du = normalize_rows_backward(u, u_norms, du);
  if (grad) {
    const MatrixD dv = normalize_rows_backward(v, v_norms, dv_unit);
    grad->resize(eidx(num_params()));
    Eigen::Map<MatrixD> ga(grad->data(), d, in);
    Eigen::Map<MatrixD> gb(grad->data() + d * in, d, emb);
    ga = du.transpose() * x + l2_ * a;
    gb = dv.transpose() * embeddings_ + l2_ * b;
  }
  if (grad_x) *grad_x = du * a;
  return loss;
}

DualProjectionModel ContrastiveLoss::unpack(const VectorD& params) const {
  const auto d = eidx(shared_dim_);
  const auto in = eidx(input_dim_);
  DualProjectionModel m;
  m.a = Eigen::Map<const MatrixD>(params.data(), d, in).cast<float>();
  m.b = Eigen::Map<const MatrixD>(params.data() + d * in, d, embeddings_.cols()).cast<float>();
  m.temperature = temperature_;
  m.normalize_activation_side = normalize_;
  return m;
}

double gradient_check(const ObjectiveFn& objective, const VectorD& point, double eps, double floor) {
  if (!(eps >= 1e-8 && eps <= 1e-3)) throw std::invalid_argument("gradient_check: eps must lie in [1e-8, 1e-3]");
  VectorD analytic;
  const double f0 = objective(point, &analytic);
  if (!std::isfinite(f0)) throw NumericError("gradient_check: non-finite objective at point");
  double worst = 0.0;
  VectorD probe = point;
  for (Eigen::Index i = 0; i < point.size(); ++i) {
    probe(i) = point(i) + eps;
    const double fp = objective(probe, nullptr);
    probe(i) = point(i) - eps;
    const double fm = objective(probe, nullptr);
    probe(i) = point(i);
    if (!std::isfinite(fp) || !std::isfinite(fm)) throw NumericError("gradient_check: non-finite objective near point");
    const double numeric = (fp - fm) / (2.0 * eps);
    const double denom = std::max({std::abs(analytic(i)), std::abs(numeric), floor});
    worst = std::max(worst, std::abs(analytic(i) - numeric) / denom);
  }
  return worst;
}

// ---------------------------------------------------------------------------

TrainResult<LinearCompositionModel> train_logreg(const MatrixF& x, std::span<const Index> labels,
                                                 std::span<const Index> classes, const TrainConfig& cfg) {
  cfg.validate();
  if (x.rows() == 0) throw std::invalid_argument("train_logreg: empty training set");
  if (labels.size() != static_cast<std::size_t>(x.rows())) {
    throw std::invalid_argument("train_logreg: label count does not match row count");
  }
  std::map<Index, Index> pos;
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (!pos.emplace(classes[i], i).second) throw std::invalid_argument("train_logreg: duplicate class");
  }
  std::vector<Index> targets;
  targets.reserve(labels.size());
  for (Index l : labels) {
    auto it = pos.find(l);
    if (it == pos.end()) throw std::invalid_argument("train_logreg: label " + std::to_string(l) + " out of range");
    targets.push_back(it->second);
  }

  const LogisticLoss loss(classes.size(), static_cast<std::size_t>(x.cols()), cfg.l2_penalty, cfg.fit_bias);
  const MatrixD xd = x.cast<double>();
  Rng rng(cfg.seed);
  VectorD init = gaussian_vector(loss.num_params(), cfg.init_std, rng);
  if (cfg.fit_bias) init.tail(eidx(classes.size())).setZero();

  const ObjectiveFn objective = [&](const VectorD& p, VectorD* g) { return loss.evaluate(p, xd, targets, g); };
  auto res = minimize_lbfgs(objective, std::move(init), cfg.max_iterations, cfg.gradient_tolerance);
  require_finite(res.value, "logistic regression");

  TrainResult<LinearCompositionModel> out;
  out.model = loss.unpack(res.x, std::vector<Index>(classes.begin(), classes.end()));
  out.final_loss = res.value;
  out.loss_history = std::move(res.history);
  return out;
}

TrainResult<LinearCompositionModel> train_logreg(const MatrixF& x, std::span<const Index> labels,
                                                 const TrainConfig& cfg) {
  std::vector<Index> classes(labels.begin(), labels.end());
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  return train_logreg(x, labels, classes, cfg);
}

TrainResult<DualProjectionModel> train_contrastive(const MatrixF& x, std::span<const Index> labels,
                                                   const CompositeEmbeddingMatrix& embeddings,
                                                   std::span<const Index> seen, const TrainConfig& cfg) {
  cfg.validate();
  if (x.rows() == 0) throw std::invalid_argument("train_contrastive: empty training set");
  if (labels.size() != static_cast<std::size_t>(x.rows())) {
    throw std::invalid_argument("train_contrastive: label count does not match row count");
  }
  auto targets = seen_targets(labels, embeddings, seen);
  const ContrastiveLoss loss(std::move(targets.embeddings), static_cast<std::size_t>(x.cols()), cfg.shared_dim,
                             cfg.temperature, cfg.l2_penalty, cfg.normalize_activation_side);
  const MatrixD xd = x.cast<double>();
  Rng rng(cfg.seed);
  VectorD params = gaussian_vector(loss.num_params(), cfg.init_std, rng);

  TrainResult<DualProjectionModel> out;
  out.loss_history = minimize_minibatch(loss, xd, targets.positions, params, cfg, rng);
  out.final_loss = loss.evaluate(params, xd, targets.positions, nullptr);
  require_finite(out.final_loss, "contrastive training");
  out.model = loss.unpack(params);
  return out;
}

// ---------------------------------------------------------------------------

std::vector<double> score_candidates(const CompositionModel& model, std::span<const float> e_row,
                                     std::span<const Index> candidates, const CompositeEmbeddingMatrix* embeddings) {
  MatrixF row(1, eidx(e_row.size()));
  for (std::size_t j = 0; j < e_row.size(); ++j) row(0, eidx(j)) = e_row[j];
  const MatrixD s = score_matrix(model, row, candidates, embeddings);
  return std::vector<double>(s.data(), s.data() + s.size());
}

MatrixD score_matrix(const CompositionModel& model, const MatrixF& inputs, std::span<const Index> candidates,
                     const CompositeEmbeddingMatrix* embeddings) {
  const MatrixD x = inputs.cast<double>();
  const auto nc = eidx(candidates.size());
  if (const auto* lin = std::get_if<LinearCompositionModel>(&model)) {
    if (static_cast<std::size_t>(inputs.cols()) != lin->input_dim()) {
      throw std::invalid_argument("score_candidates: dimension mismatch (input has " + std::to_string(inputs.cols()) +
                                  " columns, model expects " + std::to_string(lin->input_dim()) + ")");
    }
    MatrixD w(nc, lin->weights.cols());
    VectorD b(nc);
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      const auto row = lin->row_of(candidates[i]);
      if (!row) {
        throw std::invalid_argument("score_candidates: composite " + std::to_string(candidates[i]) +
                                    " has no row in the model");
      }
      w.row(eidx(i)) = lin->weights.row(eidx(*row)).cast<double>();
      b(eidx(i)) = lin->bias.size() ? static_cast<double>(lin->bias(eidx(*row))) : 0.0;
    }
    MatrixD s = x * w.transpose();
    s.rowwise() += b.transpose();
    return s;
  }

  const auto& dual = std::get<DualProjectionModel>(model);
  if (!embeddings) throw std::invalid_argument("score_candidates: dual-projection model needs composite embeddings");
  if (static_cast<std::size_t>(inputs.cols()) != dual.input_dim()) {
    throw std::invalid_argument("score_candidates: dimension mismatch (input has " + std::to_string(inputs.cols()) +
                                " columns, model expects " + std::to_string(dual.input_dim()) + ")");
  }
  if (embeddings->data.cols() != dual.b.cols()) {
    throw std::invalid_argument("score_candidates: embedding dimension mismatch");
  }
  MatrixD g(nc, embeddings->data.cols());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (candidates[i] >= static_cast<std::size_t>(embeddings->data.rows())) {
      throw std::invalid_argument("score_candidates: no embedding for composite " + std::to_string(candidates[i]));
    }
    g.row(eidx(i)) = embeddings->data.row(eidx(candidates[i])).cast<double>();
  }
  MatrixD u = x * dual.a.cast<double>().transpose();
  if (dual.normalize_activation_side) normalize_rows(u);
  MatrixD v = g * dual.b.cast<double>().transpose();
  normalize_rows(v);
  return (u * v.transpose()) / dual.temperature;
}

LinearCompositionModel reduce_to_linear(const DualProjectionModel& model, const CompositeEmbeddingMatrix& embeddings,
                                        std::span<const Index> composites) {
  const MatrixD a = model.a.cast<double>();
  const MatrixD b = model.b.cast<double>();
  LinearCompositionModel out;
  out.weights.resize(eidx(composites.size()), a.cols());
  out.bias = VectorF::Zero(eidx(composites.size()));
  out.composites.assign(composites.begin(), composites.end());
  for (std::size_t i = 0; i < composites.size(); ++i) {
    if (composites[i] >= static_cast<std::size_t>(embeddings.data.rows())) {
      throw std::invalid_argument("reduce_to_linear: no embedding for composite " + std::to_string(composites[i]));
    }
    VectorD v = b * embeddings.data.row(eidx(composites[i])).cast<double>().transpose();
    v /= std::max(v.norm(), kNormFloor);
    out.weights.row(eidx(i)) = ((a.transpose() * v) / model.temperature).transpose().cast<float>();
  }
  return out;
}

// ---------------------------------------------------------------------------

std::string_view to_string(ProjectionKind k) {
  switch (k) {
    case ProjectionKind::none: return "none";
    case ProjectionKind::random: return "random";
    case ProjectionKind::learned: return "learned";
  }
  return "?";
}

ProjectionKind parse_projection_kind(std::string_view s) {
  if (s == "none") return ProjectionKind::none;
  if (s == "random") return ProjectionKind::random;
  if (s == "learned") return ProjectionKind::learned;
  throw UsageError("unknown projection kind '" + std::string(s) + "'");
}

std::size_t InputTransform::output_dim() const {
  return kind == ProjectionKind::none ? source_dim : static_cast<std::size_t>(matrix.rows());
}

MatrixF InputTransform::apply(const MatrixF& x) const {
  if (static_cast<std::size_t>(x.cols()) != source_dim) {
    throw std::invalid_argument("InputTransform: expected " + std::to_string(source_dim) + " input columns");
  }
  if (kind == ProjectionKind::none) return x;
  return (x.cast<double>() * matrix.cast<double>().transpose()).cast<float>();
}

InputTransform make_projection_baseline(ProjectionKind kind, std::size_t source_dim, std::size_t target_dim,
                                        const TrainConfig& cfg) {
  if (source_dim == 0) throw std::invalid_argument("make_projection_baseline: source_dim must be positive");
  InputTransform t;
  t.kind = kind;
  t.source_dim = source_dim;
  if (kind == ProjectionKind::none) return t;
  if (target_dim == 0) throw std::invalid_argument("make_projection_baseline: target_dim must be positive");
  Rng rng(derive_seed(cfg.seed, 0x70726f6aULL));
  const double std = 1.0 / std::sqrt(static_cast<double>(source_dim));
  t.matrix.resize(eidx(target_dim), eidx(source_dim));
  for (Eigen::Index i = 0; i < t.matrix.size(); ++i) t.matrix.data()[i] = static_cast<float>(std * rng.normal());
  return t;
}

ProjectedContrastiveResult train_projected_contrastive(const InputTransform& transform, const MatrixF& x,
                                                       std::span<const Index> labels,
                                                       const CompositeEmbeddingMatrix& embeddings,
                                                       std::span<const Index> seen, const TrainConfig& cfg) {
  cfg.validate();
  if (transform.kind != ProjectionKind::learned) {
    throw std::invalid_argument("train_projected_contrastive: transform must be of kind 'learned'");
  }
  if (static_cast<std::size_t>(x.cols()) != transform.source_dim) {
    throw std::invalid_argument("train_projected_contrastive: input dimension mismatch");
  }
  auto targets = seen_targets(labels, embeddings, seen);
  const ProjectedLoss<ContrastiveLoss> loss(
      ContrastiveLoss(std::move(targets.embeddings), transform.output_dim(), cfg.shared_dim, cfg.temperature,
                      cfg.l2_penalty, cfg.normalize_activation_side),
      transform.source_dim);
  const MatrixD xd = x.cast<double>();
  Rng rng(cfg.seed);
  VectorD params(eidx(loss.num_params()));
  const auto psize = eidx(loss.projection_size());
  params.head(psize) = Eigen::Map<const Eigen::VectorXf>(transform.matrix.data(), psize).cast<double>();
  params.tail(params.size() - psize) = gaussian_vector(loss.inner().num_params(), cfg.init_std, rng);

  ProjectedContrastiveResult out;
  out.trained.loss_history = minimize_minibatch(loss, xd, targets.positions, params, cfg, rng);
  out.trained.final_loss = loss.evaluate(params, xd, targets.positions, nullptr);
  require_finite(out.trained.final_loss, "contrastive training");
  out.trained.model = loss.inner().unpack(params.tail(params.size() - psize));
  out.transform = transform;
  out.transform.matrix = Eigen::Map<const MatrixD>(params.data(), transform.matrix.rows(), transform.matrix.cols())
                             .cast<float>();
  return out;
}

// ---------------------------------------------------------------------------

void save_model(const SavedModel& m, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw DataError("cannot create model directory " + dir.string());

  json meta{{"format", "compmap-model"}, {"format_version", kFormatVersion}, {"config", m.config}};
  if (const auto* lin = std::get_if<LinearCompositionModel>(&m.model)) {
    MatrixF bias = lin->bias.transpose();
    meta["kind"] = "linear";
    meta["composites"] = lin->composites;
    meta["matrices"] = {{"weights", matrix_entry("weights.bin", lin->weights)}, {"bias", matrix_entry("bias.bin", bias)}};
    write_matrix_f32(dir / "weights.bin", lin->weights);
    write_matrix_f32(dir / "bias.bin", bias);
  } else {
    const auto& dual = std::get<DualProjectionModel>(m.model);
    meta["kind"] = "dual-projection";
    meta["temperature"] = dual.temperature;
    meta["normalize_activation_side"] = dual.normalize_activation_side;
    meta["matrices"] = {{"a", matrix_entry("a.bin", dual.a)}, {"b", matrix_entry("b.bin", dual.b)}};
    write_matrix_f32(dir / "a.bin", dual.a);
    write_matrix_f32(dir / "b.bin", dual.b);
  }
  if (m.transform) {
    meta["transform"] = {{"kind", to_string(m.transform->kind)}, {"source_dim", m.transform->source_dim}};
    if (m.transform->kind != ProjectionKind::none) {
      meta["transform"]["matrix"] = matrix_entry("projection.bin", m.transform->matrix);
      write_matrix_f32(dir / "projection.bin", m.transform->matrix);
    }
  }
  std::ofstream os(dir / "model.json", std::ios::trunc);
  if (!os) throw DataError("cannot write " + (dir / "model.json").string());
  os << meta.dump(2) << '\n';
}

SavedModel load_model(const fs::path& dir) {
  const auto path = dir / "model.json";
  if (!fs::exists(path)) throw DataError("missing file: " + path.string());
  std::ifstream is(path);
  try {
    const json meta = json::parse(is);
    if (meta.value("format", "") != "compmap-model") throw DataError(path.string() + ": not a compmap model");
    SavedModel out;
    out.config = meta.at("config").get<TrainConfig>();
    const auto kind = meta.at("kind").get<std::string>();
    const auto& mats = meta.at("matrices");
    if (kind == "linear") {
      LinearCompositionModel lin;
      lin.weights = load_matrix_entry(dir, mats.at("weights"));
      const MatrixF bias = load_matrix_entry(dir, mats.at("bias"));
      lin.bias = bias.transpose();
      lin.composites = meta.at("composites").get<std::vector<Index>>();
      if (lin.composites.size() != static_cast<std::size_t>(lin.weights.rows()) || lin.bias.size() != lin.weights.rows()) {
        throw DataError(path.string() + ": composite order does not match weight rows");
      }
      out.model = std::move(lin);
    } else if (kind == "dual-projection") {
      DualProjectionModel dual;
      dual.a = load_matrix_entry(dir, mats.at("a"));
      dual.b = load_matrix_entry(dir, mats.at("b"));
      dual.temperature = meta.at("temperature").get<double>();
      dual.normalize_activation_side = meta.at("normalize_activation_side").get<bool>();
      if (dual.a.rows() != dual.b.rows()) throw DataError(path.string() + ": projection shared dims differ");
      out.model = std::move(dual);
    } else {
      throw DataError(path.string() + ": unknown model kind '" + kind + "'");
    }
    if (meta.contains("transform")) {
      const auto& tj = meta.at("transform");
      InputTransform t;
      t.kind = parse_projection_kind(tj.at("kind").get<std::string>());
      t.source_dim = tj.at("source_dim").get<std::size_t>();
      if (t.kind != ProjectionKind::none) t.matrix = load_matrix_entry(dir, tj.at("matrix"));
      out.transform = std::move(t);
    }
    return out;
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  } catch (const UsageError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace compmap
