#include "compmap/composition.hpp"
#include "compmap/errors.hpp"
#include "compmap/rng.hpp"
#include "compmap/synth.hpp"

#include <doctest.h>
#include <json.hpp>

#include "oracles.hpp"

#include <cmath>

using namespace compmap;
using nlohmann::json;

namespace {

MatrixD random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng, double scale = 1.0) {
  MatrixD m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

VectorD random_vector(Eigen::Index n, Rng& rng, double scale = 1.0) {
  VectorD v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = scale * rng.normal();
  return v;
}

std::vector<Index> random_targets(std::size_t n, std::size_t classes, Rng& rng) {
  std::vector<Index> t(n);
  for (auto& v : t) v = rng.index(classes);
  return t;
}

std::size_t argmax_row(const MatrixD& s, Eigen::Index i) {
  Eigen::Index best = 0;
  s.row(i).maxCoeff(&best);
  return static_cast<std::size_t>(best);
}

DatasetBundle oracle_bundle(std::uint64_t seed, std::size_t samples = 1200) {
  SynthConfig cfg;
  cfg.n_primitives = 20;
  cfg.n_composites = 12;
  cfg.max_primitives_per_composite = 4;
  cfg.n_samples = samples;
  cfg.seed = seed;
  return generate(cfg);
}

}  // namespace

// ---------------------------------------------------------------------------
// Gradients

TEST_CASE("logistic loss gradient matches central differences") {
  Rng rng(1);
  for (int trial = 0; trial < 10; ++trial) {
    const LogisticLoss loss(3, 4, 1.0, true);
    const MatrixD x = random_matrix(9, 4, rng);
    const auto t = random_targets(9, 3, rng);
    const VectorD p = random_vector(eidx(loss.num_params()), rng);
    const ObjectiveFn f = [&](const VectorD& q, VectorD* g) { return loss.evaluate(q, x, t, g); };
    CHECK(gradient_check(f, p, 1e-5) < 1e-5);
  }
}

TEST_CASE("logistic loss matches the reference objective") {
  Rng rng(2);
  const LogisticLoss loss(4, 3, 0.7, true);
  const MatrixD x = random_matrix(11, 3, rng);
  const auto t = random_targets(11, 4, rng);
  const VectorD p = random_vector(eidx(loss.num_params()), rng);
  VectorD g, g_ref;
  const double v = loss.evaluate(p, x, t, &g);
  const double v_ref = oracle::logreg_objective(p, x, t, 4, 0.7, true, &g_ref);
  CHECK(v == doctest::Approx(v_ref).epsilon(1e-12));
  CHECK((g - g_ref).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("contrastive loss gradient matches central differences") {
  Rng rng(3);
  for (bool normalize : {true, false}) {
    for (int trial = 0; trial < 5; ++trial) {
      const ContrastiveLoss loss(random_matrix(4, 6, rng), 5, 3, 0.05, 0.01, normalize);
      const MatrixD x = random_matrix(7, 5, rng);
      const auto t = random_targets(7, 4, rng);
      const VectorD p = random_vector(eidx(loss.num_params()), rng, 0.5);
      const ObjectiveFn f = [&](const VectorD& q, VectorD* g) { return loss.evaluate(q, x, t, g); };
      CHECK(gradient_check(f, p, 1e-5) < 1e-4);
    }
  }
}

TEST_CASE("input gradients match central differences") {
  Rng rng(4);
  const LogisticLoss lr(3, 4, 0.5, true);
  const ContrastiveLoss ct(random_matrix(3, 5, rng), 4, 6, 0.1, 0.0, true);
  const MatrixD x = random_matrix(5, 4, rng);
  const auto t = random_targets(5, 3, rng);

  auto check_inputs = [&](const auto& loss) {
    const VectorD p = random_vector(eidx(loss.num_params()), rng, 0.5);
    MatrixD gx;
    loss.evaluate(p, x, t, nullptr, &gx);
    VectorD flat = Eigen::Map<const VectorD>(x.data(), x.size());
    const VectorD numeric = oracle::numeric_gradient(
        [&](const VectorD& v) {
          const MatrixD xm = Eigen::Map<const MatrixD>(v.data(), x.rows(), x.cols());
          return loss.evaluate(p, xm, t, nullptr);
        },
        flat, 1e-6);
    const VectorD analytic = Eigen::Map<const VectorD>(gx.data(), gx.size());
    CHECK((analytic - numeric).lpNorm<Eigen::Infinity>() < 1e-6);
  };
  check_inputs(lr);
  check_inputs(ct);
}

TEST_CASE("projected loss gradient matches central differences") {
  Rng rng(5);
  const ProjectedLoss<ContrastiveLoss> loss(ContrastiveLoss(random_matrix(3, 4, rng), 5, 4, 0.2, 0.0, true), 7);
  const MatrixD x = random_matrix(6, 7, rng);
  const auto t = random_targets(6, 3, rng);
  const VectorD p = random_vector(eidx(loss.num_params()), rng, 0.5);
  const ObjectiveFn f = [&](const VectorD& q, VectorD* g) { return loss.evaluate(q, x, t, g); };
  CHECK(gradient_check(f, p, 1e-5) < 1e-4);
}

TEST_CASE("bias gradient at zero is the class-frequency residual") {
  // Uniform softmax at the origin: d/db_c = 1/C - freq(c).
  const LogisticLoss loss(3, 2, 1.0, true);
  MatrixD x = MatrixD::Ones(6, 2);
  const std::vector<Index> t{0, 0, 0, 1, 1, 2};
  VectorD g;
  loss.evaluate(VectorD::Zero(eidx(loss.num_params())), x, t, &g);
  CHECK(g(6) == doctest::Approx(1.0 / 3 - 3.0 / 6));
  CHECK(g(7) == doctest::Approx(1.0 / 3 - 2.0 / 6));
  CHECK(g(8) == doctest::Approx(1.0 / 3 - 1.0 / 6));
}

TEST_CASE("gradient_check rejects non-finite objectives and bad steps") {
  const ObjectiveFn bad = [](const VectorD&, VectorD* g) {
    if (g) *g = VectorD::Zero(1);
    return std::numeric_limits<double>::quiet_NaN();
  };
  CHECK_THROWS_AS(gradient_check(bad, VectorD::Zero(1), 1e-5), NumericError);
  const ObjectiveFn ok = [](const VectorD& p, VectorD* g) {
    if (g) *g = 2 * p;
    return p.squaredNorm();
  };
  CHECK(gradient_check(ok, VectorD::Ones(3), 1e-5) < 1e-8);
  CHECK_THROWS_AS(gradient_check(ok, VectorD::Ones(3), 0.5), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Logistic regression

TEST_CASE("separable two-class toy set is fit perfectly") {
  MatrixF x(4, 2);
  x << 1, 0, 0.9f, 0.1f, 0, 1, 0.1f, 0.9f;
  const std::vector<Index> y{0, 0, 1, 1};
  const auto res = train_logreg(x, y, TrainConfig::logreg_defaults());
  const auto s = score_matrix(res.model, x, res.model.composites);
  for (Eigen::Index i = 0; i < 4; ++i) CHECK(argmax_row(s, i) == y[static_cast<std::size_t>(i)]);
}

TEST_CASE("identical inputs with balanced classes give probability one half") {
  MatrixF x = MatrixF::Constant(6, 3, 0.4f);
  const std::vector<Index> y{0, 1, 0, 1, 0, 1};
  const auto res = train_logreg(x, y, TrainConfig::logreg_defaults());
  const auto s = score_matrix(res.model, x, res.model.composites);
  for (Eigen::Index i = 0; i < 6; ++i) {
    const double p0 = 1.0 / (1.0 + std::exp(s(i, 1) - s(i, 0)));
    CHECK(std::abs(p0 - 0.5) < 1e-6);
  }
}

TEST_CASE("logreg agrees with an independent gradient-descent oracle") {
  Rng rng(6);
  for (int trial = 0; trial < 3; ++trial) {
    const MatrixD x = random_matrix(30, 4, rng);
    std::vector<Index> y(30);
    for (std::size_t i = 0; i < 30; ++i) y[i] = i % 3;
    auto cfg = TrainConfig::logreg_defaults();
    cfg.seed = static_cast<std::uint64_t>(trial);
    cfg.gradient_tolerance = 1e-10;
    cfg.max_iterations = 2000;
    const auto res = train_logreg(x.cast<float>(), y, cfg);
    const VectorD ref = oracle::logreg_gradient_descent(x.cast<float>().cast<double>(), y, 3, 1.0, true, 0.5);
    const double ref_loss = oracle::logreg_objective(ref, x.cast<float>().cast<double>(), y, 3, 1.0, true, nullptr);
    CHECK(std::abs(res.final_loss - ref_loss) < 1e-4);
    VectorD got(15);
    got.head(12) = Eigen::Map<const Eigen::VectorXf>(res.model.weights.data(), 12).cast<double>();
    got.tail(3) = res.model.bias.cast<double>();
    CHECK((got - ref).lpNorm<Eigen::Infinity>() < 1e-4);
  }
}

TEST_CASE("logreg optimum does not depend on the seed") {
  Rng rng(7);
  const MatrixF x = random_matrix(40, 5, rng).cast<float>();
  std::vector<Index> y(40);
  for (std::size_t i = 0; i < 40; ++i) y[i] = i % 4;
  auto c1 = TrainConfig::logreg_defaults();
  auto c2 = c1;
  c2.seed = 99;
  const auto a = train_logreg(x, y, c1);
  const auto b = train_logreg(x, y, c2);
  const MatrixF held = random_matrix(20, 5, rng).cast<float>();
  const auto sa = score_matrix(a.model, held, a.model.composites);
  const auto sb = score_matrix(b.model, held, b.model.composites);
  for (Eigen::Index i = 0; i < 20; ++i) {
    for (Eigen::Index j = 1; j < 4; ++j) CHECK(std::abs((sa(i, j) - sa(i, 0)) - (sb(i, j) - sb(i, 0))) < 1e-3);
  }
}

TEST_CASE("logreg is deterministic") {
  const auto b = oracle_bundle(1, 400);
  const auto rows = b.split.rows(Split::train);
  std::vector<Index> y;
  for (Index r : rows) y.push_back(b.split.labels[r]);
  MatrixF x(eidx(rows.size()), b.activations.data.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) x.row(eidx(i)) = b.activations.data.row(eidx(rows[i]));
  const auto r1 = train_logreg(x, y, TrainConfig::logreg_defaults());
  const auto r2 = train_logreg(x, y, TrainConfig::logreg_defaults());
  CHECK(r1.model == r2.model);
  CHECK(r1.loss_history == r2.loss_history);
}

TEST_CASE("logreg input errors") {
  const auto cfg = TrainConfig::logreg_defaults();
  CHECK_THROWS_AS(train_logreg(MatrixF(0, 3), std::vector<Index>{}, cfg), std::invalid_argument);
  MatrixF x = MatrixF::Zero(2, 2);
  const std::vector<Index> y{0, 5};
  const std::vector<Index> classes{0, 1};
  CHECK_THROWS_AS(train_logreg(x, y, classes, cfg), std::invalid_argument);
}

TEST_CASE("linear scores are linear without bias") {
  Rng rng(8);
  LinearCompositionModel m;
  m.weights = random_matrix(3, 6, rng).cast<float>();
  m.bias = VectorF::Zero(3);
  m.composites = {0, 1, 2};
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<float> e1(6), e2(6), mix(6);
    const double a = rng.normal(), b = rng.normal();
    for (int j = 0; j < 6; ++j) {
      e1[static_cast<std::size_t>(j)] = static_cast<float>(rng.normal());
      e2[static_cast<std::size_t>(j)] = static_cast<float>(rng.normal());
    }
    for (std::size_t q = 0; q < 3; ++q) {
      double lhs = 0;
      for (std::size_t j = 0; j < 6; ++j) lhs += m.weights(eidx(q), eidx(j)) * (a * e1[j] + b * e2[j]);
      CHECK(std::abs(lhs - (a * m.score(e1, q) + b * m.score(e2, q))) < 1e-9 * (1 + std::abs(lhs)));
    }
    (void)mix;
  }
}

TEST_CASE("score_candidates examples") {
  LinearCompositionModel m;
  m.weights = MatrixF::Identity(3, 3);
  m.bias = VectorF::Zero(3);
  m.composites = {0, 1, 2};
  const std::vector<float> e{0, 1, 0};
  const std::vector<Index> all{0, 1, 2};
  CHECK(score_candidates(m, e, all) == std::vector<double>{0, 1, 0});
  CHECK(score_candidates(m, e, std::vector<Index>{}).empty());
  CHECK(score_candidates(m, e, std::vector<Index>{2, 0}) == std::vector<double>{0, 0});
  CHECK_THROWS_AS(score_candidates(m, std::vector<float>{1, 2}, all), std::invalid_argument);
  CHECK_THROWS_AS(score_candidates(m, e, std::vector<Index>{7}), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Dual projection

TEST_CASE("dual model scores equal its linear reduction without activation normalization") {
  Rng rng(9);
  DualProjectionModel d;
  d.a = random_matrix(8, 5, rng).cast<float>();
  d.b = random_matrix(8, 6, rng).cast<float>();
  d.temperature = 0.05;
  d.normalize_activation_side = false;
  CompositeEmbeddingMatrix g{random_matrix(4, 6, rng).cast<float>(), "test"};
  const std::vector<Index> cand{3, 1, 0, 2};
  const auto lin = reduce_to_linear(d, g, cand);
  const MatrixF x = random_matrix(10, 5, rng).cast<float>();
  const auto s_dual = score_matrix(d, x, cand, &g);
  const auto s_lin = score_matrix(lin, x, cand);
  CHECK((s_dual - s_lin).lpNorm<Eigen::Infinity>() < 1e-6 * (1 + s_dual.lpNorm<Eigen::Infinity>()));
  CHECK_THROWS_AS(score_matrix(d, x, cand, nullptr), std::invalid_argument);
}

TEST_CASE("dual model with activation normalization ranks like its reduction") {
  Rng rng(10);
  DualProjectionModel d;
  d.a = random_matrix(8, 5, rng).cast<float>();
  d.b = random_matrix(8, 6, rng).cast<float>();
  CompositeEmbeddingMatrix g{random_matrix(4, 6, rng).cast<float>(), "test"};
  const std::vector<Index> cand{0, 1, 2, 3};
  const auto lin = reduce_to_linear(d, g, cand);
  const MatrixF x = random_matrix(10, 5, rng).cast<float>();
  const auto s_dual = score_matrix(d, x, cand, &g);
  const auto s_lin = score_matrix(lin, x, cand);
  for (Eigen::Index i = 0; i < 10; ++i) CHECK(argmax_row(s_dual, i) == argmax_row(s_lin, i));
}

TEST_CASE("contrastive trainer fits the oracle composition") {
  const auto b = oracle_bundle(2);
  const auto rows = b.split.rows(Split::train);
  std::vector<Index> y;
  for (Index r : rows) y.push_back(b.split.labels[r]);
  MatrixF x(eidx(rows.size()), b.activations.data.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) x.row(eidx(i)) = b.gt_row(rows[i]).cast<float>();
  auto cfg = TrainConfig::contrastive_defaults();
  cfg.epochs = 30;
  cfg.shared_dim = 64;
  const auto res = train_contrastive(x, y, *b.composite_embeddings, b.split.seen_set, cfg);
  const auto s = score_matrix(res.model, x, b.split.seen_set, &*b.composite_embeddings);
  std::size_t hits = 0;
  for (Eigen::Index i = 0; i < s.rows(); ++i) hits += b.split.seen_set[argmax_row(s, i)] == y[static_cast<std::size_t>(i)];
  CHECK(static_cast<double>(hits) / static_cast<double>(y.size()) >= 0.99);
  CHECK(res.loss_history.size() == 30);
  CHECK(res.loss_history.back() < res.loss_history.front());
}

TEST_CASE("contrastive training is scale-invariant with activation normalization") {
  const auto b = oracle_bundle(3, 300);
  const auto rows = b.split.rows(Split::train);
  std::vector<Index> y;
  for (Index r : rows) y.push_back(b.split.labels[r]);
  MatrixF x(eidx(rows.size()), b.activations.data.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) x.row(eidx(i)) = b.activations.data.row(eidx(rows[i]));
  auto cfg = TrainConfig::contrastive_defaults();
  cfg.epochs = 5;
  cfg.shared_dim = 16;
  const auto r1 = train_contrastive(x, y, *b.composite_embeddings, b.split.seen_set, cfg);
  const MatrixF x2 = 2.0f * x;
  const auto r2 = train_contrastive(x2, y, *b.composite_embeddings, b.split.seen_set, cfg);
  const auto s1 = score_matrix(r1.model, x, b.split.candidate_set, &*b.composite_embeddings);
  const auto s2 = score_matrix(r2.model, x2, b.split.candidate_set, &*b.composite_embeddings);
  for (Eigen::Index i = 0; i < s1.rows(); ++i) CHECK(argmax_row(s1, i) == argmax_row(s2, i));
}

TEST_CASE("contrastive trainer errors") {
  const auto b = oracle_bundle(4, 200);
  const auto rows = b.split.rows(Split::train);
  std::vector<Index> y;
  for (Index r : rows) y.push_back(b.split.labels[r]);
  MatrixF x(eidx(rows.size()), b.activations.data.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) x.row(eidx(i)) = b.activations.data.row(eidx(rows[i]));
  auto cfg = TrainConfig::contrastive_defaults();
  cfg.epochs = 1;
  SUBCASE("single seen composite") {
    const std::vector<Index> one{y[0]};
    std::vector<Index> y1(y.size(), y[0]);
    CHECK_THROWS_AS(train_contrastive(x, y1, *b.composite_embeddings, one, cfg), std::invalid_argument);
  }
  SUBCASE("missing embedding row") {
    CompositeEmbeddingMatrix short_emb{b.composite_embeddings->data.topRows(2), "cut"};
    CHECK_THROWS_AS(train_contrastive(x, y, short_emb, b.split.seen_set, cfg), DataError);
  }
}

TEST_CASE("contrastive training is deterministic") {
  const auto b = oracle_bundle(5, 200);
  const auto rows = b.split.rows(Split::train);
  std::vector<Index> y;
  for (Index r : rows) y.push_back(b.split.labels[r]);
  MatrixF x(eidx(rows.size()), b.activations.data.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) x.row(eidx(i)) = b.activations.data.row(eidx(rows[i]));
  auto cfg = TrainConfig::contrastive_defaults();
  cfg.epochs = 3;
  cfg.shared_dim = 8;
  for (auto opt : {OptimizerKind::adam, OptimizerKind::sgd}) {
    cfg.optimizer = opt;
    const auto r1 = train_contrastive(x, y, *b.composite_embeddings, b.split.seen_set, cfg);
    const auto r2 = train_contrastive(x, y, *b.composite_embeddings, b.split.seen_set, cfg);
    CHECK(r1.model == r2.model);
    CHECK(r1.loss_history == r2.loss_history);
  }
}

// ---------------------------------------------------------------------------
// Projections

TEST_CASE("projection baselines") {
  const auto cfg = TrainConfig::contrastive_defaults();
  const auto none = make_projection_baseline(ProjectionKind::none, 12, 5, cfg);
  CHECK(none.output_dim() == 12);
  MatrixF x = MatrixF::Random(3, 12);
  CHECK(same_matrix(none.apply(x), x));

  const auto r1 = make_projection_baseline(ProjectionKind::random, 12, 5, cfg);
  const auto r2 = make_projection_baseline(ProjectionKind::random, 12, 5, cfg);
  CHECK(r1.output_dim() == 5);
  CHECK(same_matrix(r1.matrix, r2.matrix));
  auto other = cfg;
  other.seed = 1;
  CHECK_FALSE(same_matrix(make_projection_baseline(ProjectionKind::random, 12, 5, other).matrix, r1.matrix));
  CHECK_THROWS_AS(r1.apply(MatrixF::Zero(2, 11)), std::invalid_argument);
  CHECK(parse_projection_kind(to_string(ProjectionKind::learned)) == ProjectionKind::learned);
  CHECK_THROWS_AS(parse_projection_kind("pca"), UsageError);
}

TEST_CASE("random projection preserves variance") {
  // Johnson-Lindenstrauss style check: 512 -> 360 with entry variance
  // 1/source keeps per-coordinate variance of unit-variance inputs.
  const auto t = make_projection_baseline(ProjectionKind::random, 512, 360, TrainConfig::contrastive_defaults());
  Rng rng(12);
  const MatrixF x = random_matrix(1000, 512, rng).cast<float>();
  const MatrixF y = t.apply(x);
  const double var_in = x.cast<double>().squaredNorm() / static_cast<double>(x.size());
  const double var_out = y.cast<double>().squaredNorm() / static_cast<double>(y.size());
  CHECK(std::abs(var_out / var_in - 1.0) < 0.2);
}

TEST_CASE("learned projection trains jointly") {
  SynthConfig sc;
  sc.n_primitives = 16;
  sc.n_composites = 10;
  sc.max_primitives_per_composite = 3;
  sc.n_samples = 400;
  sc.image_embed_dim = 24;
  const auto b = generate(sc);
  const auto rows = b.split.rows(Split::train);
  std::vector<Index> y;
  MatrixF x(eidx(rows.size()), 24);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    y.push_back(b.split.labels[rows[i]]);
    x.row(eidx(i)) = b.image_embeddings->row(eidx(rows[i]));
  }
  auto cfg = TrainConfig::contrastive_defaults();
  cfg.epochs = 10;
  cfg.shared_dim = 16;
  const auto t = make_projection_baseline(ProjectionKind::learned, 24, 16, cfg);
  const auto res = train_projected_contrastive(t, x, y, *b.composite_embeddings, b.split.seen_set, cfg);
  CHECK(res.transform.output_dim() == 16);
  CHECK_FALSE(same_matrix(res.transform.matrix, t.matrix));
  CHECK(res.trained.loss_history.back() < res.trained.loss_history.front());
  const auto random = make_projection_baseline(ProjectionKind::random, 24, 16, cfg);
  CHECK_THROWS_AS(train_projected_contrastive(random, x, y, *b.composite_embeddings, b.split.seen_set, cfg),
                  std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Config and model files

TEST_CASE("train config defaults and JSON") {
  const auto lr = TrainConfig::logreg_defaults();
  CHECK(lr.l2_penalty == 1.0);
  const auto ct = TrainConfig::contrastive_defaults();
  CHECK(ct.temperature == 0.05);
  CHECK(ct.shared_dim == 512);
  CHECK(ct.learning_rate == 1e-3);
  CHECK(ct.epochs == 200);
  CHECK(ct.batch_size == 256);

  json j = ct;
  CHECK(j.get<TrainConfig>() == ct);
  json partial{{"epochs", 3}, {"optimizer", "sgd"}};
  TrainConfig c = ct;
  from_json(partial, c);
  CHECK(c.epochs == 3);
  CHECK(c.optimizer == OptimizerKind::sgd);
  CHECK(c.temperature == 0.05);
  CHECK_THROWS_AS(from_json(json{{"epoch", 3}}, c), UsageError);
  CHECK_THROWS_AS(from_json(json{{"optimizer", "rmsprop"}}, c), UsageError);

  TrainConfig bad = ct;
  bad.temperature = 0;
  CHECK_THROWS_AS(bad.validate(), UsageError);
  bad = ct;
  bad.batch_size = 0;
  CHECK_THROWS_AS(bad.validate(), UsageError);
  bad = lr;
  bad.l2_penalty = -1;
  CHECK_THROWS_AS(bad.validate(), UsageError);
}

TEST_CASE("model files round-trip byte-exactly") {
  Rng rng(13);
  SUBCASE("linear") {
    SavedModel m;
    LinearCompositionModel lin;
    lin.weights = random_matrix(3, 4, rng).cast<float>();
    lin.bias = random_vector(3, rng).cast<float>();
    lin.composites = {4, 0, 2};
    m.model = lin;
    m.config = TrainConfig::logreg_defaults();
    const auto d1 = oracle::scratch_dir("model_lin1");
    const auto d2 = oracle::scratch_dir("model_lin2");
    save_model(m, d1);
    const auto loaded = load_model(d1);
    CHECK(std::get<LinearCompositionModel>(loaded.model) == lin);
    CHECK(loaded.config == m.config);
    CHECK_FALSE(loaded.transform.has_value());
    save_model(loaded, d2);
    CHECK(oracle::tree_bytes(d1) == oracle::tree_bytes(d2));
  }
  SUBCASE("dual with transform") {
    SavedModel m;
    DualProjectionModel d;
    d.a = random_matrix(6, 4, rng).cast<float>();
    d.b = random_matrix(6, 5, rng).cast<float>();
    d.temperature = 0.1;
    d.normalize_activation_side = false;
    m.model = d;
    m.config = TrainConfig::contrastive_defaults();
    m.transform = make_projection_baseline(ProjectionKind::random, 9, 4, m.config);
    const auto d1 = oracle::scratch_dir("model_dual1");
    const auto d2 = oracle::scratch_dir("model_dual2");
    save_model(m, d1);
    const auto loaded = load_model(d1);
    CHECK(std::get<DualProjectionModel>(loaded.model) == d);
    REQUIRE(loaded.transform.has_value());
    CHECK(same_matrix(loaded.transform->matrix, m.transform->matrix));
    CHECK(loaded.transform->kind == ProjectionKind::random);
    save_model(loaded, d2);
    CHECK(oracle::tree_bytes(d1) == oracle::tree_bytes(d2));
  }
  SUBCASE("corrupted weights") {
    SavedModel m;
    LinearCompositionModel lin;
    lin.weights = MatrixF::Ones(2, 2);
    lin.bias = VectorF::Zero(2);
    lin.composites = {0, 1};
    m.model = lin;
    const auto dir = oracle::scratch_dir("model_bad");
    save_model(m, dir);
    std::filesystem::resize_file(dir / "weights.bin", 10);
    CHECK_THROWS_AS(load_model(dir), DataError);
    CHECK_THROWS_AS(load_model(dir / "absent"), DataError);
  }
}
