#include "compmap/errors.hpp"
#include "compmap/fewshot.hpp"
#include "compmap/rng.hpp"
#include "compmap/synth.hpp"

#include <doctest.h>

#include "oracles.hpp"

#include <set>

using namespace compmap;

namespace {

DatasetBundle bundle(double flip = 0.0, std::uint64_t seed = 0, std::size_t samples = 2000) {
  SynthConfig cfg;
  cfg.n_primitives = 30;
  cfg.n_composites = 20;
  cfg.n_samples = samples;
  cfg.flip_noise = flip;
  cfg.seed = seed;
  return generate(cfg);
}

}  // namespace

TEST_CASE("episode cardinalities and disjointness") {
  const auto b = bundle();
  EpisodeConfig cfg{5, 1, 15, 600, 3};
  std::size_t shrunk = 99;
  const auto specs = sample_episodes(b, cfg, {}, &shrunk);
  CHECK(shrunk == 0);
  REQUIRE(specs.size() == 600);
  for (const auto& s : specs) {
    REQUIRE(s.classes.size() == 5);
    CHECK(std::set<Index>(s.classes.begin(), s.classes.end()).size() == 5);
    std::set<Index> support, query;
    for (std::size_t c = 0; c < 5; ++c) {
      CHECK(s.support[c].size() == 1);
      CHECK(s.query[c].size() == 15);
      for (Index r : s.support[c]) {
        CHECK(b.split.labels[r] == s.classes[c]);
        support.insert(r);
      }
      for (Index r : s.query[c]) {
        CHECK(b.split.labels[r] == s.classes[c]);
        query.insert(r);
      }
    }
    CHECK(support.size() == 5);
    CHECK(query.size() == 75);
    for (Index r : support) CHECK(query.count(r) == 0);
  }
}

TEST_CASE("episodes are reproducible under the seed") {
  const auto b = bundle();
  EpisodeConfig cfg{5, 2, 10, 50, 11};
  const auto a = sample_episodes(b, cfg);
  const auto c = sample_episodes(b, cfg);
  REQUIRE(a.size() == c.size());
  for (std::size_t t = 0; t < a.size(); ++t) {
    CHECK(a[t].classes == c[t].classes);
    CHECK(a[t].support == c[t].support);
    CHECK(a[t].query == c[t].query);
    CHECK(a[t].seed == c[t].seed);
  }
  cfg.seed = 12;
  CHECK(sample_episodes(b, cfg)[0].support != a[0].support);
}

TEST_CASE("n equal to the class count covers every class") {
  const auto b = bundle();
  EpisodeConfig cfg{20, 1, 2, 10, 0};
  for (const auto& s : sample_episodes(b, cfg)) {
    std::vector<Index> c = s.classes;
    std::sort(c.begin(), c.end());
    std::vector<Index> all(20);
    std::iota(all.begin(), all.end(), Index{0});
    CHECK(c == all);
  }
}

TEST_CASE("sampler errors and query shrinking") {
  const auto b = bundle(0.0, 0, 200);  // about 10 samples per class
  CHECK_THROWS_AS(sample_episodes(b, EpisodeConfig{21, 1, 1, 1, 0}), DataError);
  CHECK_THROWS_AS(sample_episodes(b, EpisodeConfig{5, 40, 1, 1, 0}), DataError);
  CHECK_THROWS_AS(sample_episodes(b, EpisodeConfig{0, 1, 1, 1, 0}), std::invalid_argument);
  std::size_t shrunk = 0;
  const auto specs = sample_episodes(b, EpisodeConfig{5, 1, 50, 20, 0}, {}, &shrunk);
  CHECK(shrunk > 0);
  for (const auto& s : specs) {
    for (std::size_t c = 0; c < 5; ++c) {
      CHECK(s.support[c].size() == 1);
      CHECK_FALSE(s.query[c].empty());
    }
  }
}

TEST_CASE("support equal to query on separable data is memorized") {
  const auto b = bundle();
  EpisodeSpec s;
  s.seed = 1;
  for (Index c : {0, 3, 7}) {
    s.classes.push_back(c);
    std::vector<Index> rows;
    for (Index r = 0; r < b.num_samples() && rows.size() < 3; ++r) {
      if (b.split.labels[r] == c) rows.push_back(r);
    }
    s.support.push_back(rows);
    s.query.push_back(rows);
  }
  EvalInputs in;
  in.train_on = in.eval_on = InputSource::ground_truth;
  CHECK(eval_episode(s, b, in, TrainConfig::logreg_defaults()) == 1.0);
}

TEST_CASE("full intervention on a ground-truth model equals plain ground-truth evaluation") {
  const auto b = bundle(0.2, 1);
  const auto specs = sample_episodes(b, EpisodeConfig{5, 1, 5, 20, 2});
  EvalInputs plain;
  plain.train_on = plain.eval_on = InputSource::ground_truth;
  EvalInputs full = plain;
  full.mode = InterventionMode::full;
  const auto cfg = TrainConfig::logreg_defaults();
  for (const auto& s : specs) CHECK(eval_episode(s, b, plain, cfg) == eval_episode(s, b, full, cfg));
  CHECK(eval_fullshot(b, plain, cfg) == eval_fullshot(b, full, cfg));
}

TEST_CASE("oracle inputs give near-perfect accuracy") {
  const auto b = bundle();
  EvalInputs in;
  in.train_on = in.eval_on = InputSource::ground_truth;
  const auto cfg = TrainConfig::logreg_defaults();
  const auto specs = sample_episodes(b, EpisodeConfig{5, 1, 15, 100, 0});
  CHECK(eval_episodes(specs, b, in, cfg).mean >= 0.99);
  std::size_t excluded = 0;
  CHECK(eval_fullshot(b, in, cfg, &excluded) >= 0.98);
  CHECK(excluded > 0);  // test split holds unseen classes
}

TEST_CASE("random labels give chance-level full-shot accuracy") {
  Rng rng(4);
  DatasetBundle b;
  const std::size_t n = 3000, p = 8, q = 10;
  for (std::size_t j = 0; j < p; ++j) b.vocab.primitives.push_back("p" + std::to_string(j));
  for (std::size_t c = 0; c < q; ++c) {
    b.vocab.composites.push_back("c" + std::to_string(c));
    b.vocab.gt_composition.push_back({c % p});
  }
  b.activations.data = MatrixF(n, p);
  b.ground_truth.data = MatrixU8::Zero(n, p);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < p; ++j) b.activations.data(eidx(i), eidx(j)) = static_cast<float>(rng.uniform());
    b.activations.sample_ids.push_back("s" + std::to_string(i));
    b.split.labels.push_back(rng.index(q));
    b.split.split_of.push_back(i % 3 == 0 ? Split::test : Split::train);
  }
  for (Index c = 0; c < q; ++c) {
    b.split.seen_set.push_back(c);
    b.split.candidate_set.push_back(c);
  }
  b.validate();
  const double acc = eval_fullshot(b, EvalInputs{}, TrainConfig::logreg_defaults());
  CHECK(std::abs(acc - 0.1) < 0.05);
}

TEST_CASE("thread count and episode order do not change the summary") {
  const auto b = bundle(0.1, 5);
  auto specs = sample_episodes(b, EpisodeConfig{5, 1, 10, 40, 9});
  const auto cfg = TrainConfig::logreg_defaults();
  const auto one = eval_episodes(specs, b, EvalInputs{}, cfg, 1);
  const auto four = eval_episodes(specs, b, EvalInputs{}, cfg, 4);
  CHECK(one.per_task == four.per_task);
  CHECK(one.mean == four.mean);
  CHECK(one.stddev == four.stddev);
  std::reverse(specs.begin(), specs.end());
  const auto rev = eval_episodes(specs, b, EvalInputs{}, cfg, 3);
  CHECK(std::abs(rev.mean - one.mean) < 1e-12);
  double ss = 0;
  for (double a : one.per_task) ss += (a - one.mean) * (a - one.mean);
  CHECK(std::abs(one.stddev - std::sqrt(ss / 40)) < 1e-12);
}

TEST_CASE("more shots and fewer ways help on noisy data") {
  const auto b = bundle(0.15, 6);
  const auto cfg = TrainConfig::logreg_defaults();
  auto mean = [&](std::size_t n, std::size_t k) {
    return eval_episodes(sample_episodes(b, EpisodeConfig{n, k, 10, 150, 21}), b, EvalInputs{}, cfg, 4).mean;
  };
  const double n5k1 = mean(5, 1), n5k5 = mean(5, 5), n10k1 = mean(10, 1), n20k1 = mean(20, 1);
  CHECK(n5k5 >= n5k1);
  CHECK(n5k1 >= n10k1);
  CHECK(n10k1 >= n20k1);
}

TEST_CASE("classification accuracy breaks ties toward the first row") {
  LinearCompositionModel m;
  m.weights = MatrixF::Zero(2, 2);
  m.bias = VectorF::Zero(2);
  m.composites = {4, 2};
  const MatrixF x = MatrixF::Ones(2, 2);
  CHECK(classification_accuracy(m, x, std::vector<Index>{4, 2}) == 0.5);
  CHECK_THROWS_AS(classification_accuracy(m, x, std::vector<Index>{4}), std::invalid_argument);
}

TEST_CASE("full-shot errors") {
  auto b = oracle::tiny_bundle();
  for (auto& s : b.split.split_of) {
    if (s == Split::test) s = Split::val;
  }
  CHECK_THROWS_AS(eval_fullshot(b, EvalInputs{}, TrainConfig::logreg_defaults()), DataError);
}
