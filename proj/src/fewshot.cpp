#include "compmap/fewshot.hpp"

#include "compmap/errors.hpp"
#include "compmap/rng.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <map>
#include <mutex>
#include <numeric>
#include <thread>

namespace compmap {

std::vector<EpisodeSpec> sample_episodes(const DatasetBundle& bundle, const EpisodeConfig& cfg,
                                         std::span<const Index> pool, std::size_t* shrunk_classes) {
  if (cfg.n_way == 0 || cfg.k_shot == 0 || cfg.tasks == 0) {
    throw std::invalid_argument("sample_episodes: n, k and tasks must be positive");
  }
  std::vector<Index> all;
  if (pool.empty()) {
    all.resize(bundle.num_samples());
    std::iota(all.begin(), all.end(), Index{0});
    pool = all;
  }
  std::map<Index, std::vector<Index>> by_class;
  for (Index r : pool) {
    if (r >= bundle.num_samples()) throw std::invalid_argument("sample_episodes: pool row out of range");
    by_class[bundle.split.labels[r]].push_back(r);
  }
  std::vector<Index> classes;
  std::vector<const std::vector<Index>*> members;
  for (const auto& [label, rows] : by_class) {
    if (rows.size() < cfg.k_shot + 1) {
      throw DataError("sample_episodes: insufficient samples in class " + std::to_string(label) + " (" +
                      std::to_string(rows.size()) + " < k + 1 = " + std::to_string(cfg.k_shot + 1) + ")");
    }
    classes.push_back(label);
    members.push_back(&rows);
  }
  if (cfg.n_way > classes.size()) {
    throw DataError("sample_episodes: n = " + std::to_string(cfg.n_way) + " exceeds the class count " +
                    std::to_string(classes.size()));
  }

  std::vector<bool> shrunk(classes.size(), false);
  std::vector<EpisodeSpec> specs;
  specs.reserve(cfg.tasks);
  for (std::size_t t = 0; t < cfg.tasks; ++t) {
    EpisodeSpec spec;
    spec.seed = derive_seed(cfg.seed, t);
    Rng rng(spec.seed);
    for (auto ci : rng.sample_without_replacement(classes.size(), cfg.n_way)) {
      const auto& rows = *members[ci];
      const auto want = cfg.k_shot + cfg.queries;
      if (rows.size() < want) shrunk[ci] = true;
      const auto picks = rng.sample_without_replacement(rows.size(), std::min(want, rows.size()));
      std::vector<Index> support, query;
      for (std::size_t i = 0; i < picks.size(); ++i) {
        (i < cfg.k_shot ? support : query).push_back(rows[picks[i]]);
      }
      spec.classes.push_back(classes[ci]);
      spec.support.push_back(std::move(support));
      spec.query.push_back(std::move(query));
    }
    specs.push_back(std::move(spec));
  }
  if (shrunk_classes) *shrunk_classes = static_cast<std::size_t>(std::count(shrunk.begin(), shrunk.end(), true));
  return specs;
}

double classification_accuracy(const LinearCompositionModel& model, const MatrixF& inputs,
                               std::span<const Index> labels) {
  if (labels.size() != static_cast<std::size_t>(inputs.rows())) {
    throw std::invalid_argument("classification_accuracy: label count does not match row count");
  }
  if (labels.empty()) throw std::invalid_argument("classification_accuracy: no samples");
  const MatrixD scores = score_matrix(model, inputs, model.composites);
  std::size_t hits = 0;
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    Eigen::Index best = 0;
    scores.row(i).maxCoeff(&best);  // first maximum: ties go to the lower row
    if (model.composites[static_cast<std::size_t>(best)] == labels[static_cast<std::size_t>(i)]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

double eval_episode(const EpisodeSpec& spec, const DatasetBundle& bundle, const EvalInputs& inputs,
                    const TrainConfig& cfg) {
  std::vector<Index> support_rows, support_labels, query_rows, query_labels;
  for (std::size_t c = 0; c < spec.classes.size(); ++c) {
    for (Index r : spec.support[c]) {
      support_rows.push_back(r);
      support_labels.push_back(spec.classes[c]);
    }
    for (Index r : spec.query[c]) {
      query_rows.push_back(r);
      query_labels.push_back(spec.classes[c]);
    }
  }
  if (support_rows.empty()) throw std::invalid_argument("eval_episode: empty support set");
  if (query_rows.empty()) throw std::invalid_argument("eval_episode: empty query set");

  std::vector<Index> classes = spec.classes;
  std::sort(classes.begin(), classes.end());
  TrainConfig episode_cfg = cfg;
  episode_cfg.seed = spec.seed;
  const auto x_train = model_inputs(bundle, support_rows, inputs.train_on, InterventionMode::none);
  const auto trained = train_logreg(x_train, support_labels, classes, episode_cfg);
  const auto x_query = model_inputs(bundle, query_rows, inputs.eval_on, inputs.mode);
  return classification_accuracy(trained.model, x_query, query_labels);
}

FewShotSummary eval_episodes(std::span<const EpisodeSpec> specs, const DatasetBundle& bundle,
                             const EvalInputs& inputs, const TrainConfig& cfg, std::size_t threads) {
  FewShotSummary out;
  out.per_task.assign(specs.size(), 0.0);
  if (specs.empty()) return out;
  threads = std::clamp<std::size_t>(threads, 1, specs.size());

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < specs.size(); i = next++) {
      try {
        out.per_task[i] = eval_episode(specs[i], bundle, inputs, cfg);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = specs.size();
      }
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);

  const double n = static_cast<double>(specs.size());
  out.mean = std::accumulate(out.per_task.begin(), out.per_task.end(), 0.0) / n;
  double ss = 0.0;
  for (double a : out.per_task) ss += (a - out.mean) * (a - out.mean);
  out.stddev = std::sqrt(ss / n);
  return out;
}

double eval_fullshot(const DatasetBundle& bundle, const EvalInputs& inputs, const TrainConfig& cfg,
                     std::size_t* excluded) {
  const auto train_rows = bundle.split.rows(Split::train);
  const auto all_test_rows = bundle.split.rows(Split::test);
  if (train_rows.empty()) throw DataError("eval_fullshot: empty train split");
  if (all_test_rows.empty()) throw DataError("eval_fullshot: empty test split");
  std::vector<Index> train_labels, test_rows, test_labels;
  for (Index r : train_rows) train_labels.push_back(bundle.split.labels[r]);
  std::vector<bool> trained_class(bundle.vocab.num_composites(), false);
  for (Index c : train_labels) trained_class[c] = true;
  for (Index r : all_test_rows) {
    if (!trained_class[bundle.split.labels[r]]) continue;
    test_rows.push_back(r);
    test_labels.push_back(bundle.split.labels[r]);
  }
  if (excluded) *excluded = all_test_rows.size() - test_rows.size();
  if (test_rows.empty()) throw DataError("eval_fullshot: no test sample belongs to a trained class");

  const auto x_train = model_inputs(bundle, train_rows, inputs.train_on, InterventionMode::none);
  const auto trained = train_logreg(x_train, train_labels, cfg);
  const auto x_test = model_inputs(bundle, test_rows, inputs.eval_on, inputs.mode);
  return classification_accuracy(trained.model, x_test, test_labels);
}

}  // namespace compmap
