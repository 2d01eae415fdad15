#pragma once

#include "compmap/bundle.hpp"
#include "compmap/composition.hpp"
#include "compmap/intervention.hpp"
#include "compmap/types.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace compmap {

struct EpisodeSpec {
  std::vector<Index> classes;               // n composite indices
  std::vector<std::vector<Index>> support;  // per class, k sample rows
  std::vector<std::vector<Index>> query;    // per class, up to q sample rows
  std::uint64_t seed = 0;
};

struct EpisodeConfig {
  std::size_t n_way = 5;
  std::size_t k_shot = 1;
  std::size_t queries = 15;
  std::size_t tasks = 600;
  std::uint64_t seed = 0;
};

// Samples `tasks` episodes from the sample rows in `pool` (all samples
// when empty). Classes are drawn uniformly without replacement per task.
// If a class cannot supply k + q samples, q shrinks for that class and a
// warning is counted in `shrunk_classes` when provided.
std::vector<EpisodeSpec> sample_episodes(const DatasetBundle& bundle, const EpisodeConfig& cfg,
                                         std::span<const Index> pool = {}, std::size_t* shrunk_classes = nullptr);

struct EvalInputs {
  InputSource train_on = InputSource::predicted;
  InputSource eval_on = InputSource::predicted;
  InterventionMode mode = InterventionMode::none;
};

// Trains a logistic regression on the support set and returns the query
// accuracy.
double eval_episode(const EpisodeSpec& spec, const DatasetBundle& bundle, const EvalInputs& inputs,
                    const TrainConfig& cfg);

struct FewShotSummary {
  double mean = 0.0;
  double stddev = 0.0;
  std::vector<double> per_task;
};

// Episodes are independent and evaluated on `threads` workers; each uses
// the trainer seed derived from (cfg.seed, task index).
FewShotSummary eval_episodes(std::span<const EpisodeSpec> specs, const DatasetBundle& bundle,
                             const EvalInputs& inputs, const TrainConfig& cfg, std::size_t threads = 1);

// One model on the full train split, accuracy on the test samples whose class occurs in training.
// Test samples of classes absent from training are skipped and counted in `excluded`.
double eval_fullshot(const DatasetBundle& bundle, const EvalInputs& inputs, const TrainConfig& cfg,
                     std::size_t* excluded = nullptr);

// Accuracy of a trained linear model on given rows.
double classification_accuracy(const LinearCompositionModel& model, const MatrixF& inputs,
                               std::span<const Index> labels);

}  // namespace compmap
