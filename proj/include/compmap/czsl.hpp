#pragma once

#include "compmap/bundle.hpp"
#include "compmap/composition.hpp"
#include "compmap/intervention.hpp"
#include "compmap/types.hpp"

#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace compmap {

struct CurvePoint {
  double bias = 0.0;  // representative bias of the regime (+-inf at the ends)
  double acc_seen = 0.0;
  double acc_unseen = 0.0;
};

struct SweepResult {
  std::vector<int> ks;                         // e.g. {1, 2, 3}
  std::vector<std::vector<CurvePoint>> curves;  // one curve per k, ordered by increasing bias
  std::vector<double> auc;                     // one per k
  // Taken on the first k (k = 1 by default).
  double best_seen = 0.0;
  double best_unseen = 0.0;
  double best_hm = 0.0;

  const std::vector<CurvePoint>& points() const { return curves.front(); }
  double auc_at(int k) const;
};

// 2 s u / (s + u), with HM(0, 0) = 0.
double harmonic_mean(double acc_seen, double acc_unseen);

// Area of the region dominated by the seen/unseen trade-off curve: points
// ordered by bias, trapezoids between consecutive points, the top-left
// point extended horizontally to acc_seen = 0.
double curve_auc(std::span<const CurvePoint> curve);

// Generalized CZSL calibration sweep. `scores` is samples x candidates;
// `candidates` gives the composite index of each column. A bias b is added
// to unseen-candidate scores; score ties go to the lower column. The curve
// has one point per open bias interval between consecutive per-sample
// decision thresholds, so every regime is represented exactly once.
SweepResult sweep_calibration(const MatrixD& scores, std::span<const Index> candidates,
                              std::span<const Index> labels, std::span<const Index> seen_set,
                              std::span<const int> ks = std::span<const int>());

enum class World { closed, open };

std::string_view to_string(World w);
World parse_world(std::string_view s);

// open: every pair of the attribute x object cross product (requires a
// pair-structured vocabulary covering it), or every composite when the
// vocabulary has no pair structure. closed: the provided list, validated.
std::vector<Index> build_candidate_set(const ConceptVocabulary& vocab, World world,
                                       std::optional<std::span<const Index>> closed_list = std::nullopt);

// Appends every missing attribute-object pair to a pair-structured
// vocabulary. Existing composites keep their indices.
ConceptVocabulary complete_cross_product(const ConceptVocabulary& vocab);

struct CzslOptions {
  World world = World::closed;
  InterventionMode mode = InterventionMode::none;
  InputSource eval_on = InputSource::predicted;
  Split split = Split::test;
  std::vector<int> ks{1, 2, 3};
};

// Scores the split's samples over the candidate set and runs the sweep.
SweepResult evaluate_czsl(const DatasetBundle& bundle, const CompositionModel& model, const CzslOptions& opts,
                          const InputTransform* transform = nullptr);

}  // namespace compmap
