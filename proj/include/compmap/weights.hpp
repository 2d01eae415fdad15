#pragma once

#include "compmap/bundle.hpp"
#include "compmap/composition.hpp"

#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace compmap {

enum class AlignmentAveraging {
  per_composite,  // mean over composites of |topk & gt| / k_q
  micro,          // total hits / total gt slots
};

// For each model row q with k_q ground-truth primitives, the k_q largest
// weights (ties to the lower primitive index) are compared to the truth.
double topk_alignment(const LinearCompositionModel& model, const ConceptVocabulary& vocab,
                      AlignmentAveraging averaging = AlignmentAveraging::per_composite);

struct WeightProfileEntry {
  std::string primitive;
  double weight = 0.0;
  double normalized = 0.0;  // softmax over the row
  bool is_gt = false;
};

struct WeightProfile {
  std::string composite;
  std::vector<WeightProfileEntry> entries;  // primitive order
};

std::vector<WeightProfile> export_weight_profiles(const LinearCompositionModel& model,
                                                  const ConceptVocabulary& vocab,
                                                  std::span<const Index> composites);

std::string profiles_to_csv(std::span<const WeightProfile> profiles);
nlohmann::json profiles_to_json(std::span<const WeightProfile> profiles);

}  // namespace compmap
