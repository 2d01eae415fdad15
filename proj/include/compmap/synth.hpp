#pragma once

#include "compmap/bundle.hpp"

#include <json.hpp>

#include <cstdint>

namespace compmap {

struct SynthConfig {
  std::size_t n_primitives = 60;
  std::size_t n_composites = 40;
  std::size_t min_primitives_per_composite = 2;
  std::size_t max_primitives_per_composite = 6;
  std::size_t n_samples = 4000;
  double flip_noise = 0.0;
  double blur_noise = 0.0;
  double spurious_strength = 0.0;
  double unseen_fraction = 0.25;
  double val_fraction = 0.1;
  double test_fraction = 0.2;
  // Raw "image embedding" width for the projection ablation; 0 disables.
  std::size_t image_embed_dim = 0;
  std::uint64_t seed = 0;

  void validate() const;  // throws UsageError
  bool operator==(const SynthConfig&) const = default;
};

void to_json(nlohmann::json& j, const SynthConfig& c);
void from_json(const nlohmann::json& j, SynthConfig& c);

DatasetBundle generate(const SynthConfig& cfg);

}  // namespace compmap
