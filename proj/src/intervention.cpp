#include "compmap/intervention.hpp"

#include "compmap/errors.hpp"

#include <stdexcept>
#include <string>

namespace compmap {

std::string_view to_string(InterventionMode m) {
  switch (m) {
    case InterventionMode::none: return "none";
    case InterventionMode::full: return "full";
    case InterventionMode::partial: return "partial";
  }
  return "?";
}

InterventionMode parse_intervention_mode(std::string_view s) {
  if (s == "none") return InterventionMode::none;
  if (s == "full") return InterventionMode::full;
  if (s == "partial") return InterventionMode::partial;
  throw UsageError("unknown intervention mode '" + std::string(s) + "'");
}

std::string_view to_string(InputSource s) {
  return s == InputSource::predicted ? "pred" : "gt";
}

InputSource parse_input_source(std::string_view s) {
  if (s == "pred") return InputSource::predicted;
  if (s == "gt") return InputSource::ground_truth;
  throw UsageError("unknown input source '" + std::string(s) + "' (expected pred or gt)");
}

std::vector<float> intervene(std::span<const float> e_row, std::span<const std::uint8_t> gt_row,
                             InterventionMode mode) {
  if (e_row.size() != gt_row.size()) throw std::invalid_argument("intervene: length mismatch");
  std::vector<float> out(e_row.begin(), e_row.end());
  switch (mode) {
    case InterventionMode::none:
      break;
    case InterventionMode::full:
      for (std::size_t j = 0; j < out.size(); ++j) out[j] = gt_row[j] ? 1.0f : 0.0f;
      break;
    case InterventionMode::partial:
      for (std::size_t j = 0; j < out.size(); ++j) {
        if (gt_row[j]) out[j] = 1.0f;
      }
      break;
  }
  return out;
}

MatrixF model_inputs(const DatasetBundle& bundle, std::span<const Index> rows, InputSource source,
                     InterventionMode mode) {
  const auto p = eidx(bundle.vocab.num_primitives());
  MatrixF out(eidx(rows.size()), p);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto r = rows[i];
    if (r >= bundle.num_samples()) throw std::invalid_argument("model_inputs: sample row out of range");
    const auto gt = bundle.gt_row(r);
    auto dst = out.row(eidx(i));
    if (source == InputSource::predicted) {
      dst = bundle.activations.data.row(eidx(r));
    } else {
      dst = gt.cast<float>();
    }
    switch (mode) {
      case InterventionMode::none:
        break;
      case InterventionMode::full:
        dst = gt.cast<float>();
        break;
      case InterventionMode::partial:
        for (Eigen::Index j = 0; j < p; ++j) {
          if (gt(j)) dst(j) = 1.0f;
        }
        break;
    }
  }
  return out;
}

double interpretability_delta(double metric_gt, double metric_pred_on_gt) {
  return metric_gt - metric_pred_on_gt;
}

}  // namespace compmap
