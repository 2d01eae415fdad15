#pragma once

#include "compmap/bundle.hpp"
#include "compmap/types.hpp"

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace compmap {

enum class InterventionMode { none, full, partial };

std::string_view to_string(InterventionMode m);
InterventionMode parse_intervention_mode(std::string_view s);

// Which matrix feeds a model before any intervention is applied.
enum class InputSource { predicted, ground_truth };

std::string_view to_string(InputSource s);
InputSource parse_input_source(std::string_view s);

// none: e unchanged; full: gt verbatim; partial: 1 where gt is active,
// predicted activation elsewhere.
std::vector<float> intervene(std::span<const float> e_row, std::span<const std::uint8_t> gt_row,
                             InterventionMode mode);

// Model inputs for the given sample rows: the chosen source matrix with the
// intervention applied row-wise. Class-level ground truth is looked up by
// each sample's label.
MatrixF model_inputs(const DatasetBundle& bundle, std::span<const Index> rows, InputSource source,
                     InterventionMode mode);

// Metric(H_gt(e_gt)) - Metric(H_pred(e_gt)); lower means more interpretable.
double interpretability_delta(double metric_gt, double metric_pred_on_gt);

}  // namespace compmap
