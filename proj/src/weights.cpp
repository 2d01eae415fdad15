#include "compmap/weights.hpp"

#include "compmap/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace compmap {

double topk_alignment(const LinearCompositionModel& model, const ConceptVocabulary& vocab,
                      AlignmentAveraging averaging) {
  if (model.input_dim() != vocab.num_primitives()) {
    throw std::invalid_argument("topk_alignment: model width does not match the primitive count");
  }
  if (model.composites.empty()) throw std::invalid_argument("topk_alignment: model has no rows");
  double per_composite_sum = 0.0;
  std::size_t hits_total = 0, slots_total = 0;
  std::vector<Index> order(vocab.num_primitives());
  for (std::size_t row = 0; row < model.composites.size(); ++row) {
    const Index q = model.composites[row];
    if (q >= vocab.num_composites()) throw std::invalid_argument("topk_alignment: composite index out of range");
    const auto& gt = vocab.gt_composition[q];
    if (gt.empty()) throw DataError("topk_alignment: composite '" + vocab.composites[q] + "' has no ground truth");
    const std::size_t k = std::min(gt.size(), order.size());
    std::iota(order.begin(), order.end(), Index{0});
    const auto w = model.weights.row(eidx(row));
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      [&](Index a, Index b) { return w(eidx(a)) > w(eidx(b)) || (w(eidx(a)) == w(eidx(b)) && a < b); });
    std::size_t hits = 0;
    for (std::size_t i = 0; i < k; ++i) {
      if (std::find(gt.begin(), gt.end(), order[i]) != gt.end()) ++hits;
    }
    per_composite_sum += static_cast<double>(hits) / static_cast<double>(gt.size());
    hits_total += hits;
    slots_total += gt.size();
  }
  if (averaging == AlignmentAveraging::micro) {
    return static_cast<double>(hits_total) / static_cast<double>(slots_total);
  }
  return per_composite_sum / static_cast<double>(model.composites.size());
}

std::vector<WeightProfile> export_weight_profiles(const LinearCompositionModel& model,
                                                  const ConceptVocabulary& vocab,
                                                  std::span<const Index> composites) {
  if (model.input_dim() != vocab.num_primitives()) {
    throw std::invalid_argument("export_weight_profiles: model width does not match the primitive count");
  }
  std::vector<WeightProfile> out;
  for (Index q : composites) {
    const auto row = model.row_of(q);
    if (!row) throw std::invalid_argument("export_weight_profiles: composite " + std::to_string(q) + " not in model");
    const Eigen::VectorXd w = model.weights.row(eidx(*row)).cast<double>().transpose();
    const Eigen::ArrayXd e = (w.array() - w.maxCoeff()).exp();
    const Eigen::ArrayXd soft = e / e.sum();
    WeightProfile p;
    p.composite = vocab.composites.at(q);
    const auto& gt = vocab.gt_composition.at(q);
    for (std::size_t j = 0; j < vocab.num_primitives(); ++j) {
      p.entries.push_back({vocab.primitives[j], w(eidx(j)), soft(eidx(j)),
                           std::find(gt.begin(), gt.end(), j) != gt.end()});
    }
    out.push_back(std::move(p));
  }
  return out;
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string profiles_to_csv(std::span<const WeightProfile> profiles) {
  std::ostringstream os;
  os.precision(17);
  os << "composite,primitive,weight,normalized,is_gt\n";
  for (const auto& p : profiles) {
    for (const auto& e : p.entries) {
      os << csv_field(p.composite) << ',' << csv_field(e.primitive) << ',' << e.weight << ',' << e.normalized << ','
         << (e.is_gt ? 1 : 0) << '\n';
    }
  }
  return os.str();
}

nlohmann::json profiles_to_json(std::span<const WeightProfile> profiles) {
  auto arr = nlohmann::json::array();
  for (const auto& p : profiles) {
    auto entries = nlohmann::json::array();
    for (const auto& e : p.entries) {
      entries.push_back({{"primitive", e.primitive}, {"weight", e.weight}, {"normalized", e.normalized}, {"is_gt", e.is_gt}});
    }
    arr.push_back({{"composite", p.composite}, {"entries", entries}});
  }
  return arr;
}

}  // namespace compmap
