#include "compmap/czsl.hpp"

#include "compmap/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

namespace compmap {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Decision threshold of one sample at top-k. A seen-labeled sample is a hit
// for every bias below its threshold, an unseen-labeled one for every bias
// above it. +-inf encode "always" / "never".
struct Threshold {
  double value = 0.0;
  bool seen_label = true;
};

// (m+1)-th largest value of `v` (m is 0-based).
double nth_largest(std::vector<double> v, std::size_t m) {
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(m), v.end(), std::greater<>());
  return v[m];
}

Threshold sample_threshold(const Eigen::Ref<const Eigen::RowVectorXd>& s, std::size_t label_col,
                           const std::vector<bool>& seen_col, int k) {
  const bool label_seen = seen_col[label_col];
  const double sc = s(eidx(label_col));
  std::size_t same_rank = 0;
  std::vector<double> other;
  for (std::size_t j = 0; j < seen_col.size(); ++j) {
    if (j == label_col) continue;
    const double sj = s(eidx(j));
    if (seen_col[j] == label_seen) {
      if (sj > sc || (sj == sc && j < label_col)) ++same_rank;
    } else {
      other.push_back(sj);
    }
  }
  Threshold t;
  t.seen_label = label_seen;
  const auto budget = static_cast<long>(k) - 1 - static_cast<long>(same_rank);
  if (budget < 0) {
    t.value = label_seen ? -kInf : kInf;  // never a hit
  } else if (static_cast<std::size_t>(budget) >= other.size()) {
    t.value = label_seen ? kInf : -kInf;  // always a hit
  } else {
    const double pivot = nth_largest(std::move(other), static_cast<std::size_t>(budget));
    t.value = label_seen ? sc - pivot : pivot - sc;
  }
  return t;
}

std::vector<CurvePoint> sweep_curve(const std::vector<Threshold>& th, std::size_t n_seen, std::size_t n_unseen) {
  std::vector<double> cuts;
  for (const auto& t : th) {
    if (std::isfinite(t.value)) cuts.push_back(t.value);
  }
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  const std::size_t m = cuts.size();

  // Regime r is the open interval (cuts[r-1], cuts[r]) with +-inf ends.
  std::vector<long> seen_diff(m + 2, 0), unseen_diff(m + 2, 0);
  auto rank = [&](double v) -> std::size_t {
    if (v == -kInf) return 0;
    if (v == kInf) return m + 1;
    return static_cast<std::size_t>(std::lower_bound(cuts.begin(), cuts.end(), v) - cuts.begin()) + 1;
  };
  for (const auto& t : th) {
    const auto i = rank(t.value);
    if (t.seen_label) {
      // hit in regimes 0 .. i-1
      if (i > 0) {
        seen_diff[0] += 1;
        seen_diff[std::min(i, m + 1)] -= 1;
      }
    } else if (i <= m) {
      // hit in regimes i .. m
      unseen_diff[i] += 1;
      unseen_diff[m + 1] -= 1;
    }
  }

  std::vector<CurvePoint> curve;
  curve.reserve(m + 1);
  long seen_hits = 0, unseen_hits = 0;
  for (std::size_t r = 0; r <= m; ++r) {
    seen_hits += seen_diff[r];
    unseen_hits += unseen_diff[r];
    CurvePoint p;
    if (m == 0) {
      p.bias = 0.0;
    } else if (r == 0) {
      p.bias = -kInf;
    } else if (r == m) {
      p.bias = kInf;
    } else {
      p.bias = 0.5 * (cuts[r - 1] + cuts[r]);
    }
    p.acc_seen = static_cast<double>(seen_hits) / static_cast<double>(n_seen);
    p.acc_unseen = static_cast<double>(unseen_hits) / static_cast<double>(n_unseen);
    curve.push_back(p);
  }
  return curve;
}

}  // namespace

double SweepResult::auc_at(int k) const {
  for (std::size_t i = 0; i < ks.size(); ++i) {
    if (ks[i] == k) return auc[i];
  }
  throw std::out_of_range("SweepResult: no AUC for k=" + std::to_string(k));
}

double harmonic_mean(double acc_seen, double acc_unseen) {
  const double s = acc_seen + acc_unseen;
  return s > 0.0 ? 2.0 * acc_seen * acc_unseen / s : 0.0;
}

double curve_auc(std::span<const CurvePoint> curve) {
  if (curve.empty()) return 0.0;
  // Walk from the high-bias end (smallest acc_seen) towards the low-bias end.
  double area = curve.back().acc_seen * curve.back().acc_unseen;
  for (std::size_t i = curve.size() - 1; i > 0; --i) {
    const auto& right = curve[i - 1];
    const auto& left = curve[i];
    area += (right.acc_seen - left.acc_seen) * 0.5 * (right.acc_unseen + left.acc_unseen);
  }
  return area;
}

SweepResult sweep_calibration(const MatrixD& scores, std::span<const Index> candidates, std::span<const Index> labels,
                              std::span<const Index> seen_set, std::span<const int> ks) {
  static constexpr int kDefaultKs[] = {1, 2, 3};
  if (ks.empty()) ks = kDefaultKs;
  if (static_cast<std::size_t>(scores.cols()) != candidates.size()) {
    throw std::invalid_argument("sweep_calibration: score columns do not match candidate count");
  }
  if (static_cast<std::size_t>(scores.rows()) != labels.size()) {
    throw std::invalid_argument("sweep_calibration: score rows do not match label count");
  }
  for (int k : ks) {
    if (k < 1) throw std::invalid_argument("sweep_calibration: k must be positive");
  }

  const std::set<Index> seen(seen_set.begin(), seen_set.end());
  std::map<Index, std::size_t> column;
  std::vector<bool> seen_col(candidates.size());
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    if (!column.emplace(candidates[c], c).second) throw std::invalid_argument("sweep_calibration: duplicate candidate");
    seen_col[c] = seen.count(candidates[c]) > 0;
  }
  std::vector<std::size_t> label_col(labels.size());
  std::size_t n_seen = 0, n_unseen = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto it = column.find(labels[i]);
    if (it == column.end()) {
      throw DataError("sweep_calibration: label " + std::to_string(labels[i]) + " is not in the candidate set");
    }
    label_col[i] = it->second;
    (seen_col[it->second] ? n_seen : n_unseen) += 1;
  }
  if (n_seen == 0) throw DataError("sweep_calibration: evaluation split has no seen-labeled samples");
  if (n_unseen == 0) throw DataError("sweep_calibration: evaluation split has no unseen-labeled samples");
  if (!scores.allFinite()) throw NumericError("sweep_calibration: non-finite score");

  SweepResult out;
  out.ks.assign(ks.begin(), ks.end());
  for (int k : ks) {
    std::vector<Threshold> th(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
      th[i] = sample_threshold(scores.row(eidx(i)), label_col[i], seen_col, k);
    }
    out.curves.push_back(sweep_curve(th, n_seen, n_unseen));
    out.auc.push_back(curve_auc(out.curves.back()));
  }
  for (const auto& p : out.curves.front()) {
    out.best_seen = std::max(out.best_seen, p.acc_seen);
    out.best_unseen = std::max(out.best_unseen, p.acc_unseen);
    out.best_hm = std::max(out.best_hm, harmonic_mean(p.acc_seen, p.acc_unseen));
  }
  return out;
}

// ---------------------------------------------------------------------------

std::string_view to_string(World w) { return w == World::closed ? "closed" : "open"; }

World parse_world(std::string_view s) {
  if (s == "closed") return World::closed;
  if (s == "open") return World::open;
  throw UsageError("unknown world '" + std::string(s) + "' (expected closed or open)");
}

namespace {

std::map<std::pair<Index, Index>, Index> pair_index(const ConceptVocabulary& vocab) {
  std::map<std::pair<Index, Index>, Index> out;
  for (std::size_t q = 0; q < vocab.gt_composition.size(); ++q) {
    const auto& c = vocab.gt_composition[q];
    if (c.size() == 2) {
      out.emplace(std::make_pair(std::min(c[0], c[1]), std::max(c[0], c[1])), q);
    }
  }
  return out;
}

}  // namespace

ConceptVocabulary complete_cross_product(const ConceptVocabulary& vocab) {
  if (!vocab.pairs) throw std::invalid_argument("complete_cross_product: vocabulary has no pair structure");
  ConceptVocabulary out = vocab;
  auto index = pair_index(vocab);
  std::set<std::string> names(vocab.composites.begin(), vocab.composites.end());
  names.insert(vocab.primitives.begin(), vocab.primitives.end());
  for (Index a : vocab.pairs->attributes) {
    for (Index o : vocab.pairs->objects) {
      const auto key = std::make_pair(std::min(a, o), std::max(a, o));
      if (index.count(key)) continue;
      auto name = vocab.primitives.at(a) + " " + vocab.primitives.at(o);
      if (!names.insert(name).second) throw DataError("complete_cross_product: name collision for '" + name + "'");
      index.emplace(key, out.composites.size());
      out.composites.push_back(std::move(name));
      out.gt_composition.push_back({key.first, key.second});
    }
  }
  return out;
}

std::vector<Index> build_candidate_set(const ConceptVocabulary& vocab, World world,
                                       std::optional<std::span<const Index>> closed_list) {
  std::vector<Index> out;
  if (world == World::closed) {
    if (!closed_list) throw std::invalid_argument("build_candidate_set: closed world requires a candidate list");
    out.assign(closed_list->begin(), closed_list->end());
    for (Index q : out) {
      if (q >= vocab.num_composites()) {
        throw DataError("closed_list: composite index " + std::to_string(q) + " out of range");
      }
    }
  } else if (vocab.pairs) {
    const auto index = pair_index(vocab);
    for (Index a : vocab.pairs->attributes) {
      for (Index o : vocab.pairs->objects) {
        auto it = index.find(std::make_pair(std::min(a, o), std::max(a, o)));
        if (it == index.end()) {
          throw DataError("build_candidate_set: vocabulary does not cover the pair (" + vocab.primitives[a] + ", " +
                          vocab.primitives[o] + "); complete the cross product first");
        }
        out.push_back(it->second);
      }
    }
  } else {
    out.resize(vocab.num_composites());
    for (std::size_t q = 0; q < out.size(); ++q) out[q] = q;
  }
  std::sort(out.begin(), out.end());
  if (std::adjacent_find(out.begin(), out.end()) != out.end()) {
    throw DataError("build_candidate_set: duplicate composite in candidate list");
  }
  return out;
}

SweepResult evaluate_czsl(const DatasetBundle& bundle, const CompositionModel& model, const CzslOptions& opts,
                          const InputTransform* transform) {
  const auto rows = bundle.split.rows(opts.split);
  if (rows.empty()) throw DataError("evaluate_czsl: split '" + std::string(to_string(opts.split)) + "' is empty");
  const auto candidates = build_candidate_set(bundle.vocab, opts.world, bundle.split.candidate_set);

  MatrixF inputs;
  if (transform) {
    if (!bundle.image_embeddings) throw DataError("evaluate_czsl: bundle has no image embeddings");
    if (opts.mode != InterventionMode::none) {
      throw UsageError("evaluate_czsl: intervention is undefined for image-embedding inputs");
    }
    MatrixF raw(eidx(rows.size()), bundle.image_embeddings->cols());
    for (std::size_t i = 0; i < rows.size(); ++i) raw.row(eidx(i)) = bundle.image_embeddings->row(eidx(rows[i]));
    inputs = transform->apply(raw);
  } else {
    inputs = model_inputs(bundle, rows, opts.eval_on, opts.mode);
  }
  const CompositeEmbeddingMatrix* emb = bundle.composite_embeddings ? &*bundle.composite_embeddings : nullptr;
  const MatrixD scores = score_matrix(model, inputs, candidates, emb);

  std::vector<Index> labels(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) labels[i] = bundle.split.labels[rows[i]];
  return sweep_calibration(scores, candidates, labels, bundle.split.seen_set, opts.ks);
}

}  // namespace compmap
