#include "compmap/synth.hpp"

#include "compmap/errors.hpp"
#include "compmap/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

namespace compmap {

using nlohmann::json;

namespace {

double log_binomial(std::size_t n, std::size_t k) {
  return std::lgamma(static_cast<double>(n) + 1) - std::lgamma(static_cast<double>(k) + 1) -
         std::lgamma(static_cast<double>(n - k) + 1);
}

std::string numbered(char prefix, std::size_t i, std::size_t total) {
  const int width = total > 1 ? static_cast<int>(std::to_string(total - 1).size()) : 1;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%c%0*zu", prefix, width, i);
  return buf;
}

std::vector<std::vector<Index>> draw_compositions(const SynthConfig& cfg, Rng& rng) {
  double total = 0.0;
  for (auto s = cfg.min_primitives_per_composite; s <= cfg.max_primitives_per_composite; ++s) {
    total += std::exp(log_binomial(cfg.n_primitives, s));
  }
  if (total + 0.5 < static_cast<double>(cfg.n_composites)) {
    throw DataError("synth: infeasible config (" + std::to_string(cfg.n_composites) +
                    " composites but only " + std::to_string(static_cast<long long>(total + 0.5)) +
                    " distinct primitive subsets)");
  }

  std::set<std::vector<Index>> used;
  std::vector<std::vector<Index>> out;
  const std::size_t size_span = cfg.max_primitives_per_composite - cfg.min_primitives_per_composite + 1;
  if (total < 20.0 * static_cast<double>(cfg.n_composites)) {
    // Dense regime: enumerate every admissible subset and pick without replacement.
    std::vector<std::vector<Index>> all;
    for (auto size = cfg.min_primitives_per_composite; size <= cfg.max_primitives_per_composite; ++size) {
      std::vector<bool> pick(cfg.n_primitives, false);
      std::fill(pick.begin(), pick.begin() + static_cast<std::ptrdiff_t>(size), true);
      do {
        std::vector<Index> set;
        for (std::size_t j = 0; j < cfg.n_primitives; ++j) {
          if (pick[j]) set.push_back(j);
        }
        all.push_back(std::move(set));
      } while (std::prev_permutation(pick.begin(), pick.end()));
    }
    for (auto i : rng.sample_without_replacement(all.size(), cfg.n_composites)) out.push_back(all[i]);
    return out;
  }
  while (out.size() < cfg.n_composites) {
    const auto size = cfg.min_primitives_per_composite + rng.index(size_span);
    auto set = rng.sample_without_replacement(cfg.n_primitives, size);
    std::sort(set.begin(), set.end());
    if (used.insert(set).second) out.push_back(std::move(set));
  }
  return out;
}

// Adds primitives that no seen composite uses to seen composites with room,
// so every primitive varies across training rows.
void cover_primitives(std::vector<std::vector<Index>>& comps, const std::vector<Index>& seen,
                      const SynthConfig& cfg, Rng& rng) {
  std::vector<bool> covered(cfg.n_primitives, false);
  for (Index q : seen) {
    for (Index p : comps[q]) covered[p] = true;
  }
  std::set<std::vector<Index>> used(comps.begin(), comps.end());
  for (std::size_t p = 0; p < cfg.n_primitives; ++p) {
    if (covered[p]) continue;
    std::vector<Index> order = seen;
    rng.shuffle(order);
    for (Index q : order) {
      if (comps[q].size() >= cfg.max_primitives_per_composite) continue;
      auto grown = comps[q];
      grown.push_back(p);
      std::sort(grown.begin(), grown.end());
      if (used.count(grown)) continue;
      used.erase(comps[q]);
      used.insert(grown);
      comps[q] = std::move(grown);
      covered[p] = true;
      break;
    }
  }
}

}  // namespace

void SynthConfig::validate() const {
  auto fail = [](const std::string& m) { throw UsageError("synth config: " + m); };
  if (n_primitives == 0 || n_composites == 0 || n_samples == 0) fail("counts must be positive");
  if (min_primitives_per_composite == 0) fail("min_primitives_per_composite must be positive");
  if (min_primitives_per_composite > max_primitives_per_composite) fail("primitives_per_composite range is empty");
  if (max_primitives_per_composite > n_primitives) fail("max_primitives_per_composite exceeds n_primitives");
  for (double p : {flip_noise, spurious_strength, unseen_fraction, val_fraction, test_fraction}) {
    if (!(p >= 0.0 && p <= 1.0)) fail("probabilities and fractions must lie in [0,1]");
  }
  if (!(blur_noise >= 0.0)) fail("blur_noise must be nonnegative");
  if (val_fraction + test_fraction >= 1.0) fail("val_fraction + test_fraction must be below 1");
  if (n_samples < n_composites) fail("n_samples must be at least n_composites");
}

void to_json(json& j, const SynthConfig& c) {
  j = json{{"n_primitives", c.n_primitives},
           {"n_composites", c.n_composites},
           {"min_primitives_per_composite", c.min_primitives_per_composite},
           {"max_primitives_per_composite", c.max_primitives_per_composite},
           {"n_samples", c.n_samples},
           {"flip_noise", c.flip_noise},
           {"blur_noise", c.blur_noise},
           {"spurious_strength", c.spurious_strength},
           {"unseen_fraction", c.unseen_fraction},
           {"val_fraction", c.val_fraction},
           {"test_fraction", c.test_fraction},
           {"image_embed_dim", c.image_embed_dim},
           {"seed", c.seed}};
}

void from_json(const json& j, SynthConfig& c) {
  json defaults = c;
  for (const auto& [key, _] : j.items()) {
    if (!defaults.contains(key)) throw UsageError("synth config: unknown field '" + key + "'");
  }
  try {
    c.n_primitives = j.value("n_primitives", c.n_primitives);
    c.n_composites = j.value("n_composites", c.n_composites);
    c.min_primitives_per_composite = j.value("min_primitives_per_composite", c.min_primitives_per_composite);
    c.max_primitives_per_composite = j.value("max_primitives_per_composite", c.max_primitives_per_composite);
    c.n_samples = j.value("n_samples", c.n_samples);
    c.flip_noise = j.value("flip_noise", c.flip_noise);
    c.blur_noise = j.value("blur_noise", c.blur_noise);
    c.spurious_strength = j.value("spurious_strength", c.spurious_strength);
    c.unseen_fraction = j.value("unseen_fraction", c.unseen_fraction);
    c.val_fraction = j.value("val_fraction", c.val_fraction);
    c.test_fraction = j.value("test_fraction", c.test_fraction);
    c.image_embed_dim = j.value("image_embed_dim", c.image_embed_dim);
    c.seed = j.value("seed", c.seed);
  } catch (const json::exception& e) {
    throw UsageError(std::string("synth config: ") + e.what());
  }
}

DatasetBundle generate(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const auto p = cfg.n_primitives;
  const auto q = cfg.n_composites;

  auto comps = draw_compositions(cfg, rng);

  const auto n_unseen = static_cast<std::size_t>(std::llround(cfg.unseen_fraction * static_cast<double>(q)));
  if (n_unseen >= q) throw UsageError("synth config: unseen_fraction leaves no seen composites");
  std::vector<bool> unseen(q, false);
  for (auto i : rng.sample_without_replacement(q, n_unseen)) unseen[i] = true;
  std::vector<Index> seen;
  for (std::size_t i = 0; i < q; ++i) {
    if (!unseen[i]) seen.push_back(i);
  }
  cover_primitives(comps, seen, cfg, rng);

  DatasetBundle b;
  for (std::size_t j = 0; j < p; ++j) b.vocab.primitives.push_back(numbered('p', j, p));
  for (std::size_t i = 0; i < q; ++i) b.vocab.composites.push_back(numbered('c', i, q));
  b.vocab.gt_composition = comps;

  // Balanced labels in shuffled order.
  const auto n = cfg.n_samples;
  std::vector<Index> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = i % q;
  rng.shuffle(labels);

  std::vector<std::vector<Index>> members(q);
  for (std::size_t i = 0; i < n; ++i) members[labels[i]].push_back(i);
  std::vector<Split> splits(n, Split::train);
  const double held = cfg.val_fraction + cfg.test_fraction;
  for (std::size_t c = 0; c < q; ++c) {
    const auto& rows = members[c];
    const auto m = rows.size();
    std::size_t n_val = 0, n_test = 0;
    if (unseen[c]) {
      n_val = held > 0.0 ? static_cast<std::size_t>(std::llround(static_cast<double>(m) * cfg.val_fraction / held)) : 0;
      n_test = m - n_val;
    } else {
      n_val = static_cast<std::size_t>(std::llround(static_cast<double>(m) * cfg.val_fraction));
      n_test = static_cast<std::size_t>(std::llround(static_cast<double>(m) * cfg.test_fraction));
      while (n_val + n_test >= m && n_val + n_test > 0) (n_test > 0 ? n_test : n_val) -= 1;
    }
    for (std::size_t i = 0; i < m; ++i) {
      splits[rows[i]] = i < n_val ? Split::val : (i < n_val + n_test ? Split::test : Split::train);
    }
  }

  // One fixed off-composition distractor per composite.
  std::vector<long> distractor(q, -1);
  for (std::size_t c = 0; c < q; ++c) {
    if (comps[c].size() == p) continue;
    Index d = rng.index(p);
    while (std::find(comps[c].begin(), comps[c].end(), d) != comps[c].end()) d = rng.index(p);
    distractor[c] = static_cast<long>(d);
  }

  b.ground_truth.level = ConceptLevel::per_sample;
  b.ground_truth.data = MatrixU8::Zero(eidx(n), eidx(p));
  MatrixF raw(eidx(n), eidx(p));
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = labels[i];
    for (Index j : comps[c]) b.ground_truth.data(eidx(i), eidx(j)) = 1;
    auto row = raw.row(eidx(i));
    row = b.ground_truth.data.row(eidx(i)).cast<float>();
    if (cfg.spurious_strength > 0.0 && distractor[c] >= 0 && rng.bernoulli(cfg.spurious_strength)) {
      row(distractor[c]) = 1.0f;
    }
    if (cfg.flip_noise > 0.0) {
      for (Eigen::Index j = 0; j < row.size(); ++j) {
        if (rng.bernoulli(cfg.flip_noise)) row(j) = 1.0f - row(j);
      }
    }
    if (cfg.blur_noise > 0.0) {
      for (Eigen::Index j = 0; j < row.size(); ++j) row(j) += static_cast<float>(cfg.blur_noise * rng.normal());
    }
  }

  b.activations.data = raw;
  b.activations.sample_ids.reserve(n);
  for (std::size_t i = 0; i < n; ++i) b.activations.sample_ids.push_back(numbered('s', i, n));
  b.split.labels = labels;
  b.split.split_of = splits;
  b.split.seen_set = seen;
  b.split.candidate_set.resize(q);
  for (std::size_t i = 0; i < q; ++i) b.split.candidate_set[i] = i;
  b.activations = normalize_activations(b.activations, b.split.rows(Split::train));

  CompositeEmbeddingMatrix emb;
  emb.source = "synthetic";
  emb.data = MatrixF::Zero(eidx(q), eidx(p));
  for (std::size_t c = 0; c < q; ++c) {
    for (Index j : comps[c]) emb.data(eidx(c), eidx(j)) = 1.0f;
  }
  b.composite_embeddings = std::move(emb);

  if (cfg.image_embed_dim > 0) {
    const auto dim = eidx(cfg.image_embed_dim);
    MatrixF mixing(dim, eidx(p));
    const double scale = 1.0 / std::sqrt(static_cast<double>(p));
    for (Eigen::Index i = 0; i < mixing.size(); ++i) mixing.data()[i] = static_cast<float>(scale * rng.normal());
    MatrixF img = raw * mixing.transpose();
    for (Eigen::Index i = 0; i < img.size(); ++i) img.data()[i] += static_cast<float>(0.05 * rng.normal());
    b.image_embeddings = std::move(img);
  }

  b.validate();
  return b;
}

}  // namespace compmap
