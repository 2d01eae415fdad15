#pragma once

#include "compmap/types.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace compmap {

// Attribute/object grouping of primitives for pair-structured vocabularies
// (MIT-States style). Composites of such a vocabulary are attribute-object
// pairs and the open world is the full cross product.
struct PairStructure {
  std::vector<Index> attributes;
  std::vector<Index> objects;

  bool operator==(const PairStructure&) const = default;
};

struct ConceptVocabulary {
  std::vector<std::string> primitives;
  std::vector<std::string> composites;
  // gt_composition[q] = sorted primitive indices that make up composite q.
  std::vector<std::vector<Index>> gt_composition;
  std::optional<PairStructure> pairs;

  std::size_t num_primitives() const { return primitives.size(); }
  std::size_t num_composites() const { return composites.size(); }

  std::optional<Index> find_primitive(std::string_view name) const;
  std::optional<Index> find_composite(std::string_view name) const;

  // Throws DataError naming the offending field.
  void validate() const;

  bool operator==(const ConceptVocabulary&) const = default;
};

enum class NormalizationKind { none, minmax };

struct NormalizationRecord {
  NormalizationKind kind = NormalizationKind::none;
  std::vector<float> lo;
  std::vector<float> hi;

  bool operator==(const NormalizationRecord&) const = default;
};

struct ActivationMatrix {
  MatrixF data;  // samples x primitives
  std::vector<std::string> sample_ids;
  NormalizationRecord normalization;

  std::size_t rows() const { return static_cast<std::size_t>(data.rows()); }
  std::size_t cols() const { return static_cast<std::size_t>(data.cols()); }
};

bool operator==(const ActivationMatrix& a, const ActivationMatrix& b);

enum class ConceptLevel { per_sample, per_class };

struct GroundTruthConceptMatrix {
  MatrixU8 data;  // samples (or composites) x primitives, entries 0/1
  ConceptLevel level = ConceptLevel::per_sample;
};

bool operator==(const GroundTruthConceptMatrix& a, const GroundTruthConceptMatrix& b);

enum class Split : std::uint8_t { train, val, test };

std::string_view to_string(Split s);
Split parse_split(std::string_view s);

struct LabeledSplit {
  std::vector<Index> labels;     // per-sample composite index
  std::vector<Split> split_of;   // per-sample split tag
  std::vector<Index> seen_set;   // C^s
  std::vector<Index> candidate_set;  // C^t (closed world)

  std::vector<Index> rows(Split s) const;
  bool is_seen(Index composite) const;

  bool operator==(const LabeledSplit&) const = default;
};

// Text-side embeddings of composite concepts, one row per vocabulary
// composite (vocabulary order).
struct CompositeEmbeddingMatrix {
  MatrixF data;
  std::string source;
};

bool operator==(const CompositeEmbeddingMatrix& a, const CompositeEmbeddingMatrix& b);

struct DatasetBundle {
  ConceptVocabulary vocab;
  ActivationMatrix activations;
  GroundTruthConceptMatrix ground_truth;
  LabeledSplit split;
  std::optional<CompositeEmbeddingMatrix> composite_embeddings;
  // Raw image-encoder embeddings (samples x embed dim) for the projection
  // ablation; optional.
  std::optional<MatrixF> image_embeddings;

  std::size_t num_samples() const { return activations.rows(); }

  // Ground-truth primitive row for a sample. Per-class matrices are looked
  // up by the sample's label.
  Eigen::Ref<const Eigen::Matrix<std::uint8_t, 1, Eigen::Dynamic>> gt_row(Index sample) const;

  // Full cross-reference validation; throws DataError.
  void validate() const;
};

bool operator==(const DatasetBundle& a, const DatasetBundle& b);

// ---------------------------------------------------------------------------
// Matrix container files: 16-byte header (magic "CMAP", version u32, rows u32,
// cols u32, little-endian) followed by row-major payload.

inline constexpr std::uint32_t kFormatVersion = 1;
inline constexpr std::size_t kHeaderBytes = 16;

struct MatrixHeader {
  std::uint32_t version = kFormatVersion;
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
};

MatrixHeader read_matrix_header(const std::filesystem::path& path);
void write_matrix_f32(const std::filesystem::path& path, const MatrixF& m);
void write_matrix_u8(const std::filesystem::path& path, const MatrixU8& m);
MatrixF read_matrix_f32(const std::filesystem::path& path);
MatrixU8 read_matrix_u8(const std::filesystem::path& path);

DatasetBundle load_bundle(const std::filesystem::path& dir);
void save_bundle(const DatasetBundle& bundle, const std::filesystem::path& dir);

// Per-column min-max scaling with statistics taken from `train_rows` only.
// Constant columns map to 0.5; values outside the training range are not
// clamped.
ActivationMatrix normalize_activations(const ActivationMatrix& m, std::span<const Index> train_rows);

// Class-level ground truth by strict majority vote (ties -> 0). Row q of
// the result is composite q.
GroundTruthConceptMatrix denoise_to_class_level(const GroundTruthConceptMatrix& gt,
                                                std::span<const Index> labels,
                                                std::size_t num_composites);

// Optional attribute filter: keeps primitives that are active (at class
// level) in at least `min_class_count` classes. Returns kept column indices.
std::vector<Index> prevalent_primitives(const GroundTruthConceptMatrix& class_level,
                                        std::size_t min_class_count);

}  // namespace compmap
