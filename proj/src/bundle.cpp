#include "compmap/bundle.hpp"

#include "compmap/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

namespace compmap {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::array<char, 4> kMagic{'C', 'M', 'A', 'P'};

void put_u32(char* out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
}

std::uint32_t get_u32(const char* in) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[i])) << (8 * i);
  return v;
}

std::uint32_t checked_u32(Eigen::Index n, const fs::path& path) {
  if (n < 0 || static_cast<std::uint64_t>(n) > 0xffffffffULL) {
    throw DataError(path.string() + ": matrix dimension does not fit the header");
  }
  return static_cast<std::uint32_t>(n);
}

void write_header(std::ostream& os, std::uint32_t rows, std::uint32_t cols) {
  std::array<char, kHeaderBytes> header{};
  std::memcpy(header.data(), kMagic.data(), 4);
  put_u32(header.data() + 4, kFormatVersion);
  put_u32(header.data() + 8, rows);
  put_u32(header.data() + 12, cols);
  os.write(header.data(), header.size());
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot write " + path.string());
  return os;
}

std::ifstream open_in(const fs::path& path) {
  if (!fs::exists(path)) throw DataError("missing file: " + path.string());
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot read " + path.string());
  return is;
}

MatrixHeader parse_header(std::istream& is, const fs::path& path) {
  std::array<char, kHeaderBytes> header{};
  is.read(header.data(), header.size());
  if (is.gcount() != static_cast<std::streamsize>(header.size())) {
    throw DataError(path.string() + ": truncated header");
  }
  if (std::memcmp(header.data(), kMagic.data(), 4) != 0) {
    throw DataError(path.string() + ": magic mismatch");
  }
  MatrixHeader h;
  h.version = get_u32(header.data() + 4);
  h.rows = get_u32(header.data() + 8);
  h.cols = get_u32(header.data() + 12);
  if (h.version != kFormatVersion) {
    throw DataError(path.string() + ": unsupported format version " + std::to_string(h.version));
  }
  return h;
}

void check_payload_size(const fs::path& path, const MatrixHeader& h, std::size_t elem_bytes) {
  const auto expected = kHeaderBytes + std::uint64_t{h.rows} * h.cols * elem_bytes;
  const auto actual = fs::file_size(path);
  if (actual != expected) {
    std::ostringstream msg;
    msg << path.string() << ": payload size mismatch (header declares " << h.rows << "x" << h.cols << ", expected "
        << expected << " bytes, found " << actual << ")";
    throw DataError(msg.str());
  }
}

template <class M>
bool all_finite(const M& m) {
  return m.size() == 0 || m.allFinite();
}

std::string_view level_name(ConceptLevel l) {
  return l == ConceptLevel::per_sample ? "per-sample" : "per-class";
}

ConceptLevel parse_level(const std::string& s) {
  if (s == "per-sample") return ConceptLevel::per_sample;
  if (s == "per-class") return ConceptLevel::per_class;
  throw DataError("matrices.ground_truth.level: unknown level '" + s + "'");
}

void check_index_list(const std::vector<Index>& v, std::size_t bound, const std::string& field) {
  std::unordered_set<Index> seen;
  for (Index i : v) {
    if (i >= bound) {
      throw DataError(field + ": index " + std::to_string(i) + " out of range (< " + std::to_string(bound) + ")");
    }
    if (!seen.insert(i).second) throw DataError(field + ": duplicate index " + std::to_string(i));
  }
}

template <class T>
T get_field(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw DataError(where + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw DataError(where + "." + key + ": " + e.what());
  }
}

struct MatrixEntry {
  std::string file;
  std::string dtype;
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
};

MatrixEntry parse_entry(const json& j, const std::string& where) {
  MatrixEntry e;
  e.file = get_field<std::string>(j, "file", where);
  e.dtype = get_field<std::string>(j, "dtype", where);
  e.rows = get_field<std::uint32_t>(j, "rows", where);
  e.cols = get_field<std::uint32_t>(j, "cols", where);
  return e;
}

void check_declared(const MatrixEntry& e, const MatrixHeader& h, const std::string& where) {
  if (e.rows != h.rows || e.cols != h.cols) {
    std::ostringstream msg;
    msg << where << ": dimension mismatch (manifest declares " << e.rows << "x" << e.cols << ", file has " << h.rows
        << "x" << h.cols << ")";
    throw DataError(msg.str());
  }
}

MatrixF load_f32_entry(const fs::path& dir, const json& j, const std::string& where) {
  const auto e = parse_entry(j, where);
  if (e.dtype != "float32") throw DataError(where + ".dtype: expected float32, got " + e.dtype);
  const auto path = dir / e.file;
  check_declared(e, read_matrix_header(path), where);
  return read_matrix_f32(path);
}

json entry_json(const std::string& file, const char* dtype, Eigen::Index rows, Eigen::Index cols) {
  return json{{"file", file}, {"dtype", dtype}, {"rows", rows}, {"cols", cols}};
}

}  // namespace

// ---------------------------------------------------------------------------

std::optional<Index> ConceptVocabulary::find_primitive(std::string_view name) const {
  auto it = std::find(primitives.begin(), primitives.end(), name);
  if (it == primitives.end()) return std::nullopt;
  return static_cast<Index>(it - primitives.begin());
}

std::optional<Index> ConceptVocabulary::find_composite(std::string_view name) const {
  auto it = std::find(composites.begin(), composites.end(), name);
  if (it == composites.end()) return std::nullopt;
  return static_cast<Index>(it - composites.begin());
}

void ConceptVocabulary::validate() const {
  std::set<std::string_view> names;
  for (const auto& p : primitives) {
    if (!names.insert(p).second) throw DataError("vocabulary.primitives: duplicate concept name '" + p + "'");
  }
  std::set<std::string_view> composite_names;
  for (const auto& q : composites) {
    if (!composite_names.insert(q).second) {
      throw DataError("vocabulary.composites: duplicate concept name '" + q + "'");
    }
    if (names.count(q)) throw DataError("vocabulary: name '" + q + "' is both a primitive and a composite");
  }
  if (gt_composition.size() != composites.size()) {
    throw DataError("vocabulary.gt_composition: expected " + std::to_string(composites.size()) + " entries, got " +
                    std::to_string(gt_composition.size()));
  }
  for (std::size_t q = 0; q < gt_composition.size(); ++q) {
    const auto field = "vocabulary.gt_composition[" + std::to_string(q) + "]";
    if (gt_composition[q].empty()) throw DataError(field + ": empty composition");
    check_index_list(gt_composition[q], primitives.size(), field);
  }
  if (pairs) {
    check_index_list(pairs->attributes, primitives.size(), "vocabulary.pairs.attributes");
    check_index_list(pairs->objects, primitives.size(), "vocabulary.pairs.objects");
    for (Index a : pairs->attributes) {
      if (std::find(pairs->objects.begin(), pairs->objects.end(), a) != pairs->objects.end()) {
        throw DataError("vocabulary.pairs: primitive " + std::to_string(a) + " is both attribute and object");
      }
    }
  }
}

bool operator==(const ActivationMatrix& a, const ActivationMatrix& b) {
  return same_matrix(a.data, b.data) && a.sample_ids == b.sample_ids && a.normalization == b.normalization;
}

bool operator==(const GroundTruthConceptMatrix& a, const GroundTruthConceptMatrix& b) {
  return a.level == b.level && same_matrix(a.data, b.data);
}

bool operator==(const CompositeEmbeddingMatrix& a, const CompositeEmbeddingMatrix& b) {
  return a.source == b.source && same_matrix(a.data, b.data);
}

bool operator==(const DatasetBundle& a, const DatasetBundle& b) {
  if (!(a.vocab == b.vocab && a.activations == b.activations && a.ground_truth == b.ground_truth &&
        a.split == b.split && a.composite_embeddings == b.composite_embeddings)) {
    return false;
  }
  if (a.image_embeddings.has_value() != b.image_embeddings.has_value()) return false;
  return !a.image_embeddings || same_matrix(*a.image_embeddings, *b.image_embeddings);
}

std::string_view to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw DataError("unknown split tag '" + std::string(s) + "'");
}

std::vector<Index> LabeledSplit::rows(Split s) const {
  std::vector<Index> out;
  for (std::size_t i = 0; i < split_of.size(); ++i) {
    if (split_of[i] == s) out.push_back(i);
  }
  return out;
}

bool LabeledSplit::is_seen(Index composite) const {
  return std::find(seen_set.begin(), seen_set.end(), composite) != seen_set.end();
}

Eigen::Ref<const Eigen::Matrix<std::uint8_t, 1, Eigen::Dynamic>> DatasetBundle::gt_row(Index sample) const {
  const Index row = ground_truth.level == ConceptLevel::per_class ? split.labels.at(sample) : sample;
  return ground_truth.data.row(eidx(row));
}

void DatasetBundle::validate() const {
  vocab.validate();
  const auto n = activations.rows();
  const auto p = vocab.num_primitives();
  const auto q = vocab.num_composites();

  if (activations.cols() != p) {
    throw DataError("matrices.activations: dimension mismatch (" + std::to_string(activations.cols()) +
                    " columns, vocabulary has " + std::to_string(p) + " primitives)");
  }
  if (activations.sample_ids.size() != n) {
    throw DataError("samples.ids: " + std::to_string(activations.sample_ids.size()) + " ids for " +
                    std::to_string(n) + " activation rows");
  }
  {
    std::unordered_set<std::string> ids(activations.sample_ids.begin(), activations.sample_ids.end());
    if (ids.size() != n) throw DataError("samples.ids: duplicate sample id");
  }
  if (!all_finite(activations.data)) throw DataError("matrices.activations: NaN or Inf entry");

  const auto& norm = activations.normalization;
  if (norm.kind == NormalizationKind::minmax) {
    if (norm.lo.size() != p || norm.hi.size() != p) {
      throw DataError("normalization: lo/hi length must equal the primitive count");
    }
    for (Index r : split.rows(Split::train)) {
      if (r >= n) break;
      const auto row = activations.data.row(eidx(r));
      if ((row.array() < 0.0f).any() || (row.array() > 1.0f).any()) {
        throw DataError("matrices.activations: minmax-normalized training row " + std::to_string(r) +
                        " outside [0,1]");
      }
    }
  }

  const auto& gt = ground_truth;
  if (static_cast<std::size_t>(gt.data.cols()) != p) {
    throw DataError("matrices.ground_truth: dimension mismatch (" + std::to_string(gt.data.cols()) +
                    " columns, vocabulary has " + std::to_string(p) + " primitives)");
  }
  const auto expected_gt_rows = gt.level == ConceptLevel::per_sample ? n : q;
  if (static_cast<std::size_t>(gt.data.rows()) != expected_gt_rows) {
    throw DataError("matrices.ground_truth: dimension mismatch (" + std::to_string(gt.data.rows()) + " rows, " +
                    std::string(level_name(gt.level)) + " level expects " + std::to_string(expected_gt_rows) + ")");
  }
  if (gt.data.size() > 0 && (gt.data.array() > std::uint8_t{1}).any()) {
    throw DataError("matrices.ground_truth: entries must be 0 or 1");
  }

  if (split.labels.size() != n) throw DataError("samples.labels: length does not match sample count");
  if (split.split_of.size() != n) throw DataError("samples.splits: length does not match sample count");
  for (std::size_t i = 0; i < n; ++i) {
    if (split.labels[i] >= q) {
      throw DataError("samples.labels[" + std::to_string(i) + "]: composite index " +
                      std::to_string(split.labels[i]) + " out of range");
    }
  }
  check_index_list(split.seen_set, q, "seen");
  check_index_list(split.candidate_set, q, "candidates");
  for (Index s : split.seen_set) {
    if (std::find(split.candidate_set.begin(), split.candidate_set.end(), s) == split.candidate_set.end()) {
      throw DataError("seen: composite " + std::to_string(s) + " is not in the candidate set");
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (split.split_of[i] == Split::train && !split.is_seen(split.labels[i])) {
      throw DataError("samples.labels[" + std::to_string(i) + "]: training sample labeled with unseen composite");
    }
  }

  if (composite_embeddings) {
    if (static_cast<std::size_t>(composite_embeddings->data.rows()) != q) {
      throw DataError("matrices.composite_embeddings: dimension mismatch (" +
                      std::to_string(composite_embeddings->data.rows()) + " rows for " + std::to_string(q) +
                      " composites)");
    }
    if (!all_finite(composite_embeddings->data)) {
      throw DataError("matrices.composite_embeddings: NaN or Inf entry");
    }
  }
  if (image_embeddings) {
    if (static_cast<std::size_t>(image_embeddings->rows()) != n) {
      throw DataError("matrices.image_embeddings: dimension mismatch (row count differs from sample count)");
    }
    if (!all_finite(*image_embeddings)) throw DataError("matrices.image_embeddings: NaN or Inf entry");
  }
}

// ---------------------------------------------------------------------------

MatrixHeader read_matrix_header(const fs::path& path) {
  auto is = open_in(path);
  return parse_header(is, path);
}

void write_matrix_f32(const fs::path& path, const MatrixF& m) {
  auto os = open_out(path);
  write_header(os, checked_u32(m.rows(), path), checked_u32(m.cols(), path));
  if constexpr (std::endian::native == std::endian::little) {
    os.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(float)));
  } else {
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      char buf[4];
      put_u32(buf, std::bit_cast<std::uint32_t>(m.data()[i]));
      os.write(buf, 4);
    }
  }
  if (!os) throw DataError("write failed: " + path.string());
}

void write_matrix_u8(const fs::path& path, const MatrixU8& m) {
  auto os = open_out(path);
  write_header(os, checked_u32(m.rows(), path), checked_u32(m.cols(), path));
  os.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size()));
  if (!os) throw DataError("write failed: " + path.string());
}

MatrixF read_matrix_f32(const fs::path& path) {
  auto is = open_in(path);
  const auto h = parse_header(is, path);
  check_payload_size(path, h, sizeof(float));
  MatrixF m(h.rows, h.cols);
  if constexpr (std::endian::native == std::endian::little) {
    is.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(float)));
  } else {
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      char buf[4];
      is.read(buf, 4);
      m.data()[i] = std::bit_cast<float>(get_u32(buf));
    }
  }
  if (!is) throw DataError(path.string() + ": truncated payload");
  return m;
}

MatrixU8 read_matrix_u8(const fs::path& path) {
  auto is = open_in(path);
  const auto h = parse_header(is, path);
  check_payload_size(path, h, 1);
  MatrixU8 m(h.rows, h.cols);
  is.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size()));
  if (!is) throw DataError(path.string() + ": truncated payload");
  return m;
}

// ---------------------------------------------------------------------------

DatasetBundle load_bundle(const fs::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  json manifest;
  {
    auto is = open_in(manifest_path);
    try {
      manifest = json::parse(is);
    } catch (const json::exception& e) {
      throw DataError(manifest_path.string() + ": " + e.what());
    }
  }
  if (manifest.value("format", "") != "compmap-bundle") {
    throw DataError("manifest.format: expected 'compmap-bundle'");
  }
  if (manifest.value("format_version", 0u) != kFormatVersion) {
    throw DataError("manifest.format_version: unsupported version");
  }

  DatasetBundle b;
  const auto vocab_json = get_field<json>(manifest, "vocabulary", "manifest");
  b.vocab.primitives = get_field<std::vector<std::string>>(vocab_json, "primitives", "vocabulary");
  b.vocab.composites = get_field<std::vector<std::string>>(vocab_json, "composites", "vocabulary");
  b.vocab.gt_composition = get_field<std::vector<std::vector<Index>>>(vocab_json, "gt_composition", "vocabulary");
  if (vocab_json.contains("pairs")) {
    const auto& pj = vocab_json.at("pairs");
    b.vocab.pairs = PairStructure{get_field<std::vector<Index>>(pj, "attributes", "vocabulary.pairs"),
                                  get_field<std::vector<Index>>(pj, "objects", "vocabulary.pairs")};
  }

  const auto samples = get_field<json>(manifest, "samples", "manifest");
  b.activations.sample_ids = get_field<std::vector<std::string>>(samples, "ids", "samples");
  b.split.labels = get_field<std::vector<Index>>(samples, "labels", "samples");
  for (const auto& s : get_field<std::vector<std::string>>(samples, "splits", "samples")) {
    b.split.split_of.push_back(parse_split(s));
  }
  b.split.seen_set = get_field<std::vector<Index>>(manifest, "seen", "manifest");
  b.split.candidate_set = get_field<std::vector<Index>>(manifest, "candidates", "manifest");

  const auto norm = get_field<json>(manifest, "normalization", "manifest");
  const auto kind = get_field<std::string>(norm, "kind", "normalization");
  if (kind == "minmax") {
    b.activations.normalization.kind = NormalizationKind::minmax;
    b.activations.normalization.lo = get_field<std::vector<float>>(norm, "lo", "normalization");
    b.activations.normalization.hi = get_field<std::vector<float>>(norm, "hi", "normalization");
  } else if (kind != "none") {
    throw DataError("normalization.kind: unknown kind '" + kind + "'");
  }

  const auto matrices = get_field<json>(manifest, "matrices", "manifest");
  b.activations.data =
      load_f32_entry(dir, get_field<json>(matrices, "activations", "matrices"), "matrices.activations");
  {
    const auto gj = get_field<json>(matrices, "ground_truth", "matrices");
    const auto e = parse_entry(gj, "matrices.ground_truth");
    if (e.dtype != "uint8") throw DataError("matrices.ground_truth.dtype: expected uint8, got " + e.dtype);
    const auto path = dir / e.file;
    check_declared(e, read_matrix_header(path), "matrices.ground_truth");
    b.ground_truth.data = read_matrix_u8(path);
    b.ground_truth.level = parse_level(get_field<std::string>(gj, "level", "matrices.ground_truth"));
  }
  if (matrices.contains("composite_embeddings")) {
    const auto& ej = matrices.at("composite_embeddings");
    b.composite_embeddings = CompositeEmbeddingMatrix{
        load_f32_entry(dir, ej, "matrices.composite_embeddings"),
        get_field<std::string>(ej, "source", "matrices.composite_embeddings")};
  }
  if (matrices.contains("image_embeddings")) {
    b.image_embeddings = load_f32_entry(dir, matrices.at("image_embeddings"), "matrices.image_embeddings");
  }

  b.validate();
  return b;
}

void save_bundle(const DatasetBundle& b, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw DataError("cannot create bundle directory " + dir.string());

  json vocab{{"primitives", b.vocab.primitives},
             {"composites", b.vocab.composites},
             {"gt_composition", b.vocab.gt_composition}};
  if (b.vocab.pairs) vocab["pairs"] = {{"attributes", b.vocab.pairs->attributes}, {"objects", b.vocab.pairs->objects}};

  std::vector<std::string> splits;
  splits.reserve(b.split.split_of.size());
  for (auto s : b.split.split_of) splits.emplace_back(to_string(s));

  json norm{{"kind", b.activations.normalization.kind == NormalizationKind::minmax ? "minmax" : "none"}};
  if (b.activations.normalization.kind == NormalizationKind::minmax) {
    norm["lo"] = b.activations.normalization.lo;
    norm["hi"] = b.activations.normalization.hi;
  }

  json matrices;
  matrices["activations"] =
      entry_json("activations.bin", "float32", b.activations.data.rows(), b.activations.data.cols());
  write_matrix_f32(dir / "activations.bin", b.activations.data);

  matrices["ground_truth"] =
      entry_json("ground_truth.bin", "uint8", b.ground_truth.data.rows(), b.ground_truth.data.cols());
  matrices["ground_truth"]["level"] = level_name(b.ground_truth.level);
  write_matrix_u8(dir / "ground_truth.bin", b.ground_truth.data);

  if (b.composite_embeddings) {
    const auto& m = b.composite_embeddings->data;
    matrices["composite_embeddings"] = entry_json("composite_embeddings.bin", "float32", m.rows(), m.cols());
    matrices["composite_embeddings"]["source"] = b.composite_embeddings->source;
    write_matrix_f32(dir / "composite_embeddings.bin", m);
  }
  if (b.image_embeddings) {
    const auto& m = *b.image_embeddings;
    matrices["image_embeddings"] = entry_json("image_embeddings.bin", "float32", m.rows(), m.cols());
    write_matrix_f32(dir / "image_embeddings.bin", m);
  }

  json manifest{{"format", "compmap-bundle"},
                {"format_version", kFormatVersion},
                {"vocabulary", vocab},
                {"samples", {{"ids", b.activations.sample_ids}, {"labels", b.split.labels}, {"splits", splits}}},
                {"seen", b.split.seen_set},
                {"candidates", b.split.candidate_set},
                {"normalization", norm},
                {"matrices", matrices}};

  auto os = open_out(dir / "manifest.json");
  os << manifest.dump(2) << '\n';
  if (!os) throw DataError("write failed: " + (dir / "manifest.json").string());
}

// ---------------------------------------------------------------------------

ActivationMatrix normalize_activations(const ActivationMatrix& m, std::span<const Index> train_rows) {
  if (m.normalization.kind != NormalizationKind::none) {
    throw std::invalid_argument("normalize_activations: input is already normalized");
  }
  if (train_rows.empty()) throw std::invalid_argument("normalize_activations: empty training row set");

  const auto cols = m.data.cols();
  ActivationMatrix out = m;
  out.normalization.kind = NormalizationKind::minmax;
  out.normalization.lo.resize(static_cast<std::size_t>(cols));
  out.normalization.hi.resize(static_cast<std::size_t>(cols));
  for (Eigen::Index c = 0; c < cols; ++c) {
    float lo = m.data(eidx(train_rows[0]), c);
    float hi = lo;
    for (Index r : train_rows) {
      if (r >= m.rows()) throw std::invalid_argument("normalize_activations: training row out of range");
      lo = std::min(lo, m.data(eidx(r), c));
      hi = std::max(hi, m.data(eidx(r), c));
    }
    out.normalization.lo[static_cast<std::size_t>(c)] = lo;
    out.normalization.hi[static_cast<std::size_t>(c)] = hi;
    const double span = static_cast<double>(hi) - static_cast<double>(lo);
    for (Eigen::Index r = 0; r < m.data.rows(); ++r) {
      out.data(r, c) = span > 0.0
                           ? static_cast<float>((static_cast<double>(m.data(r, c)) - static_cast<double>(lo)) / span)
                           : 0.5f;
    }
  }
  return out;
}

GroundTruthConceptMatrix denoise_to_class_level(const GroundTruthConceptMatrix& gt, std::span<const Index> labels,
                                                std::size_t num_composites) {
  if (gt.level != ConceptLevel::per_sample) {
    throw std::invalid_argument("denoise_to_class_level: input is already class-level");
  }
  if (labels.size() != static_cast<std::size_t>(gt.data.rows())) {
    throw std::invalid_argument("denoise_to_class_level: label count does not match row count");
  }
  const auto cols = gt.data.cols();
  Eigen::Matrix<std::size_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> votes =
      decltype(votes)::Zero(eidx(num_composites), cols);
  std::vector<std::size_t> counts(num_composites, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= num_composites) throw std::invalid_argument("denoise_to_class_level: label out of range");
    ++counts[labels[i]];
    votes.row(eidx(labels[i])) += gt.data.row(eidx(i)).cast<std::size_t>();
  }
  GroundTruthConceptMatrix out;
  out.level = ConceptLevel::per_class;
  out.data = MatrixU8::Zero(eidx(num_composites), cols);
  for (std::size_t q = 0; q < num_composites; ++q) {
    if (counts[q] == 0) throw DataError("denoise_to_class_level: class " + std::to_string(q) + " has no samples");
    for (Eigen::Index c = 0; c < cols; ++c) {
      out.data(eidx(q), c) = 2 * votes(eidx(q), c) > counts[q] ? 1 : 0;
    }
  }
  return out;
}

std::vector<Index> prevalent_primitives(const GroundTruthConceptMatrix& class_level, std::size_t min_class_count) {
  if (class_level.level != ConceptLevel::per_class) {
    throw std::invalid_argument("prevalent_primitives: expects class-level ground truth");
  }
  std::vector<Index> kept;
  for (Eigen::Index c = 0; c < class_level.data.cols(); ++c) {
    const auto active = class_level.data.col(c).cast<std::size_t>().sum();
    if (active >= min_class_count) kept.push_back(static_cast<Index>(c));
  }
  return kept;
}

}  // namespace compmap
