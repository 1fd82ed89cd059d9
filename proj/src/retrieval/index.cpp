#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <thread>

#include "zrigf/error.hpp"
#include "zrigf/retrieval.hpp"

namespace zrigf {

namespace {

constexpr char kIndexMagic[] = "ZRIGFIDX1";
constexpr std::size_t kMagicSize = sizeof(kIndexMagic) - 1;

bool ranks_before(const ScoredImage& a, const ScoredImage& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.id < b.id;
}

std::vector<double> unit(std::span<const double> v) {
  double sq = 0.0;
  for (double x : v) sq += x * x;
  const double norm = std::sqrt(sq);
  if (!(norm > 0.0) || !std::isfinite(norm)) throw ContractError("cannot normalize a zero or non-finite vector");
  std::vector<double> out(v.begin(), v.end());
  for (double& x : out) x /= norm;
  return out;
}

template <typename T>
void put_le(std::ostream& out, T value) {
  using U = std::conditional_t<sizeof(T) == 2, std::uint16_t,
                               std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>>;
  const U bits = std::bit_cast<U>(value);
  char bytes[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
  out.write(bytes, sizeof(U));
}

template <typename T>
T get_le(std::istream& in, const std::string& what) {
  using U = std::conditional_t<sizeof(T) == 2, std::uint16_t,
                               std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>>;
  unsigned char bytes[sizeof(U)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(U))) throw CorruptionError("index truncated reading " + what);
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) bits |= static_cast<U>(bytes[i]) << (8 * i);
  return std::bit_cast<T>(bits);
}

}  // namespace

void ImageIndex::add(const std::string& id, std::span<const double> embedding) {
  if (dim_ == 0 && ids_.empty()) dim_ = embedding.size();
  if (embedding.size() != dim_) {
    throw DimensionError("index dim " + std::to_string(dim_) + " but embedding for '" + id + "' has " +
                         std::to_string(embedding.size()));
  }
  if (std::find(ids_.begin(), ids_.end(), id) != ids_.end()) throw IngestionError("duplicate image id '" + id + "'");
  if (id.size() > 0xffff) throw IngestionError("image id longer than 65535 bytes");
  const auto u = unit(embedding);
  ids_.push_back(id);
  for (double x : u) values_.push_back(static_cast<float>(x));
}

double ImageIndex::score(std::size_t i, std::span<const double> unit_query) const {
  const float* e = values_.data() + i * dim_;
  double s = 0.0;
  for (std::size_t d = 0; d < dim_; ++d) s += static_cast<double>(e[d]) * unit_query[d];
  return std::clamp(s, -1.0, 1.0);
}

std::vector<ScoredImage> ImageIndex::search(std::span<const double> query, std::size_t k, std::size_t shards) const {
  if (k < 1) throw ContractError("k must be at least 1");
  if (k > size()) {
    throw BoundedIndexError("k=" + std::to_string(k) + " exceeds index size " + std::to_string(size()));
  }
  if (query.size() != dim_) {
    throw DimensionError("query dim " + std::to_string(query.size()) + " vs index dim " + std::to_string(dim_));
  }
  const auto q = unit(query);
  shards = std::clamp<std::size_t>(shards, 1, size());

  auto top_of_range = [&](std::size_t begin, std::size_t end) {
    std::vector<ScoredImage> part;
    part.reserve(end - begin);
    for (std::size_t i = begin; i < end; ++i) part.push_back({ids_[i], score(i, q)});
    const std::size_t keep = std::min(k, part.size());
    std::partial_sort(part.begin(), part.begin() + static_cast<std::ptrdiff_t>(keep), part.end(), ranks_before);
    part.resize(keep);
    return part;
  };

  if (shards == 1) return top_of_range(0, size());

  std::vector<std::vector<ScoredImage>> parts(shards);
  std::vector<std::thread> workers;
  for (std::size_t s = 0; s < shards; ++s) {
    const std::size_t begin = size() * s / shards;
    const std::size_t end = size() * (s + 1) / shards;
    workers.emplace_back([&, s, begin, end] { parts[s] = top_of_range(begin, end); });
  }
  for (auto& w : workers) w.join();

  std::vector<ScoredImage> merged;
  for (auto& p : parts) merged.insert(merged.end(), p.begin(), p.end());
  std::partial_sort(merged.begin(), merged.begin() + static_cast<std::ptrdiff_t>(k), merged.end(), ranks_before);
  merged.resize(k);
  return merged;
}

void ImageIndex::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestionError("cannot write " + path.string());
  out.write(kIndexMagic, kMagicSize);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(dim_));
  put_le<std::uint64_t>(out, ids_.size());
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(ids_[i].size()));
    out.write(ids_[i].data(), static_cast<std::streamsize>(ids_[i].size()));
    for (float v : embedding(i)) put_le<float>(out, v);
  }
  if (!out) throw IngestionError("failed writing " + path.string());
}

ImageIndex ImageIndex::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open " + path.string());
  char magic[kMagicSize];
  if (!in.read(magic, kMagicSize) || std::memcmp(magic, kIndexMagic, kMagicSize) != 0) {
    throw FormatError(path.string() + " is not a ZRIGFIDX1 index");
  }
  ImageIndex index(get_le<std::uint32_t>(in, "dim"));
  const auto count = get_le<std::uint64_t>(in, "count");
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto len = get_le<std::uint16_t>(in, "id length");
    std::string id(len, '\0');
    if (!in.read(id.data(), len)) throw CorruptionError("index truncated reading id of entry " + std::to_string(i));
    if (std::find(index.ids_.begin(), index.ids_.end(), id) != index.ids_.end()) {
      throw IngestionError("duplicate image id '" + id + "' in " + path.string());
    }
    index.ids_.push_back(std::move(id));
    for (std::size_t d = 0; d < index.dim_; ++d) index.values_.push_back(get_le<float>(in, "embedding"));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw CorruptionError("trailing bytes after index entries");
  return index;
}

std::string mode_name(RetrievalMode mode) {
  return mode == RetrievalMode::kContextOnly ? "context-only" : "context+response";
}

RetrievalMode parse_mode(const std::string& text) {
  if (text == "context-only") return RetrievalMode::kContextOnly;
  if (text == "context+response") return RetrievalMode::kContextResponse;
  throw ConfigError("unknown retrieval mode '" + text + "'");
}

std::vector<double> RetrievalResult::softmax_scores() const {
  std::vector<double> out;
  if (ranked.empty()) return out;
  const double top = ranked.front().score;
  double total = 0.0;
  for (const auto& r : ranked) total += out.emplace_back(std::exp(r.score - top));
  for (double& p : out) p /= total;
  return out;
}

ImageIndex build_index(const ModelBundle& model, const std::vector<std::pair<std::string, Tensor>>& images) {
  ImageIndex index(model.config.d_shared);
  for (const auto& [id, pixels] : images) {
    const Tensor e = image_embedding(model, pixels);
    index.add(id, e.data());
  }
  return index;
}

ImageIndex build_index(const ModelBundle& model, const ImageBank& images) {
  std::vector<std::pair<std::string, Tensor>> list;
  for (const auto& id : images.ids()) list.emplace_back(id, images.get(id));
  return build_index(model, list);
}

RetrievalResult retrieve_top_k(const ImageIndex& index, const ModelBundle& model, std::span<const int> query,
                               std::size_t k, RetrievalMode mode, std::size_t shards) {
  if (index.size() == 0) throw BoundedIndexError("retrieval from an empty index");
  const Tensor q = text_embedding(model, query);
  RetrievalResult result;
  result.mode = mode;
  result.ranked = index.search(q.data(), k, shards);
  return result;
}

}  // namespace zrigf
