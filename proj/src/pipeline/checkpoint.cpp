#include "zrigf/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <sstream>

#include "zrigf/error.hpp"

namespace zrigf {

namespace {

constexpr char kMagic[] = "ZRIGF01";
constexpr std::size_t kMagicSize = sizeof(kMagic) - 1;

class Writer {
 public:
  void u32(std::uint32_t v) { raw(v); }
  void u64(std::uint64_t v) { raw(v); }
  void f64(double v) { raw(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    out_ += s;
  }
  void f64s(const std::vector<double>& v) {
    u64(v.size());
    for (double x : v) f64(x);
  }
  std::string take() { return std::move(out_); }
  void bytes(const char* p, std::size_t n) { out_.append(p, n); }

 private:
  template <typename U>
  void raw(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& in) : in_(in) {}
  std::uint32_t u32(const char* what) { return raw<std::uint32_t>(what); }
  std::uint64_t u64(const char* what) { return raw<std::uint64_t>(what); }
  double f64(const char* what) { return std::bit_cast<double>(raw<std::uint64_t>(what)); }
  std::string str(const char* what) {
    const auto n = u32(what);
    need(n, what);
    std::string s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::vector<double> f64s(const char* what) {
    const auto n = u64(what);
    need(n * 8, what);
    std::vector<double> v(n);
    for (auto& x : v) x = f64(what);
    return v;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::uint64_t n, const char* what) const {
    if (n > in_.size() - pos_) throw CorruptionError(std::string("checkpoint truncated reading ") + what);
  }
  template <typename U>
  U raw(const char* what) {
    need(sizeof(U), what);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i);
    pos_ += sizeof(U);
    return v;
  }
  const std::string& in_;
  std::size_t pos_ = kMagicSize;
};

}  // namespace

Checkpoint capture_checkpoint(const std::string& stage, const TrainConfig& config, const ModelBundle& model,
                              const AdamState& optimizer, std::size_t step, RngState rng) {
  Checkpoint c;
  c.stage = stage;
  c.config_text = config.to_text();
  c.vocab = model.vocab.words();
  for (const auto& e : model.store.entries()) {
    const auto data = e.tensor.data();
    c.params.push_back({e.name, e.tensor.shape(), std::vector<double>(data.begin(), data.end())});
  }
  c.optimizer = optimizer;
  c.step = step;
  c.rng = rng;
  return c;
}

void load_parameters(const Checkpoint& checkpoint, ModelBundle& model) {
  std::map<std::string, const NamedArray*> by_name;
  for (const auto& a : checkpoint.params) by_name[a.name] = &a;
  for (const auto& e : model.store.entries()) {
    const auto it = by_name.find(e.name);
    if (it == by_name.end()) throw FormatError("checkpoint has no tensor " + e.name);
    if (it->second->shape != e.tensor.shape()) {
      throw FormatError("tensor " + e.name + " has shape " + shape_to_string(it->second->shape) +
                        " in the checkpoint but " + shape_to_string(e.tensor.shape()) + " in the model");
    }
  }
  if (by_name.size() != model.store.entries().size()) throw FormatError("checkpoint has tensors the model lacks");
  for (const auto& e : model.store.entries()) {
    Tensor t = e.tensor;
    const auto& src = by_name[e.name]->values;
    std::copy(src.begin(), src.end(), t.mutable_data().begin());
  }
}

ModelBundle restore_model(const Checkpoint& checkpoint) {
  const TrainConfig config = checkpoint.config();
  ModelBundle model = make_model(config.model, Vocabulary::from_words(checkpoint.vocab), config.seed);
  load_parameters(checkpoint, model);
  return model;
}

std::string serialize_checkpoint(const Checkpoint& c) {
  Writer w;
  w.bytes(kMagic, kMagicSize);
  w.u32(Checkpoint::kVersion);
  w.str(c.stage);
  w.str(c.config_text);
  w.u32(static_cast<std::uint32_t>(c.vocab.size()));
  for (const auto& word : c.vocab) w.str(word);
  w.u32(static_cast<std::uint32_t>(c.params.size()));
  for (const auto& a : c.params) {
    w.str(a.name);
    w.u32(static_cast<std::uint32_t>(a.shape.size()));
    for (auto d : a.shape) w.u64(d);
    w.f64s(a.values);
  }
  w.u64(c.optimizer.step);
  w.u32(static_cast<std::uint32_t>(c.optimizer.moments.size()));
  for (const auto& [name, m] : c.optimizer.moments) {
    w.str(name);
    w.f64s(m.m);
    w.f64s(m.v);
  }
  w.u64(c.step);
  w.u64(c.rng.key);
  w.u64(c.rng.counter);
  return w.take();
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  if (bytes.size() < kMagicSize || bytes.compare(0, kMagicSize, kMagic) != 0) {
    throw FormatError("not a ZRIGF01 checkpoint");
  }
  Reader r(bytes);
  if (const auto version = r.u32("version"); version != Checkpoint::kVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint c;
  c.stage = r.str("stage");
  c.config_text = r.str("config");
  const auto words = r.u32("vocabulary size");
  for (std::uint32_t i = 0; i < words; ++i) c.vocab.push_back(r.str("vocabulary"));
  const auto arrays = r.u32("tensor count");
  for (std::uint32_t i = 0; i < arrays; ++i) {
    NamedArray a;
    a.name = r.str("tensor name");
    const auto rank = r.u32("tensor rank");
    for (std::uint32_t d = 0; d < rank; ++d) a.shape.push_back(r.u64("tensor shape"));
    a.values = r.f64s("tensor values");
    if (a.values.size() != shape_numel(a.shape)) throw CorruptionError("tensor " + a.name + " size disagrees with shape");
    c.params.push_back(std::move(a));
  }
  c.optimizer.step = r.u64("optimizer step");
  const auto moments = r.u32("moment count");
  for (std::uint32_t i = 0; i < moments; ++i) {
    const std::string name = r.str("moment name");
    AdamMoments m;
    m.m = r.f64s("first moment");
    m.v = r.f64s("second moment");
    c.optimizer.moments[name] = std::move(m);
  }
  c.step = r.u64("step");
  c.rng.key = r.u64("rng key");
  c.rng.counter = r.u64("rng counter");
  if (!r.done()) throw CorruptionError("trailing bytes after checkpoint");
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestionError("cannot write " + path.string());
  const std::string bytes = serialize_checkpoint(checkpoint);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IngestionError("failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

}  // namespace zrigf
