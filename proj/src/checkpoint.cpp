#include "pixio/checkpoint.hpp"

#include <array>
#include <cstring>
#include <fstream>
#include <iterator>

namespace pixio::inline PIXIO_PRECISION_NS {

namespace {

constexpr std::array<char, 8> kMagic{'P', 'I', 'X', 'I', 'O', 'C', 'K', 'P'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  template <typename T>
  void le(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) buf_.push_back(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff));
  }
  void text(const std::string& s) {
    le<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  const std::vector<char>& data() const { return buf_; }

 private:
  std::vector<char> buf_;
};

class Reader {
 public:
  explicit Reader(std::vector<char> data) : buf_(std::move(data)) {}
  void bytes(void* p, std::size_t n) {
    if (pos_ + n > buf_.size()) throw FormatError("checkpoint truncated");
    std::memcpy(p, buf_.data() + pos_, n);
    pos_ += n;
  }
  template <typename T>
  T le() {
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      unsigned char c = 0;
      bytes(&c, 1);
      v |= static_cast<std::uint64_t>(c) << (8 * i);
    }
    return static_cast<T>(v);
  }
  std::string text() {
    const auto n = le<std::uint32_t>();
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  std::size_t remaining() const { return buf_.size() - pos_; }

 private:
  std::vector<char> buf_;
  std::size_t pos_ = 0;
};

// Raw element bytes are written little-endian; hosts are assumed little-endian.
static_assert(sizeof(real) == 4 || sizeof(real) == 8);

}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return &t;
  }
  return nullptr;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  Writer w;
  w.bytes(kMagic.data(), kMagic.size());
  w.le<std::uint32_t>(kCheckpointVersion);
  w.le<std::uint32_t>(sizeof(real));
  w.le<std::uint64_t>(ckpt.step);
  w.le<std::uint64_t>(ckpt.optimizer_updates);
  w.text(ckpt.config.to_text());
  w.text(ckpt.rng_state);
  w.le<std::uint32_t>(static_cast<std::uint32_t>(ckpt.tensors.size()));
  std::uint64_t offset = 0;
  for (const auto& [name, t] : ckpt.tensors) {
    w.text(name);
    w.le<std::uint32_t>(static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) w.le<std::uint64_t>(d);
    w.le<std::uint64_t>(offset);
    offset += t.numel();
  }
  for (const auto& [name, t] : ckpt.tensors) w.bytes(t.data(), t.numel() * sizeof(real));

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write checkpoint " + path.string());
    out.write(w.data().data(), static_cast<std::streamsize>(w.data().size()));
    if (!out) throw FormatError("failed writing checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  Reader r(std::vector<char>(std::istreambuf_iterator<char>(in), {}));
  std::array<char, 8> magic{};
  r.bytes(magic.data(), magic.size());
  if (magic != kMagic) throw FormatError(path.string() + " is not a pixio checkpoint (bad magic)");
  const auto version = r.le<std::uint32_t>();
  if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  const auto scalar = r.le<std::uint32_t>();
  if (scalar != sizeof(real)) {
    throw FormatError("checkpoint stores " + std::to_string(scalar * 8) + "-bit values, this build uses " +
                      std::to_string(sizeof(real) * 8));
  }
  Checkpoint ckpt;
  ckpt.step = r.le<std::uint64_t>();
  ckpt.optimizer_updates = r.le<std::uint64_t>();
  ckpt.config = KeyValues::parse(r.text());
  ckpt.rng_state = r.text();
  const auto count = r.le<std::uint32_t>();
  std::vector<std::uint64_t> offsets;
  std::uint64_t expected = 0;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.text();
    const auto rank = r.le<std::uint32_t>();
    if (rank > 8) throw FormatError("checkpoint tensor " + name + " has implausible rank");
    Shape shape(rank);
    for (auto& d : shape) d = r.le<std::uint64_t>();
    const auto off = r.le<std::uint64_t>();
    if (off != expected) throw FormatError("checkpoint tensor directory is inconsistent at " + name);
    expected += shape_numel(shape);
    ckpt.tensors.emplace_back(std::move(name), Tensor(std::move(shape)));
  }
  if (r.remaining() != expected * sizeof(real)) throw FormatError("checkpoint payload size mismatch");
  for (auto& [name, t] : ckpt.tensors) r.bytes(t.data(), t.numel() * sizeof(real));
  return ckpt;
}

void pack_state(Checkpoint& ckpt, const ParamStore& params, const AdamW* optim) {
  for (const auto& e : params.entries()) ckpt.tensors.emplace_back("param/" + e.name, e.var.value());
  if (!optim) return;
  for (std::size_t i = 0; i < params.size(); ++i) {
    ckpt.tensors.emplace_back("adam_m/" + params.entries()[i].name, optim->first_moments()[i]);
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    ckpt.tensors.emplace_back("adam_v/" + params.entries()[i].name, optim->second_moments()[i]);
  }
  ckpt.optimizer_updates = optim->updates();
}

void unpack_state(const Checkpoint& ckpt, ParamStore& params, AdamW* optim) {
  auto fetch = [&](const std::string& name, const Tensor& like) -> const Tensor& {
    const Tensor* t = ckpt.find(name);
    if (!t) throw FormatError("checkpoint lacks tensor " + name);
    if (!t->same_shape(like)) {
      throw FormatError("checkpoint tensor " + name + " has shape " + shape_str(t->shape()) + ", expected " +
                        shape_str(like.shape()));
    }
    return *t;
  };
  std::vector<Tensor> values;
  for (const auto& e : params.entries()) values.push_back(fetch("param/" + e.name, e.var.value()));
  std::vector<Tensor> m, v;
  if (optim) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto& name = params.entries()[i].name;
      m.push_back(fetch("adam_m/" + name, optim->first_moments()[i]));
      v.push_back(fetch("adam_v/" + name, optim->second_moments()[i]));
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    Var p = params.entries()[i].var;
    p.mutable_value() = std::move(values[i]);
  }
  if (optim) {
    optim->first_moments() = std::move(m);
    optim->second_moments() = std::move(v);
    optim->set_updates(ckpt.optimizer_updates);
  }
}

PixioModel model_from_checkpoint(const Checkpoint& ckpt) {
  const ModelConfig cfg = ModelConfig::read(ckpt.config);
  PixioModel model(cfg, 0);
  unpack_state(ckpt, model.params(), nullptr);
  return model;
}

}  // namespace pixio::inline PIXIO_PRECISION_NS
