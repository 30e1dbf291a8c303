#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "tenet/convnet.hpp"

namespace tenet {
namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

constexpr std::array<char, 8> kMagic = {'T', 'E', 'N', 'E', 'T', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path)
      : out_(path, std::ios::binary | std::ios::trunc), path_(path) {
    if (!out_) throw IoError("cannot open " + path.string() + " for writing");
  }
  template <typename T>
  void pod(const T& v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void bytes(const void* p, std::size_t n) {
    out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  }
  void str(const std::string& s) {
    pod(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void tensor(const Tensor& t) {
    pod(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) pod(static_cast<std::uint64_t>(d));
    bytes(t.raw(), t.size() * sizeof(float));
  }
  void finish() {
    out_.flush();
    if (!out_) throw IoError("write failed: " + path_.string());
  }

 private:
  std::ofstream out_;
  std::filesystem::path path_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path)
      : in_(path, std::ios::binary), path_(path) {
    if (!in_) throw IoError("cannot open checkpoint " + path.string());
  }
  template <typename T>
  T pod() {
    T v{};
    bytes(&v, sizeof(T));
    return v;
  }
  void bytes(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!in_) {
      throw std::runtime_error("truncated checkpoint " + path_.string() +
                               " at offset " + std::to_string(offset_));
    }
    offset_ += n;
  }
  std::string str() {
    const auto n = pod<std::uint32_t>();
    if (n > (1u << 20)) throw std::runtime_error("corrupt checkpoint string length");
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  Tensor tensor() {
    const auto rank = pod<std::uint32_t>();
    if (rank > 8) throw std::runtime_error("corrupt checkpoint tensor rank");
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(pod<std::uint64_t>());
    Tensor t(shape);
    bytes(t.raw(), t.size() * sizeof(float));
    return t;
  }

 private:
  std::ifstream in_;
  std::filesystem::path path_;
  std::size_t offset_ = 0;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ConvNet& model,
                     const TrainState* state) {
  // Write to a sibling temp file and rename so a crash never leaves a torn file.
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    Writer w(tmp);
    w.bytes(kMagic.data(), kMagic.size());
    w.pod(kVersion);
    w.str(to_string(model.spec()));
    w.pod(static_cast<std::uint32_t>(model.params().size()));
    for (const Parameter& p : model.params()) {
      w.str(p.name);
      w.tensor(p.value);
    }
    w.pod(static_cast<std::uint8_t>(state != nullptr));
    if (state != nullptr) {
      w.pod(state->epoch);
      w.pod(state->step);
      w.pod(state->metrics_rows);
      w.pod(state->best_val_error);
      w.pod(static_cast<std::uint32_t>(state->optimizer.velocity.size()));
      for (const Tensor& v : state->optimizer.velocity) w.tensor(v);
    }
    w.finish();
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  Reader r(path);
  std::array<char, 8> magic{};
  r.bytes(magic.data(), magic.size());
  if (magic != kMagic) throw std::runtime_error(path.string() + " is not a checkpoint");
  const auto version = r.pod<std::uint32_t>();
  if (version != kVersion) {
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ck{ConvNet::zeros(parse_model_spec(r.str())), std::nullopt};
  const auto count = r.pod<std::uint32_t>();
  if (count != ck.model.params().size()) {
    throw std::runtime_error("checkpoint parameter count does not match its model spec");
  }
  for (Parameter& p : ck.model.params()) {
    const std::string name = r.str();
    Tensor value = r.tensor();
    if (name != p.name || value.shape() != p.value.shape()) {
      throw std::runtime_error("checkpoint parameter '" + name + "' does not match '" +
                               p.name + "' " + to_string(p.value.shape()));
    }
    p.value = std::move(value);
  }
  if (r.pod<std::uint8_t>() != 0) {
    TrainState s;
    s.epoch = r.pod<std::uint64_t>();
    s.step = r.pod<std::uint64_t>();
    s.metrics_rows = r.pod<std::uint64_t>();
    s.best_val_error = r.pod<double>();
    const auto nv = r.pod<std::uint32_t>();
    for (std::uint32_t i = 0; i < nv; ++i) s.optimizer.velocity.push_back(r.tensor());
    ck.state = std::move(s);
  }
  return ck;
}

}  // namespace tenet
