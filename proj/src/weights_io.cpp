#include "vfi/weights_io.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <memory>
#include <stdexcept>
#include <vector>

namespace vfi {

namespace {

constexpr char kMagic[4] = {'E', 'M', 'A', 'V'};
constexpr std::uint32_t kVersion = 1;

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

class Writer {
 public:
  explicit Writer(const std::string& path) : fp_(std::fopen(path.c_str(), "wb")), path_(path) {
    if (!fp_) throw std::runtime_error("cannot write weights file: " + path);
  }
  void bytes(const void* p, std::size_t n) {
    if (std::fwrite(p, 1, n, fp_.get()) != n) {
      throw std::runtime_error("short write on weights file: " + path_);
    }
  }
  void u16(std::uint16_t v) {
    unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>(v >> 8)};
    bytes(b, 2);
  }
  void u32(std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    bytes(b, 4);
  }
  void f32(float f) { u32(std::bit_cast<std::uint32_t>(f)); }

 private:
  FilePtr fp_;
  std::string path_;
};

class Reader {
 public:
  explicit Reader(const std::string& path) : fp_(std::fopen(path.c_str(), "rb")), path_(path) {
    if (!fp_) throw std::runtime_error("cannot open weights file: " + path);
  }
  std::size_t offset() const { return offset_; }
  void bytes(void* p, std::size_t n) {
    if (std::fread(p, 1, n, fp_.get()) != n) {
      throw std::runtime_error("truncated weights file " + path_ + " at byte offset " +
                               std::to_string(offset_));
    }
    offset_ += n;
  }
  std::uint16_t u16() {
    unsigned char b[2];
    bytes(b, 2);
    return std::uint16_t(b[0]) | (std::uint16_t(b[1]) << 8);
  }
  std::uint32_t u32() {
    unsigned char b[4];
    bytes(b, 4);
    return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
           (std::uint32_t(b[3]) << 24);
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str(std::size_t n) {
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }

 private:
  FilePtr fp_;
  std::string path_;
  std::size_t offset_ = 0;
};

ModelConfig read_header(Reader& r, const std::string& path) {
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) {
    throw std::runtime_error("not a weights file (bad magic): " + path);
  }
  const std::uint32_t version = r.u32();
  if (version != kVersion) {
    throw std::runtime_error("unsupported weights version " + std::to_string(version) + " in " +
                             path);
  }
  const std::string variant = r.str(r.u16());
  ModelConfig cfg = ModelConfig::preset(variant);
  cfg.C = int(r.u32());
  cfg.N1 = int(r.u32());
  cfg.N2 = int(r.u32());
  cfg.window_size = int(r.u32());
  return cfg;
}

}  // namespace

void save_weights(const Model& model, const std::string& path) {
  Writer w(path);
  w.bytes(kMagic, 4);
  w.u32(kVersion);
  const std::string variant = model.cfg.name();
  w.u16(std::uint16_t(variant.size()));
  w.bytes(variant.data(), variant.size());
  w.u32(std::uint32_t(model.cfg.C));
  w.u32(std::uint32_t(model.cfg.N1));
  w.u32(std::uint32_t(model.cfg.N2));
  w.u32(std::uint32_t(model.cfg.window_size));

  Model& m = const_cast<Model&>(model);  // parameter traversal only
  auto params = m.parameters();
  w.u32(std::uint32_t(params.size()));
  for (const Parameter* p : params) {
    w.u16(std::uint16_t(p->name.size()));
    w.bytes(p->name.data(), p->name.size());
    w.u32(std::uint32_t(p->value.shape.n));
    w.u32(std::uint32_t(p->value.shape.c));
    w.u32(std::uint32_t(p->value.shape.h));
    w.u32(std::uint32_t(p->value.shape.w));
    for (std::int64_t i = 0; i < p->value.numel(); ++i) w.f32(p->value.ptr()[i]);
  }
}

ModelConfig peek_weights_config(const std::string& path) {
  Reader r(path);
  return read_header(r, path);
}

void load_weights(Model& model, const std::string& path) {
  Reader r(path);
  const ModelConfig file_cfg = read_header(r, path);
  const std::uint32_t count = r.u32();

  auto params = model.parameters();
  const std::size_t walk = std::min<std::size_t>(params.size(), count);
  for (std::size_t i = 0; i < walk; ++i) {
    Parameter& p = *params[i];
    const std::string name = r.str(r.u16());
    Shape s;
    s.n = int(r.u32());
    s.c = int(r.u32());
    s.h = int(r.u32());
    s.w = int(r.u32());
    if (name != p.name || !(s == p.value.shape)) {
      throw std::runtime_error("weights mismatch at parameter '" + p.name + "': file has '" +
                               name + "' with shape " + s.str() + ", model expects " +
                               p.value.shape.str());
    }
    for (std::int64_t k = 0; k < p.value.numel(); ++k) p.value.ptr()[k] = r.f32();
  }
  if (count != params.size()) {
    throw std::runtime_error("weights file " + path + " holds " + std::to_string(count) +
                             " parameters, model expects " + std::to_string(params.size()));
  }
  if (!(file_cfg.C == model.cfg.C && file_cfg.N1 == model.cfg.N1 && file_cfg.N2 == model.cfg.N2 &&
        file_cfg.window_size == model.cfg.window_size &&
        file_cfg.variant == model.cfg.variant)) {
    throw std::runtime_error("weights config block (" + file_cfg.name() +
                             ") disagrees with model config (" + model.cfg.name() + ")");
  }
}

}  // namespace vfi
