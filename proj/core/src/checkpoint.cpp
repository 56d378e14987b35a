#include "pdanet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>

namespace pdanet {
namespace {

constexpr char kMagic[4] = {'P', 'D', 'C', 'K'};

static_assert(std::endian::native == std::endian::little,
              "checkpoint encoding assumes a little-endian host");

class Reader {
 public:
  Reader(std::string bytes, std::string path) : buf_(std::move(bytes)), path_(std::move(path)) {}

  void take(void* dst, std::size_t n) {
    if (pos_ + n > buf_.size()) {
      throw std::runtime_error("checkpoint " + path_ + ": truncated (need " + std::to_string(pos_ + n) +
                               " bytes, file has " + std::to_string(buf_.size()) + ")");
    }
    std::memcpy(dst, buf_.data() + pos_, n);
    pos_ += n;
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    take(&v, 4);
    return v;
  }
  std::string str() {
    const std::uint32_t n = u32();
    if (n > buf_.size()) throw std::runtime_error("checkpoint " + path_ + ": corrupt string length");
    std::string s(n, '\0');
    take(s.data(), n);
    return s;
  }
  bool done() const { return pos_ == buf_.size(); }

 private:
  std::string buf_;
  std::string path_;
  std::size_t pos_ = 0;
};

void put_u32(std::string& out, std::uint32_t v) {
  out.append(reinterpret_cast<const char*>(&v), 4);
}

void put_str(std::string& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out += s;
}

}  // namespace

template <typename T>
void save_checkpoint(PdanetModel<T>& model, const std::string& path) {
  std::string out(kMagic, 4);
  put_u32(out, kCheckpointVersion);
  put_u32(out, sizeof(T));
  put_str(out, to_text(model.config()));
  const auto params = model.parameters();
  put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const auto* p : params) {
    put_str(out, p->name);
    const Shape s = p->value.shape();
    put_u32(out, static_cast<std::uint32_t>(s.channels));
    put_u32(out, static_cast<std::uint32_t>(s.height));
    put_u32(out, static_cast<std::uint32_t>(s.width));
    out.append(reinterpret_cast<const char*>(p->value.data()), p->value.size() * sizeof(T));
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw std::runtime_error("checkpoint: write failed for " + path);
}

template <typename T>
PdanetModel<T> load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
  Reader in({std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()}, path);

  char magic[4] = {};
  in.take(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw std::runtime_error("checkpoint " + path + ": bad magic");
  const std::uint32_t version = in.u32();
  if (version != kCheckpointVersion) {
    throw std::runtime_error("checkpoint " + path + ": version mismatch (file " + std::to_string(version) +
                             ", expected " + std::to_string(kCheckpointVersion) + ")");
  }
  const std::uint32_t scalar = in.u32();
  if (scalar != sizeof(T)) {
    throw std::runtime_error("checkpoint " + path + ": stored with " + std::to_string(scalar) +
                             "-byte scalars, loader expects " + std::to_string(sizeof(T)));
  }
  PdanetModel<T> model(parse_config(in.str()));
  auto params = model.parameters();
  const std::uint32_t count = in.u32();
  if (count != params.size()) {
    throw std::runtime_error("checkpoint " + path + ": holds " + std::to_string(count) +
                             " tensors, architecture needs " + std::to_string(params.size()));
  }
  for (auto* p : params) {
    const std::string name = in.str();
    Shape s;
    s.channels = static_cast<int>(in.u32());
    s.height = static_cast<int>(in.u32());
    s.width = static_cast<int>(in.u32());
    if (name != p->name || s != p->value.shape()) {
      throw std::runtime_error("checkpoint " + path + ": tensor " + name + to_string(s) +
                               " does not match " + p->name + to_string(p->value.shape()));
    }
    in.take(p->value.data(), p->value.size() * sizeof(T));
  }
  if (!in.done()) throw std::runtime_error("checkpoint " + path + ": trailing bytes");
  return model;
}

template <typename T>
void copy_parameters(PdanetModel<T>& src, PdanetModel<T>& dst) {
  auto a = src.parameters();
  auto b = dst.parameters();
  if (a.size() != b.size()) throw std::invalid_argument("copy_parameters: architecture mismatch");
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i]->value.shape() != b[i]->value.shape()) {
      throw std::invalid_argument("copy_parameters: shape mismatch at " + a[i]->name);
    }
    b[i]->value = a[i]->value;
  }
}

template void save_checkpoint<float>(PdanetModel<float>&, const std::string&);
template void save_checkpoint<double>(PdanetModel<double>&, const std::string&);
template PdanetModel<float> load_checkpoint<float>(const std::string&);
template PdanetModel<double> load_checkpoint<double>(const std::string&);
template void copy_parameters<float>(PdanetModel<float>&, PdanetModel<float>&);
template void copy_parameters<double>(PdanetModel<double>&, PdanetModel<double>&);

}  // namespace pdanet
