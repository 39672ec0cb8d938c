#include "hcmgan/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "hcmgan/errors.hpp"

namespace hcmgan::gan {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[8] = {'H', 'C', 'M', 'G', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::vector<std::uint8_t>& out, T value) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
  out.insert(out.end(), p, p + sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> blob) : blob_(blob) {}

  template <typename T>
  T get() {
    if (pos_ + sizeof(T) > blob_.size()) throw FormatError("checkpoint truncated");
    T v;
    std::memcpy(&v, blob_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  void bytes(void* dst, std::size_t n) {
    if (pos_ + n > blob_.size()) throw FormatError("checkpoint truncated");
    std::memcpy(dst, blob_.data() + pos_, n);
    pos_ += n;
  }
  bool done() const { return pos_ == blob_.size(); }

 private:
  std::span<const std::uint8_t> blob_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> save_parameters(Profile profile, std::span<const Tensor> params) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, profile == Profile::Mlp ? 0U : 1U);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p.rank()));
    for (auto d : p.shape()) put<std::uint64_t>(out, d);
  }
  for (const auto& p : params) {
    const auto* bytes = reinterpret_cast<const std::uint8_t*>(p.values().data());
    out.insert(out.end(), bytes, bytes + p.size() * sizeof(double));
  }
  return out;
}

void load_parameters(std::span<const std::uint8_t> blob, Profile profile, std::span<const Tensor> params) {
  Reader r(blob);
  char magic[8];
  r.bytes(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof magic) != 0) throw FormatError("not a checkpoint blob (bad magic)");
  if (r.get<std::uint32_t>() != kVersion) throw FormatError("unsupported checkpoint version");
  const auto prof = r.get<std::uint32_t>();
  if (prof != (profile == Profile::Mlp ? 0U : 1U)) throw FormatError("checkpoint profile mismatch");
  const auto count = r.get<std::uint32_t>();
  if (count != params.size()) {
    throw FormatError("checkpoint holds " + std::to_string(count) + " tensors, expected " +
                      std::to_string(params.size()));
  }
  for (const auto& p : params) {
    const auto rank = r.get<std::uint32_t>();
    Shape s(rank);
    for (auto& d : s) d = static_cast<std::size_t>(r.get<std::uint64_t>());
    if (s != p.shape()) throw FormatError("checkpoint shape " + shape_str(s) + " != " + shape_str(p.shape()));
  }
  for (const auto& p : params) {
    Tensor target = p;
    r.bytes(target.mutable_values().data(), p.size() * sizeof(double));
  }
  if (!r.done()) throw FormatError("checkpoint has trailing bytes");
}

void write_blob(const std::filesystem::path& path, std::span<const std::uint8_t> blob) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<std::uint8_t> read_blob(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace hcmgan::gan
