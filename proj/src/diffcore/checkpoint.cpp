#include "diffcore/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "common/error.hpp"

namespace whdspot::diff {

namespace {

constexpr std::size_t kMagicLen = sizeof(kCheckpointMagic) - 1;
constexpr std::uint64_t kMaxStringLen = 1ull << 20;

void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

class Reader {
 public:
  Reader(std::istream& is, std::string file) : is_(is), file_(std::move(file)) {}

  std::uint64_t u64() {
    unsigned char b[8];
    bytes(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
  }

  std::string str(std::uint64_t len) {
    if (len > kMaxStringLen) corrupt("string length " + std::to_string(len));
    std::string s(len, '\0');
    bytes(s.data(), len);
    return s;
  }

  void bytes(char* dst, std::size_t n) {
    is_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is_.gcount()) != n) corrupt("unexpected end of file");
  }

  [[noreturn]] void corrupt(const std::string& why) {
    fail(ErrorKind::Format, "checkpoint " + file_ + " is corrupt: " + why);
  }

 private:
  std::istream& is_;
  std::string file_;
};

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) fail(ErrorKind::Io, "cannot open " + path.string() + " for writing");
  os.write(kCheckpointMagic, kMagicLen);
  put_u64(os, ckpt.descriptor.size());
  os.write(ckpt.descriptor.data(), static_cast<std::streamsize>(ckpt.descriptor.size()));
  put_u64(os, ckpt.tensors.size());
  for (const auto& [name, value] : ckpt.tensors) {
    put_u64(os, name.size());
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u64(os, value.rank());
    for (auto d : value.shape()) put_u64(os, static_cast<std::uint64_t>(d));
    for (double v : value.data()) put_u64(os, std::bit_cast<std::uint64_t>(v));
  }
  os.flush();
  if (!os) fail(ErrorKind::Io, "failed writing " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::Io, "cannot open checkpoint " + path.string());
  Reader r(is, path.string());
  char magic[kMagicLen];
  is.read(magic, kMagicLen);
  if (static_cast<std::size_t>(is.gcount()) != kMagicLen || std::memcmp(magic, kCheckpointMagic, kMagicLen) != 0)
    fail(ErrorKind::Format, path.string() + " is not a checkpoint: expected magic \"" + kCheckpointMagic + "\"");
  Checkpoint ckpt;
  ckpt.descriptor = r.str(r.u64());
  const std::uint64_t count = r.u64();
  if (count > kMaxStringLen) r.corrupt("record count " + std::to_string(count));
  for (std::uint64_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = r.str(r.u64());
    const std::uint64_t rank = r.u64();
    if (rank > 8) r.corrupt("rank " + std::to_string(rank) + " for " + t.name);
    Shape shape;
    std::uint64_t total = 1;
    for (std::uint64_t d = 0; d < rank; ++d) {
      shape.push_back(static_cast<std::int64_t>(r.u64()));
      total *= static_cast<std::uint64_t>(shape.back());
      if (total > (1ull << 32)) r.corrupt("tensor " + t.name + " is implausibly large");
    }
    std::vector<double> data(total);
    for (auto& v : data) v = std::bit_cast<double>(r.u64());
    t.value = Tensor(std::move(shape), std::move(data));
    ckpt.tensors.push_back(std::move(t));
  }
  return ckpt;
}

}  // namespace whdspot::diff
