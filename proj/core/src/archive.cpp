#include "exost/archive.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace exost {

namespace {

template <typename U>
void put(std::string& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename U>
  U get() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      v |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(U);
    return v;
  }

  std::string_view take(std::size_t n) {
    need(n);
    std::string_view s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw ArchiveError("archive truncated at byte " + std::to_string(pos_));
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_archive(const TensorMap& tensors) {
  std::string out = "EXST";
  put<std::uint32_t>(out, kArchiveVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    if (t.values.size() != numel(t.shape)) {
      throw ArchiveError("tensor '" + name + "' has inconsistent shape");
    }
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape.size()));
    for (std::size_t d : t.shape) put<std::uint64_t>(out, d);
    for (double v : t.values) put<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

TensorMap decode_archive(std::string_view bytes) {
  Reader in(bytes);
  if (in.take(4) != "EXST") throw ArchiveError("not a model archive (bad magic)");
  const auto version = in.get<std::uint32_t>();
  if (version != kArchiveVersion) {
    throw ArchiveError("unsupported archive version " + std::to_string(version));
  }
  const auto count = in.get<std::uint32_t>();
  TensorMap tensors;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name(in.take(in.get<std::uint32_t>()));
    Shape shape(in.get<std::uint32_t>());
    for (auto& d : shape) d = static_cast<std::size_t>(in.get<std::uint64_t>());
    DTensor t(shape);
    for (auto& v : t.values) v = std::bit_cast<double>(in.get<std::uint64_t>());
    t.grad.assign(t.values.size(), 0.0);
    if (!tensors.emplace(std::move(name), std::move(t)).second) {
      throw ArchiveError("duplicate tensor name in archive");
    }
  }
  if (!in.done()) throw ArchiveError("trailing bytes after archive");
  return tensors;
}

void write_archive(const std::filesystem::path& path, const TensorMap& tensors) {
  const std::string bytes = encode_archive(tensors);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ArchiveError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ArchiveError("write failed for " + path.string());
}

TensorMap read_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArchiveError("missing model archive " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return decode_archive(buf.str());
}

}  // namespace exost
