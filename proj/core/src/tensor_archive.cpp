#include "anuw/tensor_archive.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <iterator>

namespace anuw {

namespace {

constexpr char kMagic[4] = {'A', 'N', 'U', 'W'};

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  static_assert(std::is_unsigned_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
  }
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      v |= static_cast<T>(bytes_[pos_ + i]) << (8 * i);
    }
    pos_ += sizeof(T);
    return v;
  }

  std::string get_string(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  void need(std::size_t n) const {
    if (n > bytes_.size() - pos_) throw DataError("tensor archive: truncated data");
  }
  // count items of 8 bytes each, without overflowing count * 8
  void need_words(std::uint64_t count) const {
    if (count > (bytes_.size() - pos_) / 8) throw DataError("tensor archive: truncated data");
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void TensorArchive::add(std::string name, Tensor value) {
  if (contains(name)) throw DataError("tensor archive: duplicate entry '" + name + "'");
  entries_.emplace_back(std::move(name), std::move(value));
}

void TensorArchive::set(const std::string& name, Tensor value) {
  for (auto& [n, t] : entries_) {
    if (n == name) {
      t = std::move(value);
      return;
    }
  }
  entries_.emplace_back(name, std::move(value));
}

const Tensor* TensorArchive::find(const std::string& name) const {
  for (const auto& [n, t] : entries_)
    if (n == name) return &t;
  return nullptr;
}

const Tensor& TensorArchive::at(const std::string& name) const {
  const Tensor* t = find(name);
  if (!t) throw DataError("tensor archive: missing entry '" + name + "'");
  return *t;
}

double TensorArchive::scalar(const std::string& name) const {
  const Tensor& t = at(name);
  if (t.size() != 1) {
    throw DataError("tensor archive: entry '" + name + "' is not a scalar");
  }
  return t[0];
}

std::vector<std::uint8_t> TensorArchive::encode() const {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_le<std::uint32_t>(out, kVersion);
  put_le<std::uint64_t>(out, entries_.size());
  for (const auto& [name, t] : entries_) {
    put_le<std::uint64_t>(out, name.size());
    out.insert(out.end(), name.begin(), name.end());
    put_le<std::uint64_t>(out, t.rank());
    for (auto d : t.shape()) put_le<std::uint64_t>(out, d);
    for (double v : t.values()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

TensorArchive TensorArchive::decode(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw DataError("tensor archive: bad magic (expected \"ANUW\")");
  }
  std::vector<std::uint8_t> rest(bytes.begin() + 4, bytes.end());
  Reader r(rest);
  const auto version = r.get<std::uint32_t>();
  if (version != kVersion) {
    throw DataError("tensor archive: unsupported version " + std::to_string(version));
  }
  const auto count = r.get<std::uint64_t>();
  TensorArchive archive;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto name_len = r.get<std::uint64_t>();
    std::string name = r.get_string(name_len);
    const auto rank = r.get<std::uint64_t>();
    r.need_words(rank);
    Shape shape(rank);
    std::uint64_t n = 1;
    for (auto& d : shape) {
      d = r.get<std::uint64_t>();
      if (d != 0 && n > std::numeric_limits<std::uint64_t>::max() / d) {
        throw DataError("tensor archive: element count of '" + name + "' overflows");
      }
      n *= d;
    }
    r.need_words(n);
    std::vector<double> values(n);
    for (auto& v : values) v = std::bit_cast<double>(r.get<std::uint64_t>());
    archive.add(std::move(name), Tensor(std::move(shape), std::move(values)));
  }
  if (!r.done()) throw DataError("tensor archive: trailing bytes after last tensor");
  return archive;
}

void TensorArchive::save(const std::filesystem::path& path) const {
  const auto bytes = encode();
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("cannot open '" + tmp + "' for writing");
    os.write(reinterpret_cast<const char*>(bytes.data()),
             static_cast<std::streamsize>(bytes.size()));
    if (!os) throw DataError("write to '" + tmp + "' failed");
  }
  std::filesystem::rename(tmp, path);
}

TensorArchive TensorArchive::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)),
                                  std::istreambuf_iterator<char>());
  return decode(bytes);
}

}  // namespace anuw
