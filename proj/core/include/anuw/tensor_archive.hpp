#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "anuw/tensor.hpp"

namespace anuw {

/// Ordered collection of named tensors; the on-disk container shared by
/// model checkpoints, optimizer state and soft-label snapshots.
///
/// Layout (all integers little-endian):
///
///   "ANUW"               4 bytes magic
///   version              u32 (currently 1)
///   tensor count         u64
///   per tensor:
///     name length        u64
///     name               UTF-8 bytes, no terminator
///     rank               u64
///     dims               rank x u64
///     values             prod(dims) x IEEE-754 binary64
class TensorArchive {
 public:
  static constexpr std::uint32_t kVersion = 1;

  void add(std::string name, Tensor value);
  /// Replaces an existing entry or appends a new one.
  void set(const std::string& name, Tensor value);

  bool contains(const std::string& name) const { return find(name) != nullptr; }
  const Tensor* find(const std::string& name) const;
  /// Throws DataError when `name` is absent.
  const Tensor& at(const std::string& name) const;
  double scalar(const std::string& name) const;

  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  std::vector<std::uint8_t> encode() const;
  static TensorArchive decode(const std::vector<std::uint8_t>& bytes);

  void save(const std::filesystem::path& path) const;
  static TensorArchive load(const std::filesystem::path& path);

  friend bool operator==(const TensorArchive&, const TensorArchive&) = default;

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
};

}  // namespace anuw
