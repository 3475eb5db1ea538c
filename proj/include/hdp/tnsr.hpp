#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hdp/tensor.hpp"

namespace hdp {

// TNSR container layout (all integers little-endian):
//   "TNSR" | u32 version (1) | u32 entry count
//   per entry: u16 name length | name bytes | u8 ndim | ndim x u32 dims |
//              u8 dtype (0 = f32 LE) | row-major payload
struct TnsrEntry {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> data;

  std::size_t numel() const;
  bool operator==(const TnsrEntry&) const = default;
};

class TnsrFile {
 public:
  static constexpr std::uint32_t kVersion = 1;

  void add(TnsrEntry entry);
  void add(const std::string& name, const Tensor& t);
  void add(const std::string& name, std::vector<std::uint32_t> dims, std::vector<float> data);

  const std::vector<TnsrEntry>& entries() const { return entries_; }
  bool contains(const std::string& name) const;
  const TnsrEntry& get(const std::string& name) const;
  // Entry as a 4-D tensor; lower-rank entries are left-padded with 1s.
  Tensor tensor(const std::string& name) const;

  std::vector<std::uint8_t> encode() const;
  static TnsrFile decode(const std::vector<std::uint8_t>& bytes);

  void save(const std::filesystem::path& path) const;
  static TnsrFile load(const std::filesystem::path& path);

  bool operator==(const TnsrFile&) const = default;

 private:
  std::vector<TnsrEntry> entries_;
};

}  // namespace hdp
