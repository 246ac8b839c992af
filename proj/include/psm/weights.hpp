#pragma once

// Named parameter bundles and their on-disk format.
//
// File layout (little endian throughout):
//   magic "PSMW" | version u32 | entry count u32
//   per entry: name length u32, UTF-8 name, rows u32, cols u32,
//              rows*cols IEEE-754 f64
//   trailing CRC32 of all preceding bytes
//
// Save followed by load is a bitwise identity, including entry order.

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "psm/matrix.hpp"

namespace psm {

class WeightBundle {
 public:
  struct Entry {
    std::string name;
    std::size_t rows = 0;
    std::size_t cols = 0;
  };

  std::uint64_t seed = 0;  // seed the bundle was generated from, 0 if unknown

  void add(std::string name, Matrix m);
  bool contains(const std::string& name) const;
  const Matrix& at(const std::string& name) const;  // ManifestError if absent
  std::size_t size() const { return order_.size(); }
  const std::vector<std::string>& names() const { return order_; }
  std::vector<Entry> manifest() const;

 private:
  std::vector<std::string> order_;
  std::unordered_map<std::string, Matrix> items_;
};

void save_weights(const WeightBundle& w, const std::string& path);
WeightBundle load_weights(const std::string& path);

// ManifestError unless the bundle holds exactly the expected names/shapes.
void check_manifest(const WeightBundle& w,
                    const std::vector<WeightBundle::Entry>& expected);

// CRC-32 (polynomial 0xEDB88320), chainable across buffers.
std::uint32_t crc32(const void* data, std::size_t len, std::uint32_t crc = 0);

constexpr std::uint32_t kWeightFormatVersion = 1;

}  // namespace psm
