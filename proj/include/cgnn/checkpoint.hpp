#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cgnn/errors.hpp"
#include "cgnn/tensor.hpp"

namespace cgnn {

enum class DtypeCode : std::uint8_t { F32 = 0, F64 = 1 };

// One named tensor as stored on disk: dtype code, dims, and the raw
// little-endian payload. Bytes are kept verbatim so a file survives a
// load/save cycle untouched.
struct CheckpointEntry {
  DtypeCode dtype = DtypeCode::F32;
  Shape shape;
  std::vector<std::uint8_t> raw;

  bool operator==(const CheckpointEntry&) const = default;
};

// Named-tensor container. File layout:
//   magic "CGNN" | version u16 | entry count u32 | entries...
// and per entry:
//   name length u16 | UTF-8 name | dtype u8 (0=f32, 1=f64) | rank u8 |
//   dims u32 each | raw little-endian data.
// Entries are written sorted by name, all integers little-endian.
class Checkpoint {
 public:
  static constexpr std::uint16_t kVersion = 1;

  void put(const std::string& name, const Tensor<float>& t);
  void put(const std::string& name, const Tensor<double>& t);
  void put_scalar(const std::string& name, double v);

  bool has(const std::string& name) const { return entries_.count(name) != 0; }
  const CheckpointEntry& entry(const std::string& name) const;
  DtypeCode dtype(const std::string& name) const { return entry(name).dtype; }
  std::vector<std::string> names() const;
  std::size_t size() const { return entries_.size(); }

  // Reads an entry back as Real, converting across f32/f64 if needed.
  template <class Real>
  Tensor<Real> get(const std::string& name) const;

  double get_scalar(const std::string& name) const;

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);

  bool operator==(const Checkpoint&) const = default;

 private:
  std::map<std::string, CheckpointEntry> entries_;
};

}  // namespace cgnn
