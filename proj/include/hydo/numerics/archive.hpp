#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "hydo/numerics/adam.hpp"
#include "hydo/numerics/dense_array.hpp"
#include "hydo/numerics/mlp.hpp"
#include "hydo/numerics/rng.hpp"

namespace hydo {

/// Named collection of arrays, integer vectors and strings with a
/// self-describing binary encoding. Byte layout (all integers and doubles
/// little-endian):
///
///   magic   8 bytes  "HYDOARCH"
///   version u32      1
///   count   u64      number of entries
///   entry*  sorted by name:
///     name_len u32, name bytes
///     kind     u8    0 = f64 array, 1 = u64 vector, 2 = string
///     kind 0:  rank u32, dims u64[rank], values f64[prod(dims)]
///     kind 1:  length u64, values u64[length]
///     kind 2:  length u64, bytes
///
/// Doubles are stored as their IEEE-754 bit patterns, so round trips are
/// bit-exact.
class Archive {
 public:
  using Entry = std::variant<DenseArray, std::vector<std::uint64_t>, std::string>;

  void put(const std::string& name, DenseArray value);
  void put_u64(const std::string& name, std::vector<std::uint64_t> values);
  void put_string(const std::string& name, std::string value);

  bool contains(const std::string& name) const { return entries_.contains(name); }
  const DenseArray& array(const std::string& name) const;
  const std::vector<std::uint64_t>& u64(const std::string& name) const;
  const std::string& string(const std::string& name) const;
  double scalar(const std::string& name) const { return array(name).item(); }
  std::vector<std::string> names() const;

  std::string to_bytes() const;
  static Archive from_bytes(std::string_view bytes);
  void save(const std::filesystem::path& path) const;
  static Archive load(const std::filesystem::path& path);

  bool operator==(const Archive&) const = default;

 private:
  const Entry& entry(const std::string& name) const;
  std::map<std::string, Entry> entries_;
};

void put_mlp(Archive& archive, const std::string& prefix, const MlpParams& params);
MlpParams get_mlp(const Archive& archive, const std::string& prefix);

void put_adam(Archive& archive, const std::string& prefix, const AdamState& state);
AdamState get_adam(const Archive& archive, const std::string& prefix);

void put_rng(Archive& archive, const std::string& name, const RngStream& rng);
RngStream get_rng(const Archive& archive, const std::string& name);

}  // namespace hydo
