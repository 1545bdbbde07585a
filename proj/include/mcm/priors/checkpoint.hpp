#pragma once

#include "mcm/diff/param_store.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace mcm::priors {

/// Versioned text container of string metadata and named dense arrays.
/// Values are written as hexfloats, so save/load is bit-exact.
///
///   mcm-archive 1
///   meta <key> <value to end of line>
///   array <name> <rows> <cols>
///   <one line per row>
///   end
class Archive {
public:
  static constexpr int kVersion = 1;

  void set_meta(const std::string& key, const std::string& value);
  std::optional<std::string> meta(const std::string& key) const;
  /// Throws DataError when the key is missing.
  const std::string& require_meta(const std::string& key) const;
  const std::vector<std::pair<std::string, std::string>>& all_meta() const noexcept { return meta_; }

  void set_array(const std::string& name, diff::Matrix value);
  bool has_array(const std::string& name) const;
  /// Throws DataError when the name is missing.
  const diff::Matrix& array(const std::string& name) const;
  const std::vector<std::pair<std::string, diff::Matrix>>& arrays() const noexcept { return arrays_; }

  void write(std::ostream& out) const;
  static Archive read(std::istream& in);
  void save(const std::string& path) const;
  static Archive load(const std::string& path);

private:
  std::vector<std::pair<std::string, std::string>> meta_;
  std::vector<std::pair<std::string, diff::Matrix>> arrays_;
};

/// Stores every parameter value as array "<tag><name>".
void put_params(Archive& ar, const diff::ParamStore& store, const std::string& tag = "param:");

/// Overwrites every parameter of `store` from the archive; throws DataError on
/// a missing name or a shape mismatch.
void get_params(const Archive& ar, diff::ParamStore& store, const std::string& tag = "param:");

} // namespace mcm::priors
