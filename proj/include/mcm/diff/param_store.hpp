#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace mcm::diff {

using Matrix = Eigen::MatrixXd;

/// Named dense parameter arrays with gradient buffers of identical shape.
/// Entries keep insertion order, which fixes iteration order for optimizers,
/// gradient checks and serialization.
class ParamStore {
public:
  struct Entry {
    std::string name;
    Matrix value;
    Matrix grad;
  };

  /// Adds a new entry; throws std::invalid_argument on duplicate names.
  std::size_t add(std::string name, Matrix value);

  bool contains(std::string_view name) const;
  std::size_t index_of(std::string_view name) const;

  Entry& entry(std::size_t i) { return entries_.at(i); }
  const Entry& entry(std::size_t i) const { return entries_.at(i); }
  Matrix& value(std::string_view name) { return entries_[index_of(name)].value; }
  const Matrix& value(std::string_view name) const { return entries_[index_of(name)].value; }
  Matrix& grad(std::string_view name) { return entries_[index_of(name)].grad; }
  const Matrix& grad(std::string_view name) const { return entries_[index_of(name)].grad; }

  std::size_t size() const noexcept { return entries_.size(); }
  std::size_t scalar_count() const;

  void zero_grad();
  bool grads_finite() const;

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  /// Copies values of every entry that exists in both stores with equal shape.
  void copy_values_from(const ParamStore& other);

private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

} // namespace mcm::diff
