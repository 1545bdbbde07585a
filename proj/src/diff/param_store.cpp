#include "mcm/diff/param_store.hpp"

#include <stdexcept>

namespace mcm::diff {

std::size_t ParamStore::add(std::string name, Matrix value) {
  if (index_.count(name) != 0) {
    throw std::invalid_argument("duplicate parameter name: " + name);
  }
  const std::size_t i = entries_.size();
  index_.emplace(name, i);
  Matrix grad = Matrix::Zero(value.rows(), value.cols());
  entries_.push_back(Entry{std::move(name), std::move(value), std::move(grad)});
  return i;
}

bool ParamStore::contains(std::string_view name) const {
  return index_.count(std::string(name)) != 0;
}

std::size_t ParamStore::index_of(std::string_view name) const {
  const auto it = index_.find(std::string(name));
  if (it == index_.end()) {
    throw std::out_of_range("unknown parameter: " + std::string(name));
  }
  return it->second;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += static_cast<std::size_t>(e.value.size());
  return n;
}

void ParamStore::zero_grad() {
  for (auto& e : entries_) e.grad.setZero(e.value.rows(), e.value.cols());
}

bool ParamStore::grads_finite() const {
  for (const auto& e : entries_) {
    if (!e.grad.allFinite()) return false;
  }
  return true;
}

void ParamStore::copy_values_from(const ParamStore& other) {
  for (auto& e : entries_) {
    const auto it = other.index_.find(e.name);
    if (it == other.index_.end()) continue;
    const Matrix& src = other.entries_[it->second].value;
    if (src.rows() == e.value.rows() && src.cols() == e.value.cols()) e.value = src;
  }
}

} // namespace mcm::diff
