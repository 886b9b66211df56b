#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace lecam {

/// A finite collection of points in R^dim, stored row-major.
class SampleSet {
 public:
  SampleSet() = default;
  explicit SampleSet(std::size_t dim) : dim_(dim) {
    if (dim == 0) throw std::invalid_argument("SampleSet: dim must be positive");
  }
  SampleSet(std::size_t count, std::size_t dim, double fill = 0.0) : dim_(dim), data_(count * dim, fill) {
    if (dim == 0) throw std::invalid_argument("SampleSet: dim must be positive");
  }
  SampleSet(std::size_t dim, std::vector<double> data) : dim_(dim), data_(std::move(data)) {
    if (dim == 0) throw std::invalid_argument("SampleSet: dim must be positive");
    if (data_.size() % dim != 0) throw std::invalid_argument("SampleSet: data size is not a multiple of dim");
  }

  static SampleSet from_rows(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) throw std::invalid_argument("SampleSet::from_rows: no rows");
    SampleSet s(rows.front().size());
    for (const auto& r : rows) s.push_back(r);
    return s;
  }

  static SampleSet from_scalars(std::span<const double> xs) {
    return SampleSet(1, std::vector<double>(xs.begin(), xs.end()));
  }

  std::size_t size() const { return dim_ == 0 ? 0 : data_.size() / dim_; }
  std::size_t dim() const { return dim_; }
  bool empty() const { return data_.empty(); }

  std::span<const double> row(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }
  std::span<double> row(std::size_t i) { return {data_.data() + i * dim_, dim_}; }
  double operator()(std::size_t i, std::size_t k) const { return data_[i * dim_ + k]; }
  double& operator()(std::size_t i, std::size_t k) { return data_[i * dim_ + k]; }

  void push_back(std::span<const double> point) {
    if (point.size() != dim_) {
      throw std::invalid_argument("SampleSet::push_back: point has dim " + std::to_string(point.size()) +
                                  ", expected " + std::to_string(dim_));
    }
    data_.insert(data_.end(), point.begin(), point.end());
  }
  void reserve(std::size_t count) { data_.reserve(count * dim_); }

  SampleSet subset(std::span<const std::size_t> indices) const {
    SampleSet out(dim_);
    out.reserve(indices.size());
    for (std::size_t i : indices) out.push_back(row(i));
    return out;
  }

  /// Rows [first, first + count).
  SampleSet slice(std::size_t first, std::size_t count) const {
    if (first + count > size()) throw std::out_of_range("SampleSet::slice: range exceeds size");
    return SampleSet(dim_, std::vector<double>(data_.begin() + static_cast<std::ptrdiff_t>(first * dim_),
                                               data_.begin() + static_cast<std::ptrdiff_t>((first + count) * dim_)));
  }

  std::vector<double> column(std::size_t k) const {
    std::vector<double> out(size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (*this)(i, k);
    return out;
  }

  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

  bool operator==(const SampleSet&) const = default;

 private:
  std::size_t dim_ = 0;
  std::vector<double> data_;
};

/// Concatenates two sets of equal dimension.
inline SampleSet pooled(const SampleSet& a, const SampleSet& b) {
  if (a.dim() != b.dim()) throw std::invalid_argument("pooled: dimension mismatch");
  SampleSet out(a.dim());
  out.reserve(a.size() + b.size());
  out.data().insert(out.data().end(), a.data().begin(), a.data().end());
  out.data().insert(out.data().end(), b.data().begin(), b.data().end());
  return out;
}

}  // namespace lecam
