#include "nn/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "core/error.hpp"

namespace ddnet::nn {
namespace {

void check_shape(const Shape& shape) {
  if (shape.empty() || shape.size() > 4) {
    fail(Errc::dimension, "tensor rank must be 1..4, got shape " + shape_string(shape));
  }
  for (auto e : shape) {
    if (e == 0) fail(Errc::dimension, "zero extent in shape " + shape_string(shape));
  }
}

}  // namespace

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  check_shape(shape_);
  data_.assign(shape_size(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  check_shape(shape_);
  if (data_.size() != shape_size(shape_)) {
    fail(Errc::dimension, "data length " + std::to_string(data_.size()) +
                              " does not match shape " + shape_string(shape_));
  }
}

Tensor Tensor::reshaped(Shape shape) const& {
  Tensor copy = *this;
  return std::move(copy).reshaped(std::move(shape));
}

Tensor Tensor::reshaped(Shape shape) && {
  check_shape(shape);
  if (shape_size(shape) != data_.size()) {
    fail(Errc::dimension, "cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  Tensor out;
  out.shape_ = std::move(shape);
  out.data_ = std::move(data_);
  return out;
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

double Tensor::sum() const {
  double s = 0.0;
  for (double v : data_) s += v;
  return s;
}

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    fail(Errc::dimension, std::string(what) + " expects rank " + std::to_string(rank) +
                              ", got shape " + shape_string(t.shape()));
  }
}

}  // namespace ddnet::nn
