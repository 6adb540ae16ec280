#include "verif/tensor.hpp"

#include <numeric>
#include <sstream>
#include <utility>

#include "verif/error.hpp"

namespace verif {

int64_t element_count(std::span<const int64_t> shape) {
  int64_t n = 1;
  for (int64_t d : shape) {
    if (d < 0) throw Error(ErrorCode::ShapeMismatch, "negative extent in shape " + shape_to_string(shape));
    n *= d;
  }
  return n;
}

std::string shape_to_string(std::span<const int64_t> shape) {
  std::ostringstream out;
  out << '[';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

Tensor::Tensor(Shape shape, DType dtype)
    : shape_(std::move(shape)), data_(static_cast<size_t>(element_count(shape_)), 0.0), dtype_(dtype) {}

Tensor::Tensor(Shape shape, std::vector<double> data, DType dtype)
    : shape_(std::move(shape)), data_(std::move(data)), dtype_(dtype) {
  if (element_count(shape_) != static_cast<int64_t>(data_.size())) {
    throw Error(ErrorCode::ShapeMismatch, "buffer of " + std::to_string(data_.size()) +
                                              " elements does not fit shape " + shape_to_string(shape_));
  }
}

Tensor Tensor::scalar(double value) { return Tensor({}, {value}); }

Tensor Tensor::vector(std::vector<double> values) {
  const auto n = static_cast<int64_t>(values.size());
  return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(int64_t rows, int64_t cols, std::vector<double> values) {
  return Tensor({rows, cols}, std::move(values));
}

Tensor Tensor::zeros(Shape shape) { return Tensor(std::move(shape)); }

int64_t Tensor::offset(std::initializer_list<int64_t> index) const {
  if (index.size() != shape_.size()) {
    throw Error(ErrorCode::ShapeMismatch, "index rank does not match tensor rank");
  }
  int64_t flat = 0;
  size_t axis = 0;
  for (int64_t i : index) {
    if (i < 0 || i >= shape_[axis]) throw Error(ErrorCode::ShapeMismatch, "index out of range");
    flat = flat * shape_[axis] + i;
    ++axis;
  }
  return flat;
}

double Tensor::at(std::initializer_list<int64_t> index) const { return data_[static_cast<size_t>(offset(index))]; }
double& Tensor::at(std::initializer_list<int64_t> index) { return data_[static_cast<size_t>(offset(index))]; }

Tensor Tensor::reshaped(Shape shape) const {
  if (element_count(shape) != size()) {
    throw Error(ErrorCode::ShapeMismatch,
                "cannot reshape " + shape_to_string(shape_) + " to " + shape_to_string(shape));
  }
  return Tensor(std::move(shape), data_, dtype_);
}

bool Tensor::operator==(const Tensor& other) const {
  return shape_ == other.shape_ && data_ == other.data_ && dtype_ == other.dtype_;
}

std::vector<int64_t> strides_of(std::span<const int64_t> shape) {
  std::vector<int64_t> strides(shape.size(), 1);
  for (size_t i = shape.size(); i-- > 1;) strides[i - 1] = strides[i] * shape[i];
  return strides;
}

Shape broadcast_shapes(std::span<const int64_t> a, std::span<const int64_t> b) {
  const size_t rank = std::max(a.size(), b.size());
  Shape out(rank);
  for (size_t i = 0; i < rank; ++i) {
    const int64_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    const int64_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw Error(ErrorCode::ShapeMismatch,
                  "shapes " + shape_to_string(a) + " and " + shape_to_string(b) + " do not broadcast");
    }
    out[i] = da == 1 ? db : da;
  }
  return out;
}

BroadcastIndexer::BroadcastIndexer(std::span<const int64_t> operand_shape, std::span<const int64_t> out_shape)
    : out_strides_(strides_of(out_shape)),
      operand_strides_(out_shape.size(), 0),
      out_shape_(out_shape.begin(), out_shape.end()) {
  const auto own = strides_of(operand_shape);
  const size_t lead = out_shape.size() - operand_shape.size();
  for (size_t i = 0; i < operand_shape.size(); ++i) {
    operand_strides_[lead + i] = operand_shape[i] == 1 ? 0 : own[i];
  }
}

int64_t BroadcastIndexer::operator()(int64_t out_index) const {
  int64_t result = 0;
  for (size_t axis = 0; axis < out_shape_.size(); ++axis) {
    const int64_t coord = (out_index / out_strides_[axis]) % out_shape_[axis];
    result += coord * operand_strides_[axis];
  }
  return result;
}

}  // namespace verif
