#pragma once

#include <span>
#include <vector>

#include "verif/graph.hpp"

namespace verif::ops {

/// Throws InvalidGraph when the attribute set is not exactly what `op.kind` requires,
/// or when the operand count is wrong.
void validate(const Operation& op);

/// Static shape rule for `op` given the shapes of its operands.
Shape output_shape(const Operation& op, const std::vector<Shape>& input_shapes);

Attributes gemm_attributes(bool trans_a = false, bool trans_b = false);
Attributes conv_attributes(std::vector<int64_t> kernel, std::vector<int64_t> strides = {1, 1},
                           std::vector<int64_t> pads = {0, 0, 0, 0});
Attributes pool_attributes(OpKind kind, std::vector<int64_t> kernel, std::vector<int64_t> strides,
                           std::vector<int64_t> pads = {0, 0, 0, 0});
Attributes batch_norm_attributes(double epsilon);
Attributes flatten_attributes(int64_t axis = 1);
Attributes reshape_attributes(std::vector<int64_t> shape);
Attributes transpose_attributes(std::vector<int64_t> perm);
Attributes concat_attributes(int64_t axis);
Attributes pad_attributes(std::vector<int64_t> pads, double value = 0.0);

}  // namespace verif::ops
