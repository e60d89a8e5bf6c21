#pragma once

#include "sparsepose/nn/tensor.hpp"
#include "sparsepose/voxel_grid.hpp"

#include <span>
#include <vector>

namespace sparsepose::nn {

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
Tensor scale(const Tensor& a, double s);
Tensor add_row(const Tensor& x, const Tensor& row);  // broadcast 1 x c over rows
Tensor mul_row(const Tensor& x, const Tensor& row);
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias = {});
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor softmax_rows(const Tensor& x);
/// Row-wise standardization, no affine parameters.
Tensor layernorm_rows(const Tensor& x, double eps = 1e-5);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_cols(const Tensor& x, Eigen::Index start, Eigen::Index count);
Tensor gather_rows(const Tensor& x, std::span<const int> rows);
/// out[s] = mean of x rows with segment[i] == s.
Tensor segment_mean(const Tensor& x, std::span<const int> segment, Eigen::Index segments);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// Weighted sum of 1x1 tensors.
Tensor weighted_sum(const std::vector<Tensor>& scalars, std::span<const double> weights);

/// Per-window multi-head attention on already projected q, k, v (K x C).
/// Heads split channels into contiguous blocks of C / heads. Windows must
/// partition the rows.
Tensor window_attention(const Tensor& q, const Tensor& k, const Tensor& v, const std::vector<Window>& windows,
                        int heads, double logit_scale, Exec exec = Exec::Parallel);

/// 27 neighbour rows per active voxel (-1 when inactive); tap k encodes offset
/// (dx, dy, dz) = (k / 9 - 1, k / 3 % 3 - 1, k % 3 - 1). Tap 13 is the center.
struct NeighborTable {
  int rows = 0;
  std::vector<int> table;  // rows * 27
  int at(int row, int tap) const { return table[static_cast<std::size_t>(row) * 27 + tap]; }
};

NeighborTable build_neighbors(std::span<const VoxelIndex> indices);

/// Submanifold 3x3x3 convolution; weight is (27 * c_in) x c_out with tap k in
/// rows [k * c_in, (k + 1) * c_in).
Tensor submanifold_conv(const Tensor& x, const Tensor& weight, const NeighborTable& nbr, Exec exec = Exec::Parallel);

}  // namespace sparsepose::nn
