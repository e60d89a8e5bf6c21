#include "sparsepose/nn/ops.hpp"

#include <cmath>
#include <unordered_map>

namespace sparsepose::nn {

namespace {

Node& parent(Node& n, std::size_t i) { return *n.parents[i]; }

void push(Node& n, std::size_t i, const Matrix& g) {
  if (parent(n, i).requires_grad) parent(n, i).accumulate(g);
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) throw DataError("matmul: inner dimensions differ");
  return Tensor::make(a.value() * b.value(), {a, b}, [](Node& n) {
    const Matrix& av = parent(n, 0).value;
    const Matrix& bv = parent(n, 1).value;
    if (parent(n, 0).requires_grad) parent(n, 0).accumulate(n.grad * bv.transpose());
    if (parent(n, 1).requires_grad) parent(n, 1).accumulate(av.transpose() * n.grad);
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  return Tensor::make(a.value() + b.value(), {a, b}, [](Node& n) {
    push(n, 0, n.grad);
    push(n, 1, n.grad);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  return Tensor::make(a.value() - b.value(), {a, b}, [](Node& n) {
    push(n, 0, n.grad);
    push(n, 1, -n.grad);
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  return Tensor::make(a.value().cwiseProduct(b.value()), {a, b}, [](Node& n) {
    push(n, 0, n.grad.cwiseProduct(parent(n, 1).value));
    push(n, 1, n.grad.cwiseProduct(parent(n, 0).value));
  });
}

Tensor scale(const Tensor& a, double s) {
  return Tensor::make(a.value() * s, {a}, [s](Node& n) { push(n, 0, n.grad * s); });
}

Tensor add_row(const Tensor& x, const Tensor& row) {
  if (row.rows() != 1 || row.cols() != x.cols()) throw DataError("add_row: bias must be 1 x cols");
  Matrix out = x.value();
  out.rowwise() += row.value().row(0);
  return Tensor::make(std::move(out), {x, row}, [](Node& n) {
    push(n, 0, n.grad);
    push(n, 1, n.grad.colwise().sum());
  });
}

Tensor mul_row(const Tensor& x, const Tensor& row) {
  if (row.rows() != 1 || row.cols() != x.cols()) throw DataError("mul_row: scale must be 1 x cols");
  Matrix out = x.value().array().rowwise() * row.value().row(0).array();
  return Tensor::make(std::move(out), {x, row}, [](Node& n) {
    const Matrix& xv = parent(n, 0).value;
    const Matrix& rv = parent(n, 1).value;
    push(n, 0, (n.grad.array().rowwise() * rv.row(0).array()).matrix());
    push(n, 1, n.grad.cwiseProduct(xv).colwise().sum());
  });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  Tensor y = matmul(x, w);
  return bias.defined() ? add_row(y, bias) : y;
}

Tensor relu(const Tensor& x) {
  return Tensor::make(x.value().cwiseMax(0.0), {x}, [](Node& n) {
    const Matrix& xv = parent(n, 0).value;
    push(n, 0, (xv.array() > 0.0).select(n.grad, 0.0));
  });
}

Tensor sigmoid(const Tensor& x) {
  Matrix out = x.value().unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
  return Tensor::make(out, {x}, [out](Node& n) {
    push(n, 0, n.grad.cwiseProduct(out.cwiseProduct((1.0 - out.array()).matrix())));
  });
}

Tensor softmax_rows(const Tensor& x) {
  Matrix out = x.value();
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    out.row(i).array() -= out.row(i).maxCoeff();
    out.row(i) = out.row(i).array().exp();
    out.row(i) /= out.row(i).sum();
  }
  return Tensor::make(out, {x}, [out](Node& n) {
    const Eigen::VectorXd dot = n.grad.cwiseProduct(out).rowwise().sum();
    Matrix g = out.cwiseProduct((n.grad.colwise() - dot));
    push(n, 0, g);
  });
}

Tensor layernorm_rows(const Tensor& x, double eps) {
  const Matrix& xv = x.value();
  const Eigen::Index c = xv.cols();
  Eigen::VectorXd mu = xv.rowwise().mean();
  Matrix centered = xv.colwise() - mu;
  Eigen::VectorXd inv_std = ((centered.array().square().rowwise().sum() / static_cast<double>(c)) + eps).rsqrt();
  Matrix out = centered.array().colwise() * inv_std.array();
  return Tensor::make(out, {x}, [out, inv_std, c](Node& n) {
    // dx = inv_std * (g - mean(g) - y * mean(g * y))
    const Eigen::VectorXd mg = n.grad.rowwise().mean();
    const Eigen::VectorXd mgy = n.grad.cwiseProduct(out).rowwise().sum() / static_cast<double>(c);
    Matrix g = (n.grad.colwise() - mg) - (out.array().colwise() * mgy.array()).matrix();
    g = g.array().colwise() * inv_std.array();
    push(n, 0, g);
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DataError("concat_cols: no inputs");
  const Eigen::Index rows = parts[0].rows();
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw DataError("concat_cols: row count mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::vector<Eigen::Index> widths;
  Eigen::Index off = 0;
  for (const auto& p : parts) {
    out.middleCols(off, p.cols()) = p.value();
    widths.push_back(p.cols());
    off += p.cols();
  }
  return Tensor::make(std::move(out), parts, [widths](Node& n) {
    Eigen::Index o = 0;
    for (std::size_t i = 0; i < widths.size(); ++i) {
      push(n, i, n.grad.middleCols(o, widths[i]));
      o += widths[i];
    }
  });
}

Tensor slice_cols(const Tensor& x, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > x.cols()) throw DataError("slice_cols: range out of bounds");
  const Eigen::Index total = x.cols();
  return Tensor::make(x.value().middleCols(start, count), {x}, [start, count, total](Node& n) {
    Matrix g = Matrix::Zero(n.grad.rows(), total);
    g.middleCols(start, count) = n.grad;
    push(n, 0, g);
  });
}

Tensor gather_rows(const Tensor& x, std::span<const int> rows) {
  std::vector<int> idx(rows.begin(), rows.end());
  Matrix out(static_cast<Eigen::Index>(idx.size()), x.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= x.rows()) throw DataError("gather_rows: row out of range");
    out.row(static_cast<Eigen::Index>(i)) = x.value().row(idx[i]);
  }
  const Eigen::Index src_rows = x.rows();
  return Tensor::make(std::move(out), {x}, [idx = std::move(idx), src_rows](Node& n) {
    Matrix g = Matrix::Zero(src_rows, n.grad.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) g.row(idx[i]) += n.grad.row(static_cast<Eigen::Index>(i));
    push(n, 0, g);
  });
}

Tensor segment_mean(const Tensor& x, std::span<const int> segment, Eigen::Index segments) {
  if (static_cast<Eigen::Index>(segment.size()) != x.rows()) throw DataError("segment_mean: segment size mismatch");
  Matrix out = Matrix::Zero(segments, x.cols());
  Eigen::VectorXd count = Eigen::VectorXd::Zero(segments);
  for (std::size_t i = 0; i < segment.size(); ++i) {
    if (segment[i] < 0 || segment[i] >= segments) throw DataError("segment_mean: segment id out of range");
    out.row(segment[i]) += x.value().row(static_cast<Eigen::Index>(i));
    count[segment[i]] += 1.0;
  }
  for (Eigen::Index s = 0; s < segments; ++s)
    if (count[s] > 0) out.row(s) /= count[s];
  std::vector<int> seg(segment.begin(), segment.end());
  return Tensor::make(std::move(out), {x}, [seg = std::move(seg), count](Node& n) {
    Matrix g(static_cast<Eigen::Index>(seg.size()), n.grad.cols());
    for (std::size_t i = 0; i < seg.size(); ++i) g.row(static_cast<Eigen::Index>(i)) = n.grad.row(seg[i]) / count[seg[i]];
    push(n, 0, g);
  });
}

Tensor sum(const Tensor& x) {
  Matrix out(1, 1);
  out(0, 0) = x.value().sum();
  const Eigen::Index r = x.rows();
  const Eigen::Index c = x.cols();
  return Tensor::make(std::move(out), {x}, [r, c](Node& n) { push(n, 0, Matrix::Constant(r, c, n.grad(0, 0))); });
}

Tensor mean(const Tensor& x) {
  const double count = static_cast<double>(x.value().size());
  if (count == 0) return Tensor::scalar(0.0);
  return scale(sum(x), 1.0 / count);
}

Tensor weighted_sum(const std::vector<Tensor>& scalars, std::span<const double> weights) {
  if (scalars.size() != weights.size()) throw DataError("weighted_sum: weight count mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < scalars.size(); ++i) total += weights[i] * scalars[i].item();
  std::vector<double> w(weights.begin(), weights.end());
  Matrix out(1, 1);
  out(0, 0) = total;
  return Tensor::make(std::move(out), scalars, [w = std::move(w)](Node& n) {
    for (std::size_t i = 0; i < w.size(); ++i) push(n, i, n.grad * w[i]);
  });
}

Tensor window_attention(const Tensor& q, const Tensor& k, const Tensor& v, const std::vector<Window>& windows,
                        int heads, double logit_scale, Exec exec) {
  check_same_shape(q, k, "window_attention");
  check_same_shape(q, v, "window_attention");
  const Eigen::Index c = q.cols();
  if (heads < 1 || c % heads != 0) throw ConfigError("window_attention: channels must be divisible by heads");
  const Eigen::Index d = c / heads;
  const int nw = static_cast<int>(windows.size());
  Matrix out = Matrix::Zero(q.rows(), c);
  // attn[w][h] kept for backward
  auto attn = std::make_shared<std::vector<std::vector<Matrix>>>(nw, std::vector<Matrix>(heads));
  const Matrix& qv = q.value();
  const Matrix& kv = k.value();
  const Matrix& vv = v.value();

#pragma omp parallel for schedule(dynamic) if (exec == Exec::Parallel)
  for (int w = 0; w < nw; ++w) {
    const auto& rows = windows[w].rows;
    const auto n = static_cast<Eigen::Index>(rows.size());
    Matrix qw(n, c), kw(n, c), vw(n, c);
    for (Eigen::Index i = 0; i < n; ++i) {
      qw.row(i) = qv.row(rows[i]);
      kw.row(i) = kv.row(rows[i]);
      vw.row(i) = vv.row(rows[i]);
    }
    for (int h = 0; h < heads; ++h) {
      Matrix s = logit_scale * qw.middleCols(h * d, d) * kw.middleCols(h * d, d).transpose();
      for (Eigen::Index i = 0; i < n; ++i) {
        s.row(i).array() -= s.row(i).maxCoeff();
        s.row(i) = s.row(i).array().exp();
        s.row(i) /= s.row(i).sum();
      }
      const Matrix z = s * vw.middleCols(h * d, d);
      for (Eigen::Index i = 0; i < n; ++i) out.row(rows[i]).segment(h * d, d) = z.row(i);
      (*attn)[w][h] = std::move(s);
    }
  }

  return Tensor::make(std::move(out), {q, k, v}, [windows, heads, d, c, logit_scale, attn, exec](Node& n) {
    const Matrix& qv = n.parents[0]->value;
    const Matrix& kv = n.parents[1]->value;
    const Matrix& vv = n.parents[2]->value;
    Matrix gq = Matrix::Zero(qv.rows(), c);
    Matrix gk = Matrix::Zero(qv.rows(), c);
    Matrix gv = Matrix::Zero(qv.rows(), c);
    const int nw = static_cast<int>(windows.size());
    // Windows own disjoint rows, so the scatter below is race free.
#pragma omp parallel for schedule(dynamic) if (exec == Exec::Parallel)
    for (int w = 0; w < nw; ++w) {
      const auto& rows = windows[w].rows;
      const auto m = static_cast<Eigen::Index>(rows.size());
      Matrix qw(m, c), kw(m, c), vw(m, c), gz(m, c);
      for (Eigen::Index i = 0; i < m; ++i) {
        qw.row(i) = qv.row(rows[i]);
        kw.row(i) = kv.row(rows[i]);
        vw.row(i) = vv.row(rows[i]);
        gz.row(i) = n.grad.row(rows[i]);
      }
      for (int h = 0; h < heads; ++h) {
        const Matrix& a = (*attn)[w][h];
        const auto gzh = gz.middleCols(h * d, d);
        const Matrix ga = gzh * vw.middleCols(h * d, d).transpose();
        const Matrix gvh = a.transpose() * gzh;
        const Eigen::VectorXd dot = ga.cwiseProduct(a).rowwise().sum();
        const Matrix gs = a.cwiseProduct(ga.colwise() - dot) * logit_scale;
        const Matrix gqh = gs * kw.middleCols(h * d, d);
        const Matrix gkh = gs.transpose() * qw.middleCols(h * d, d);
        for (Eigen::Index i = 0; i < m; ++i) {
          gq.row(rows[i]).segment(h * d, d) = gqh.row(i);
          gk.row(rows[i]).segment(h * d, d) = gkh.row(i);
          gv.row(rows[i]).segment(h * d, d) = gvh.row(i);
        }
      }
    }
    push(n, 0, gq);
    push(n, 1, gk);
    push(n, 2, gv);
  });
}

NeighborTable build_neighbors(std::span<const VoxelIndex> indices) {
  std::unordered_map<VoxelIndex, int, VoxelIndexHash> lookup;
  lookup.reserve(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) lookup.emplace(indices[i], static_cast<int>(i));
  NeighborTable t;
  t.rows = static_cast<int>(indices.size());
  t.table.assign(indices.size() * 27, -1);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    for (int tap = 0; tap < 27; ++tap) {
      const VoxelIndex off{tap / 9 - 1, tap / 3 % 3 - 1, tap % 3 - 1};
      const auto it = lookup.find(indices[i] + off);
      if (it != lookup.end()) t.table[i * 27 + tap] = it->second;
    }
  }
  return t;
}

namespace {

// Rows of x at neighbour `tap` of every output row, zero where inactive.
Matrix gather_tap(const Matrix& x, const NeighborTable& nbr, int tap) {
  Matrix out(nbr.rows, x.cols());
#pragma omp parallel for schedule(static)
  for (int i = 0; i < nbr.rows; ++i) {
    const int j = nbr.at(i, tap);
    if (j < 0) {
      out.row(i).setZero();
    } else {
      out.row(i) = x.row(j);
    }
  }
  return out;
}

}  // namespace

Tensor submanifold_conv(const Tensor& x, const Tensor& weight, const NeighborTable& nbr, Exec exec) {
  const Eigen::Index cin = x.cols();
  if (weight.rows() != 27 * cin) throw DataError("submanifold_conv: weight rows must be 27 * c_in");
  if (nbr.rows != x.rows()) throw DataError("submanifold_conv: neighbour table does not match input");
  const Eigen::Index cout = weight.cols();
  const int n = nbr.rows;
  const Matrix& xv = x.value();
  const Matrix& wv = weight.value();
  Matrix out = Matrix::Zero(n, cout);
  // Output rows are independent; most taps are inactive on a surface, so the
  // row loop beats dense per-tap gathers.
  const auto conv_row = [&](int i) {
    for (int tap = 0; tap < 27; ++tap) {
      const int j = nbr.at(i, tap);
      if (j < 0) continue;
      out.row(i).noalias() += xv.row(j) * wv.middleRows(tap * cin, cin);
    }
  };
  if (exec == Exec::Serial) {
    for (int i = 0; i < n; ++i) conv_row(i);
  } else {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) conv_row(i);
  }
  return Tensor::make(std::move(out), {x, weight}, [nbr, cin, cout, exec](Node& n) {
    const Matrix& xv = n.parents[0]->value;
    const Matrix& wv = n.parents[1]->value;
    const int rows = nbr.rows;
    if (n.parents[0]->requires_grad) {
      // j = nbr(i, tap) implies i = nbr(j, 26 - tap): gather instead of scatter.
      Matrix gx = Matrix::Zero(rows, cin);
      const auto grad_row = [&](int j) {
        for (int tap = 0; tap < 27; ++tap) {
          const int i = nbr.at(j, 26 - tap);
          if (i < 0) continue;
          gx.row(j).noalias() += n.grad.row(i) * wv.middleRows(tap * cin, cin).transpose();
        }
      };
      if (exec == Exec::Serial) {
        for (int j = 0; j < rows; ++j) grad_row(j);
      } else {
#pragma omp parallel for schedule(static)
        for (int j = 0; j < rows; ++j) grad_row(j);
      }
      n.parents[0]->accumulate(gx);
    }
    if (n.parents[1]->requires_grad) {
      Matrix gw = Matrix::Zero(27 * cin, cout);
      for (int tap = 0; tap < 27; ++tap) {
        auto block = gw.middleRows(tap * cin, cin);
        if (exec == Exec::Serial) {
          for (int i = 0; i < rows; ++i) {
            const int j = nbr.at(i, tap);
            if (j < 0) continue;
            block.noalias() += xv.row(j).transpose() * n.grad.row(i);
          }
        } else {
          block.noalias() = gather_tap(xv, nbr, tap).transpose() * n.grad;
        }
      }
      n.parents[1]->accumulate(gw);
    }
  });
}

}  // namespace sparsepose::nn
