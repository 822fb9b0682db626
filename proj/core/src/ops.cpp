// SPDX-License-Identifier: Apache-2.0

#include "kaizen/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace kaizen::ops {

namespace {

void require(bool cond, const char* op, const std::string& what) {
  if (!cond) throw std::invalid_argument(std::string(op) + ": " + what);
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  require(a.value().same_shape(b.value()), op,
          "shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  require(a.value().rank() == 2 && b.value().rank() == 2, "matmul", "rank-2 operands required");
  require(a.shape()[1] == b.shape()[0], "matmul",
          "inner dimension mismatch " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  Tensor out({a.shape()[0], b.shape()[1]});
  out.matrix().noalias() = a.value().matrix() * b.value().matrix();
  const Tensor av = a.value();
  const Tensor bv = b.value();
  return make_op(std::move(out), {a, b}, [av, bv](const Tensor& g, std::vector<Tensor*>& in) {
    if (in[0]) in[0]->matrix().noalias() += g.matrix() * bv.matrix().transpose();
    if (in[1]) in[1]->matrix().noalias() += av.matrix().transpose() * g.matrix();
  });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
  require(x.value().rank() == 2 && weight.value().rank() == 2, "linear", "rank-2 input and weight required");
  require(x.shape()[1] == weight.shape()[1], "linear",
          "input width " + std::to_string(x.shape()[1]) + " does not match weight " + shape_string(weight.shape()));
  const int64_t n = x.shape()[0];
  const int64_t out_features = weight.shape()[0];
  Tensor out({n, out_features});
  out.matrix().noalias() = x.value().matrix() * weight.value().matrix().transpose();
  const bool has_bias = bias.defined();
  if (has_bias) {
    require(bias.value().numel() == out_features, "linear", "bias size mismatch");
    out.matrix().rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias.value().data(), out_features);
  }
  std::vector<Var> inputs{x, weight};
  if (has_bias) inputs.push_back(bias);
  const Tensor xv = x.value();
  const Tensor wv = weight.value();
  return make_op(std::move(out), std::move(inputs), [xv, wv, has_bias](const Tensor& g, std::vector<Tensor*>& in) {
    if (in[0]) in[0]->matrix().noalias() += g.matrix() * wv.matrix();
    if (in[1]) in[1]->matrix().noalias() += g.matrix().transpose() * xv.matrix();
    if (has_bias && in[2]) {
      Eigen::Map<Eigen::RowVectorXd>(in[2]->data(), g.dim(1)) += g.matrix().colwise().sum();
    }
  });
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tensor out = a.value();
  out.add_(b.value());
  return make_op(std::move(out), {a, b}, [](const Tensor& g, std::vector<Tensor*>& in) {
    if (in[0]) in[0]->add_(g);
    if (in[1]) in[1]->add_(g);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a.value();
  out.add_(b.value(), -1.0);
  return make_op(std::move(out), {a, b}, [](const Tensor& g, std::vector<Tensor*>& in) {
    if (in[0]) in[0]->add_(g);
    if (in[1]) in[1]->add_(g, -1.0);
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Tensor out = a.value();
  for (int64_t i = 0; i < out.numel(); ++i) out[i] *= b.value()[i];
  const Tensor av = a.value();
  const Tensor bv = b.value();
  return make_op(std::move(out), {a, b}, [av, bv](const Tensor& g, std::vector<Tensor*>& in) {
    for (int64_t i = 0; i < g.numel(); ++i) {
      if (in[0]) (*in[0])[i] += g[i] * bv[i];
      if (in[1]) (*in[1])[i] += g[i] * av[i];
    }
  });
}

Var scale(const Var& a, double factor) {
  Tensor out = a.value();
  for (double& v : out.values()) v *= factor;
  return make_op(std::move(out), {a}, [factor](const Tensor& g, std::vector<Tensor*>& in) {
    if (in[0]) in[0]->add_(g, factor);
  });
}

Var relu(const Var& a) {
  Tensor out = a.value();
  for (double& v : out.values()) v = v < 0.0 ? 0.0 : v;  // NaN passes through
  const Tensor mask = out;
  return make_op(std::move(out), {a}, [mask](const Tensor& g, std::vector<Tensor*>& in) {
    if (!in[0]) return;
    double* dst = in[0]->data();
    for (int64_t i = 0; i < g.numel(); ++i) {
      if (mask[i] > 0.0) dst[i] += g[i];
    }
  });
}

Var sum(const Var& a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  const Shape shape = a.shape();
  return make_op(Tensor({1}, {s}), {a}, [shape](const Tensor& g, std::vector<Tensor*>& in) {
    if (!in[0]) return;
    for (double& v : in[0]->values()) v += g[0];
  });
}

Var mean(const Var& a) {
  const auto n = static_cast<double>(a.value().numel());
  require(n > 0, "mean", "empty input");
  return scale(sum(a), 1.0 / n);
}

Var weighted_sum(std::span<const Var> terms, std::span<const double> weights) {
  require(terms.size() == weights.size() && !terms.empty(), "weighted_sum", "terms/weights size mismatch");
  double total = 0.0;
  for (size_t i = 0; i < terms.size(); ++i) {
    require(terms[i].value().numel() == 1, "weighted_sum", "scalar terms required");
    total += weights[i] * terms[i].value()[0];
  }
  std::vector<double> w(weights.begin(), weights.end());
  return make_op(Tensor({1}, {total}), std::vector<Var>(terms.begin(), terms.end()),
                 [w](const Tensor& g, std::vector<Tensor*>& in) {
                   for (size_t i = 0; i < in.size(); ++i) {
                     if (in[i]) (*in[i])[0] += w[i] * g[0];
                   }
                 });
}

Var l2_normalize_rows(const Var& x, double eps) {
  require(x.value().rank() == 2, "l2_normalize_rows", "rank-2 input required");
  const int64_t n = x.shape()[0];
  const int64_t d = x.shape()[1];
  Tensor out = x.value();
  std::vector<double> norms(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (int64_t j = 0; j < d; ++j) s += out.at(i, j) * out.at(i, j);
    norms[i] = std::max(std::sqrt(s), eps);
    for (int64_t j = 0; j < d; ++j) out.at(i, j) /= norms[i];
  }
  const Tensor y = out;
  return make_op(std::move(out), {x}, [y, norms, n, d](const Tensor& g, std::vector<Tensor*>& in) {
    if (!in[0]) return;
    for (int64_t i = 0; i < n; ++i) {
      double dot = 0.0;
      for (int64_t j = 0; j < d; ++j) dot += g.at(i, j) * y.at(i, j);
      for (int64_t j = 0; j < d; ++j) in[0]->at(i, j) += (g.at(i, j) - y.at(i, j) * dot) / norms[i];
    }
  });
}

Tensor softmax_rows(const Tensor& logits, double temperature) {
  Tensor out = logits;
  const int64_t n = logits.dim(0);
  const int64_t c = logits.dim(1);
  for (int64_t i = 0; i < n; ++i) {
    double mx = -INFINITY;
    for (int64_t j = 0; j < c; ++j) mx = std::max(mx, logits.at(i, j) / temperature);
    double s = 0.0;
    for (int64_t j = 0; j < c; ++j) {
      out.at(i, j) = std::exp(logits.at(i, j) / temperature - mx);
      s += out.at(i, j);
    }
    for (int64_t j = 0; j < c; ++j) out.at(i, j) /= s;
  }
  return out;
}

Var flatten(const Var& x) {
  require(x.value().rank() >= 1, "flatten", "rank >= 1 required");
  const int64_t n = x.shape()[0];
  const int64_t rest = n == 0 ? 0 : x.value().numel() / n;
  const Shape original = x.shape();
  return make_op(x.value().reshaped({n, rest}), {x}, [](const Tensor& g, std::vector<Tensor*>& in) {
    if (in[0]) in[0]->add_(g);
  });
}

Var concat_rows(std::span<const Var> parts) {
  require(!parts.empty(), "concat_rows", "no inputs");
  Shape shape = parts[0].shape();
  const int64_t row_size = shape[0] == 0 ? 0 : parts[0].value().numel() / shape[0];
  int64_t rows = 0;
  for (const auto& p : parts) {
    Shape s = p.shape();
    require(s.size() == shape.size() && std::equal(s.begin() + 1, s.end(), shape.begin() + 1), "concat_rows",
            "trailing dimensions differ: " + shape_string(s) + " vs " + shape_string(shape));
    rows += s[0];
  }
  shape[0] = rows;
  Tensor out(shape);
  std::vector<int64_t> offsets;
  int64_t offset = 0;
  for (const auto& p : parts) {
    offsets.push_back(offset);
    std::copy(p.value().data(), p.value().data() + p.value().numel(), out.data() + offset);
    offset += p.value().numel();
  }
  return make_op(std::move(out), std::vector<Var>(parts.begin(), parts.end()),
                 [offsets, row_size](const Tensor& g, std::vector<Tensor*>& in) {
                   for (size_t k = 0; k < in.size(); ++k) {
                     if (!in[k]) continue;
                     const double* src = g.data() + offsets[k];
                     double* dst = in[k]->data();
                     for (int64_t i = 0; i < in[k]->numel(); ++i) dst[i] += src[i];
                   }
                   (void)row_size;
                 });
}

Var slice_rows(const Var& x, int64_t begin, int64_t end) {
  const int64_t n = x.shape()[0];
  require(0 <= begin && begin <= end && end <= n, "slice_rows", "range out of bounds");
  const int64_t row = n == 0 ? 0 : x.value().numel() / n;
  Shape shape = x.shape();
  shape[0] = end - begin;
  std::vector<double> values(x.value().data() + begin * row, x.value().data() + end * row);
  return make_op(Tensor(shape, std::move(values)), {x}, [begin, row](const Tensor& g, std::vector<Tensor*>& in) {
    if (!in[0]) return;
    double* dst = in[0]->data() + begin * row;
    for (int64_t i = 0; i < g.numel(); ++i) dst[i] += g[i];
  });
}

Var select_columns(const Var& x, std::span<const int32_t> columns) {
  require(x.value().rank() == 2, "select_columns", "rank-2 input required");
  const int64_t n = x.shape()[0];
  const int64_t d = x.shape()[1];
  for (int32_t c : columns) require(c >= 0 && c < d, "select_columns", "column index out of range");
  std::vector<int32_t> cols(columns.begin(), columns.end());
  const auto k = static_cast<int64_t>(cols.size());
  Tensor out({n, k});
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < k; ++j) out.at(i, j) = x.value().at(i, cols[static_cast<size_t>(j)]);
  return make_op(std::move(out), {x}, [cols, k](const Tensor& g, std::vector<Tensor*>& in) {
    if (!in[0]) return;
    for (int64_t i = 0; i < g.dim(0); ++i)
      for (int64_t j = 0; j < k; ++j) in[0]->at(i, cols[static_cast<size_t>(j)]) += g.at(i, j);
  });
}

namespace {

struct ConvShape {
  int64_t n, c, h, w, o, k, stride, pad, ho, wo;
};

void im2col(const double* image, const ConvShape& s, double* cols) {
  const int64_t hw_out = s.ho * s.wo;
  for (int64_t c = 0; c < s.c; ++c) {
    for (int64_t ky = 0; ky < s.k; ++ky) {
      for (int64_t kx = 0; kx < s.k; ++kx) {
        double* row = cols + ((c * s.k + ky) * s.k + kx) * hw_out;
        for (int64_t oy = 0; oy < s.ho; ++oy) {
          const int64_t iy = oy * s.stride - s.pad + ky;
          if (iy < 0 || iy >= s.h) {
            std::fill(row + oy * s.wo, row + (oy + 1) * s.wo, 0.0);
            continue;
          }
          const double* src = image + (c * s.h + iy) * s.w;
          for (int64_t ox = 0; ox < s.wo; ++ox) {
            const int64_t ix = ox * s.stride - s.pad + kx;
            row[oy * s.wo + ox] = (ix >= 0 && ix < s.w) ? src[ix] : 0.0;
          }
        }
      }
    }
  }
}

void col2im_add(const double* cols, const ConvShape& s, double* image) {
  const int64_t hw_out = s.ho * s.wo;
  for (int64_t c = 0; c < s.c; ++c) {
    for (int64_t ky = 0; ky < s.k; ++ky) {
      for (int64_t kx = 0; kx < s.k; ++kx) {
        const double* row = cols + ((c * s.k + ky) * s.k + kx) * hw_out;
        for (int64_t oy = 0; oy < s.ho; ++oy) {
          const int64_t iy = oy * s.stride - s.pad + ky;
          if (iy < 0 || iy >= s.h) continue;
          double* dst = image + (c * s.h + iy) * s.w;
          for (int64_t ox = 0; ox < s.wo; ++ox) {
            const int64_t ix = ox * s.stride - s.pad + kx;
            if (ix >= 0 && ix < s.w) dst[ix] += row[oy * s.wo + ox];
          }
        }
      }
    }
  }
}

}  // namespace

Var conv2d(const Var& x, const Var& weight, const Var& bias, Conv2dGeometry geometry) {
  require(x.value().rank() == 4, "conv2d", "input must be [N, C, H, W], got " + shape_string(x.shape()));
  require(weight.value().rank() == 4, "conv2d", "weight must be [O, C, k, k]");
  ConvShape s{};
  s.n = x.shape()[0];
  s.c = x.shape()[1];
  s.h = x.shape()[2];
  s.w = x.shape()[3];
  s.o = weight.shape()[0];
  s.k = geometry.kernel;
  s.stride = geometry.stride;
  s.pad = geometry.padding;
  require(weight.shape()[1] == s.c && weight.shape()[2] == s.k && weight.shape()[3] == s.k, "conv2d",
          "weight " + shape_string(weight.shape()) + " incompatible with input " + shape_string(x.shape()));
  require(s.stride >= 1 && s.h + 2 * s.pad >= s.k && s.w + 2 * s.pad >= s.k, "conv2d", "invalid geometry");
  s.ho = (s.h + 2 * s.pad - s.k) / s.stride + 1;
  s.wo = (s.w + 2 * s.pad - s.k) / s.stride + 1;
  const int64_t ckk = s.c * s.k * s.k;
  const int64_t hw_out = s.ho * s.wo;
  const bool has_bias = bias.defined();

  Tensor out({s.n, s.o, s.ho, s.wo});
  RowMatrix cols(ckk, hw_out);
  ConstMatrixMap wmat(weight.value().data(), s.o, ckk);
  const int64_t in_stride = s.c * s.h * s.w;
  for (int64_t i = 0; i < s.n; ++i) {
    im2col(x.value().data() + i * in_stride, s, cols.data());
    MatrixMap dst(out.data() + i * s.o * hw_out, s.o, hw_out);
    dst.noalias() = wmat * cols;
    if (has_bias) {
      for (int64_t oc = 0; oc < s.o; ++oc) dst.row(oc).array() += bias.value()[oc];
    }
  }

  std::vector<Var> inputs{x, weight};
  if (has_bias) inputs.push_back(bias);
  const Tensor xv = x.value();
  const Tensor wv = weight.value();
  return make_op(std::move(out), std::move(inputs), [xv, wv, s, has_bias](const Tensor& g, std::vector<Tensor*>& in) {
    const int64_t ckk = s.c * s.k * s.k;
    const int64_t hw_out = s.ho * s.wo;
    const int64_t in_stride = s.c * s.h * s.w;
    ConstMatrixMap wmat(wv.data(), s.o, ckk);
    RowMatrix cols(ckk, hw_out);
    RowMatrix dcols(ckk, hw_out);
    for (int64_t i = 0; i < s.n; ++i) {
      ConstMatrixMap gout(g.data() + i * s.o * hw_out, s.o, hw_out);
      if (in[1]) {
        im2col(xv.data() + i * in_stride, s, cols.data());
        MatrixMap dw(in[1]->data(), s.o, ckk);
        dw.noalias() += gout * cols.transpose();
      }
      if (in[0]) {
        dcols.noalias() = wmat.transpose() * gout;
        col2im_add(dcols.data(), s, in[0]->data() + i * in_stride);
      }
      if (has_bias && in[2]) {
        for (int64_t oc = 0; oc < s.o; ++oc) (*in[2])[oc] += gout.row(oc).sum();
      }
    }
  });
}

Var global_avg_pool(const Var& x) {
  require(x.value().rank() == 4, "global_avg_pool", "input must be [N, C, H, W]");
  const int64_t n = x.shape()[0];
  const int64_t c = x.shape()[1];
  const int64_t hw = x.shape()[2] * x.shape()[3];
  Tensor out({n, c});
  for (int64_t i = 0; i < n * c; ++i) {
    const double* src = x.value().data() + i * hw;
    double s = 0.0;
    for (int64_t j = 0; j < hw; ++j) s += src[j];
    out[i] = s / static_cast<double>(hw);
  }
  return make_op(std::move(out), {x}, [n, c, hw](const Tensor& g, std::vector<Tensor*>& in) {
    if (!in[0]) return;
    for (int64_t i = 0; i < n * c; ++i) {
      const double v = g[i] / static_cast<double>(hw);
      double* dst = in[0]->data() + i * hw;
      for (int64_t j = 0; j < hw; ++j) dst[j] += v;
    }
  });
}

Var batch_norm(const Var& x, const Var& gamma, const Var& beta, const BatchNormBuffers& buffers, NormMode mode) {
  const size_t rank = x.value().rank();
  require(rank == 2 || rank == 4, "batch_norm", "rank-2 or rank-4 input required");
  const int64_t n = x.shape()[0];
  const int64_t c = x.shape()[1];
  const int64_t inner = rank == 4 ? x.shape()[2] * x.shape()[3] : 1;
  const int64_t m = n * inner;
  require(gamma.value().numel() == c && beta.value().numel() == c, "batch_norm", "affine parameter size mismatch");
  require(buffers.running_mean && buffers.running_var, "batch_norm", "running statistics missing");

  const double* xv = x.value().data();
  auto index = [c, inner](int64_t i, int64_t ch, int64_t j) { return (i * c + ch) * inner + j; };

  std::vector<double> mean(static_cast<size_t>(c)), inv_std(static_cast<size_t>(c));
  const bool batch_stats = mode != NormMode::kEval;
  if (batch_stats) {
    require(m > 1, "batch_norm", "batch statistics need more than one value per channel");
    for (int64_t ch = 0; ch < c; ++ch) {
      double s = 0.0;
      for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < inner; ++j) s += xv[index(i, ch, j)];
      const double mu = s / static_cast<double>(m);
      double v = 0.0;
      for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < inner; ++j) {
          const double d = xv[index(i, ch, j)] - mu;
          v += d * d;
        }
      const double var = v / static_cast<double>(m);
      mean[ch] = mu;
      inv_std[ch] = 1.0 / std::sqrt(var + buffers.eps);
      if (mode == NormMode::kTrain) {
        const double unbiased = v / static_cast<double>(m - 1);
        (*buffers.running_mean)[ch] = (1.0 - buffers.momentum) * (*buffers.running_mean)[ch] + buffers.momentum * mu;
        (*buffers.running_var)[ch] =
            (1.0 - buffers.momentum) * (*buffers.running_var)[ch] + buffers.momentum * unbiased;
      }
    }
  } else {
    for (int64_t ch = 0; ch < c; ++ch) {
      mean[ch] = (*buffers.running_mean)[ch];
      inv_std[ch] = 1.0 / std::sqrt((*buffers.running_var)[ch] + buffers.eps);
    }
  }

  Tensor xhat(x.shape());
  Tensor out(x.shape());
  for (int64_t i = 0; i < n; ++i)
    for (int64_t ch = 0; ch < c; ++ch) {
      const double gm = gamma.value()[ch];
      const double bt = beta.value()[ch];
      for (int64_t j = 0; j < inner; ++j) {
        const int64_t k = index(i, ch, j);
        xhat[k] = (xv[k] - mean[ch]) * inv_std[ch];
        out[k] = gm * xhat[k] + bt;
      }
    }

  const Tensor gv = gamma.value();
  return make_op(std::move(out), {x, gamma, beta},
                 [xhat, gv, inv_std, n, c, inner, m, batch_stats](const Tensor& g, std::vector<Tensor*>& in) {
                   auto idx = [c, inner](int64_t i, int64_t ch, int64_t j) { return (i * c + ch) * inner + j; };
                   for (int64_t ch = 0; ch < c; ++ch) {
                     double sum_g = 0.0;
                     double sum_gx = 0.0;
                     for (int64_t i = 0; i < n; ++i)
                       for (int64_t j = 0; j < inner; ++j) {
                         const int64_t k = idx(i, ch, j);
                         sum_g += g[k];
                         sum_gx += g[k] * xhat[k];
                       }
                     if (in[1]) (*in[1])[ch] += sum_gx;
                     if (in[2]) (*in[2])[ch] += sum_g;
                     if (!in[0]) continue;
                     const double scale = gv[ch] * inv_std[ch];
                     if (batch_stats) {
                       const double inv_m = 1.0 / static_cast<double>(m);
                       for (int64_t i = 0; i < n; ++i)
                         for (int64_t j = 0; j < inner; ++j) {
                           const int64_t k = idx(i, ch, j);
                           (*in[0])[k] += scale * (g[k] - inv_m * sum_g - xhat[k] * inv_m * sum_gx);
                         }
                     } else {
                       for (int64_t i = 0; i < n; ++i)
                         for (int64_t j = 0; j < inner; ++j) {
                           const int64_t k = idx(i, ch, j);
                           (*in[0])[k] += scale * g[k];
                         }
                     }
                   }
                 });
}

}  // namespace kaizen::ops
