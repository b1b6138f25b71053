#include "ctxfeat/gridcore/ops.h"

#include <Eigen/Core>
#include <cmath>
#include <numbers>

namespace ctxfeat {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

bool AnyRequiresGrad(std::initializer_list<const Grid*> grids) {
  for (const Grid* g : grids) {
    if (g->defined() && g->requires_grad()) return true;
  }
  return false;
}

void RequireRank(const Grid& g, int rank, const char* what) {
  if (g.rank() != rank) {
    throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) +
                     ", got " + ShapeString(g.shape()));
  }
}

double StableSigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

struct ConvGeometry {
  int channels, height, width, kernel, padding, out_height, out_width;
};

// Rows of the column matrix are (channel, ky, kx); columns are output pixels.
void Im2Col(std::span<const double> input, const ConvGeometry& g, RowMat& col) {
  const int k = g.kernel;
  col.resize(static_cast<Eigen::Index>(g.channels) * k * k,
             static_cast<Eigen::Index>(g.out_height) * g.out_width);
  for (int c = 0; c < g.channels; ++c) {
    const double* plane = input.data() + static_cast<std::size_t>(c) * g.height * g.width;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        double* row = col.row((c * k + ky) * k + kx).data();
        for (int oy = 0; oy < g.out_height; ++oy) {
          const int iy = oy + ky - g.padding;
          double* dst = row + static_cast<std::size_t>(oy) * g.out_width;
          if (iy < 0 || iy >= g.height) {
            std::fill(dst, dst + g.out_width, 0.0);
            continue;
          }
          const double* src = plane + static_cast<std::size_t>(iy) * g.width;
          for (int ox = 0; ox < g.out_width; ++ox) {
            const int ix = ox + kx - g.padding;
            dst[ox] = (ix >= 0 && ix < g.width) ? src[ix] : 0.0;
          }
        }
      }
    }
  }
}

void Col2ImAdd(const RowMat& col, const ConvGeometry& g, std::span<double> out) {
  const int k = g.kernel;
  for (int c = 0; c < g.channels; ++c) {
    double* plane = out.data() + static_cast<std::size_t>(c) * g.height * g.width;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const double* row = col.row((c * k + ky) * k + kx).data();
        for (int oy = 0; oy < g.out_height; ++oy) {
          const int iy = oy + ky - g.padding;
          if (iy < 0 || iy >= g.height) continue;
          const double* src = row + static_cast<std::size_t>(oy) * g.out_width;
          double* dst = plane + static_cast<std::size_t>(iy) * g.width;
          for (int ox = 0; ox < g.out_width; ++ox) {
            const int ix = ox + kx - g.padding;
            if (ix >= 0 && ix < g.width) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace

Grid Conv2d(Tape& tape, const Grid& input, const Grid& weights, const Grid& bias,
            int padding) {
  RequireRank(input, 3, "conv2d input");
  RequireRank(weights, 4, "conv2d weights");
  RequireRank(bias, 1, "conv2d bias");
  const int out_channels = weights.dim(0);
  const int kernel = weights.dim(2);
  if (weights.dim(1) != input.channels()) {
    throw ShapeError("conv2d: input has " + std::to_string(input.channels()) +
                     " channels but weights " + ShapeString(weights.shape()) +
                     " expect " + std::to_string(weights.dim(1)));
  }
  if (weights.dim(3) != kernel || kernel % 2 == 0) {
    throw ShapeError("conv2d: kernel must be square and odd, got " +
                     ShapeString(weights.shape()));
  }
  if (bias.dim(0) != out_channels) {
    throw ShapeError("conv2d: bias " + ShapeString(bias.shape()) + " does not match " +
                     std::to_string(out_channels) + " output channels");
  }
  if (padding < 0) throw ShapeError("conv2d: negative padding");
  ConvGeometry g{input.channels(), input.height(), input.width(), kernel, padding,
                 input.height() + 2 * padding - kernel + 1,
                 input.width() + 2 * padding - kernel + 1};
  if (g.out_height <= 0 || g.out_width <= 0) {
    throw ShapeError("conv2d: kernel larger than padded input " +
                     ShapeString(input.shape()));
  }
  const Eigen::Index rows = static_cast<Eigen::Index>(g.channels) * kernel * kernel;
  const Eigen::Index pixels = static_cast<Eigen::Index>(g.out_height) * g.out_width;
  const bool direct = (kernel == 1 && padding == 0);

  Grid out(Shape{out_channels, g.out_height, g.out_width});
  ConstMap w(weights.data().data(), out_channels, rows);
  MutMap y(out.mutable_data().data(), out_channels, pixels);
  if (direct) {
    y.noalias() = w * ConstMap(input.data().data(), rows, pixels);
  } else {
    RowMat col;
    Im2Col(input.data(), g, col);
    y.noalias() = w * col;
  }
  for (int o = 0; o < out_channels; ++o) y.row(o).array() += bias[o];

  if (!AnyRequiresGrad({&input, &weights, &bias})) return out;
  tape.record({input, weights, bias}, out, [input, weights, bias, out, g, rows, pixels,
                                            direct]() mutable {
    ConstMap gy(out.grad().data(), weights.dim(0), pixels);
    if (bias.requires_grad()) {
      auto gb = bias.grad();
      for (Eigen::Index o = 0; o < gy.rows(); ++o) gb[o] += gy.row(o).sum();
    }
    RowMat col;
    if (weights.requires_grad()) {
      MutMap gw(weights.grad().data(), gy.rows(), rows);
      if (direct) {
        gw.noalias() += gy * ConstMap(input.data().data(), rows, pixels).transpose();
      } else {
        Im2Col(input.data(), g, col);
        gw.noalias() += gy * col.transpose();
      }
    }
    if (input.requires_grad()) {
      ConstMap w(weights.data().data(), gy.rows(), rows);
      if (direct) {
        MutMap gx(input.grad().data(), rows, pixels);
        gx.noalias() += w.transpose() * gy;
      } else {
        RowMat gcol = w.transpose() * gy;
        Col2ImAdd(gcol, g, input.grad());
      }
    }
  });
  return out;
}

Grid Elementwise(Tape& tape, ElementwiseOp op, const Grid& a,
                 const std::optional<Grid>& b) {
  const bool binary = op == ElementwiseOp::kMultiply || op == ElementwiseOp::kAdd;
  if (binary && !b) throw std::invalid_argument("elementwise: binary op needs two grids");
  if (!binary && b) throw std::invalid_argument("elementwise: unary op given two grids");

  bool broadcast = false;
  if (binary && b->shape() != a.shape()) {
    const bool mask_like = a.rank() == 3 && b->rank() == 3 && b->dim(0) == 1 &&
                           b->dim(1) == a.dim(1) && b->dim(2) == a.dim(2);
    if (!mask_like) {
      throw ShapeError("elementwise: incompatible shapes " + ShapeString(a.shape()) +
                       " and " + ShapeString(b->shape()));
    }
    broadcast = true;
  }
  const std::size_t n = a.size();
  const std::size_t plane = broadcast ? b->size() : n;
  Grid out(a.shape());
  auto y = out.mutable_data();
  auto x = a.data();
  switch (op) {
    case ElementwiseOp::kMultiply: {
      auto z = b->data();
      for (std::size_t i = 0; i < n; ++i) y[i] = x[i] * z[i % plane];
      break;
    }
    case ElementwiseOp::kAdd: {
      auto z = b->data();
      for (std::size_t i = 0; i < n; ++i) y[i] = x[i] + z[i % plane];
      break;
    }
    case ElementwiseOp::kSquare:
      for (std::size_t i = 0; i < n; ++i) y[i] = x[i] * x[i];
      break;
    case ElementwiseOp::kSigmoid:
      for (std::size_t i = 0; i < n; ++i) y[i] = StableSigmoid(x[i]);
      break;
  }

  const Grid other = binary ? *b : Grid();
  if (!AnyRequiresGrad({&a, &other})) return out;
  std::vector<Grid> inputs{a};
  if (binary) inputs.push_back(other);
  tape.record(std::move(inputs), out, [op, a, other, out, n, plane]() mutable {
    auto gy = out.grad();
    auto x = a.data();
    switch (op) {
      case ElementwiseOp::kMultiply: {
        auto z = other.data();
        if (a.requires_grad()) {
          auto ga = a.grad();
          for (std::size_t i = 0; i < n; ++i) ga[i] += gy[i] * z[i % plane];
        }
        if (other.requires_grad()) {
          auto gb = other.grad();
          for (std::size_t i = 0; i < n; ++i) gb[i % plane] += gy[i] * x[i];
        }
        break;
      }
      case ElementwiseOp::kAdd:
        if (a.requires_grad()) {
          auto ga = a.grad();
          for (std::size_t i = 0; i < n; ++i) ga[i] += gy[i];
        }
        if (other.requires_grad()) {
          auto gb = other.grad();
          for (std::size_t i = 0; i < n; ++i) gb[i % plane] += gy[i];
        }
        break;
      case ElementwiseOp::kSquare: {
        auto ga = a.grad();
        for (std::size_t i = 0; i < n; ++i) ga[i] += 2.0 * x[i] * gy[i];
        break;
      }
      case ElementwiseOp::kSigmoid: {
        auto ga = a.grad();
        auto s = out.data();
        for (std::size_t i = 0; i < n; ++i) ga[i] += gy[i] * s[i] * (1.0 - s[i]);
        break;
      }
    }
  });
  return out;
}

Grid ShiftedSoftplus(Tape& tape, const Grid& a) {
  Grid out(a.shape());
  auto x = a.data();
  auto y = out.mutable_data();
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x[i];
    const double softplus = v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
    y[i] = softplus - std::numbers::ln2;
  }
  if (!a.requires_grad()) return out;
  tape.record({a}, out, [a, out]() mutable {
    auto gy = out.grad();
    auto ga = a.grad();
    auto x = a.data();
    for (std::size_t i = 0; i < x.size(); ++i) ga[i] += gy[i] * StableSigmoid(x[i]);
  });
  return out;
}

Grid SoftmaxChannels(Tape& tape, const Grid& input) {
  RequireRank(input, 3, "softmax_channels");
  if (input.channels() != 2) {
    throw ShapeError("softmax_channels: expected 2 channels, got " +
                     ShapeString(input.shape()));
  }
  const std::size_t plane = static_cast<std::size_t>(input.height()) * input.width();
  Grid out(Shape{1, input.height(), input.width()});
  auto x = input.data();
  auto y = out.mutable_data();
  for (std::size_t i = 0; i < plane; ++i) y[i] = StableSigmoid(x[i] - x[plane + i]);
  if (!input.requires_grad()) return out;
  tape.record({input}, out, [input, out, plane]() mutable {
    auto gy = out.grad();
    auto gx = input.grad();
    auto s = out.data();
    for (std::size_t i = 0; i < plane; ++i) {
      const double d = gy[i] * s[i] * (1.0 - s[i]);
      gx[i] += d;
      gx[plane + i] -= d;
    }
  });
  return out;
}

Grid L2NormalizeChannels(Tape& tape, const Grid& input, double eps) {
  RequireRank(input, 3, "l2_normalize_channels");
  if (!(eps > 0.0)) throw std::invalid_argument("l2_normalize_channels: eps must be > 0");
  const int depth = input.channels();
  const std::size_t plane = static_cast<std::size_t>(input.height()) * input.width();
  Grid out(input.shape());
  std::vector<double> denom(plane);
  auto x = input.data();
  auto y = out.mutable_data();
  for (std::size_t p = 0; p < plane; ++p) {
    double sq = 0.0;
    for (int c = 0; c < depth; ++c) sq += x[c * plane + p] * x[c * plane + p];
    denom[p] = std::max(std::sqrt(sq), eps);
    for (int c = 0; c < depth; ++c) y[c * plane + p] = x[c * plane + p] / denom[p];
  }
  if (!input.requires_grad()) return out;
  tape.record({input}, out, [input, out, denom = std::move(denom), depth, plane,
                             eps]() mutable {
    auto gy = out.grad();
    auto gx = input.grad();
    auto y = out.data();
    for (std::size_t p = 0; p < plane; ++p) {
      if (denom[p] > eps) {
        double dot = 0.0;
        for (int c = 0; c < depth; ++c) dot += y[c * plane + p] * gy[c * plane + p];
        for (int c = 0; c < depth; ++c) {
          gx[c * plane + p] += (gy[c * plane + p] - y[c * plane + p] * dot) / denom[p];
        }
      } else {
        for (int c = 0; c < depth; ++c) gx[c * plane + p] += gy[c * plane + p] / eps;
      }
    }
  });
  return out;
}

Grid ConcatChannels(Tape& tape, const Grid& a, const Grid& b) {
  RequireRank(a, 3, "concat_channels");
  RequireRank(b, 3, "concat_channels");
  if (a.height() != b.height() || a.width() != b.width()) {
    throw ShapeError("concat_channels: spatial mismatch " + ShapeString(a.shape()) +
                     " vs " + ShapeString(b.shape()));
  }
  Grid out(Shape{a.channels() + b.channels(), a.height(), a.width()});
  auto y = out.mutable_data();
  std::copy(a.data().begin(), a.data().end(), y.begin());
  std::copy(b.data().begin(), b.data().end(), y.begin() + a.size());
  if (!AnyRequiresGrad({&a, &b})) return out;
  tape.record({a, b}, out, [a, b, out]() mutable {
    auto gy = out.grad();
    if (a.requires_grad()) {
      auto ga = a.grad();
      for (std::size_t i = 0; i < a.size(); ++i) ga[i] += gy[i];
    }
    if (b.requires_grad()) {
      auto gb = b.grad();
      for (std::size_t i = 0; i < b.size(); ++i) gb[i] += gy[a.size() + i];
    }
  });
  return out;
}

Grid AvgPool2(Tape& tape, const Grid& input) {
  RequireRank(input, 3, "avg_pool2");
  const int c = input.channels(), h = input.height(), w = input.width();
  if (h % 2 != 0 || w % 2 != 0) {
    throw ShapeError("avg_pool2: odd spatial size " + ShapeString(input.shape()));
  }
  const int oh = h / 2, ow = w / 2;
  Grid out(Shape{c, oh, ow});
  auto x = input.data();
  auto y = out.mutable_data();
  for (int ch = 0; ch < c; ++ch) {
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        const std::size_t base = (static_cast<std::size_t>(ch) * h + 2 * oy) * w + 2 * ox;
        y[(static_cast<std::size_t>(ch) * oh + oy) * ow + ox] =
            0.25 * (x[base] + x[base + 1] + x[base + w] + x[base + w + 1]);
      }
    }
  }
  if (!input.requires_grad()) return out;
  tape.record({input}, out, [input, out, c, h, w, oh, ow]() mutable {
    auto gy = out.grad();
    auto gx = input.grad();
    for (int ch = 0; ch < c; ++ch) {
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
          const double g = 0.25 * gy[(static_cast<std::size_t>(ch) * oh + oy) * ow + ox];
          const std::size_t base = (static_cast<std::size_t>(ch) * h + 2 * oy) * w + 2 * ox;
          gx[base] += g;
          gx[base + 1] += g;
          gx[base + w] += g;
          gx[base + w + 1] += g;
        }
      }
    }
  });
  return out;
}

Grid UpsampleNearest2(Tape& tape, const Grid& input) {
  RequireRank(input, 3, "upsample_nearest2");
  const int c = input.channels(), h = input.height(), w = input.width();
  const int oh = 2 * h, ow = 2 * w;
  Grid out(Shape{c, oh, ow});
  auto x = input.data();
  auto y = out.mutable_data();
  for (int ch = 0; ch < c; ++ch) {
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        y[(static_cast<std::size_t>(ch) * oh + oy) * ow + ox] =
            x[(static_cast<std::size_t>(ch) * h + oy / 2) * w + ox / 2];
      }
    }
  }
  if (!input.requires_grad()) return out;
  tape.record({input}, out, [input, out, c, h, w, oh, ow]() mutable {
    auto gy = out.grad();
    auto gx = input.grad();
    for (int ch = 0; ch < c; ++ch) {
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
          gx[(static_cast<std::size_t>(ch) * h + oy / 2) * w + ox / 2] +=
              gy[(static_cast<std::size_t>(ch) * oh + oy) * ow + ox];
        }
      }
    }
  });
  return out;
}

Grid Sum(Tape& tape, const Grid& a) {
  double total = 0.0;
  for (double v : a.data()) total += v;
  Grid out = Grid::Scalar(total);
  if (!a.requires_grad()) return out;
  tape.record({a}, out, [a, out]() mutable {
    const double g = out.grad()[0];
    for (double& v : a.grad()) v += g;
  });
  return out;
}

Grid Mean(Tape& tape, const Grid& a) {
  return Scale(tape, Sum(tape, a), 1.0 / static_cast<double>(a.size()));
}

Grid Scale(Tape& tape, const Grid& a, double factor) {
  Grid out(a.shape());
  auto x = a.data();
  auto y = out.mutable_data();
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = factor * x[i];
  if (!a.requires_grad()) return out;
  tape.record({a}, out, [a, out, factor]() mutable {
    auto gy = out.grad();
    auto ga = a.grad();
    for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += factor * gy[i];
  });
  return out;
}

Grid Detach(const Grid& a) {
  return Grid(a.shape(), std::vector<double>(a.data().begin(), a.data().end()));
}

}  // namespace ctxfeat
