#pragma once

// Dense N-d tensor and the forward-only kernels used by the temporal modules.
// Storage is a contiguous row-major Eigen array; kernels lower onto Eigen
// matrix products (im2col for 2D convolution, per-tap GEMMs for temporal
// convolution).

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "tsdet/detgeom.hpp"

namespace tsdet {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

inline Index shape_size(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), Index{1}, std::multiplies<>());
}

template <typename Scalar>
class Tensor {
 public:
  using Storage = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  Tensor() : Tensor(Shape{1}) {}

  explicit Tensor(Shape dims, Scalar fill = Scalar(0)) : dims_(std::move(dims)) {
    check_dims(dims_);
    data_ = Storage::Constant(shape_size(dims_), fill);
  }

  Tensor(Shape dims, Storage data) : dims_(std::move(dims)), data_(std::move(data)) {
    check_dims(dims_);
    if (data_.size() != shape_size(dims_)) {
      throw InvalidInput("tensor data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_str(dims_));
    }
  }

  Tensor(Shape dims, std::initializer_list<Scalar> values)
      : Tensor(std::move(dims), Storage(Eigen::Map<const Storage>(
                                    values.begin(), static_cast<Index>(values.size())))) {}

  static Tensor zeros(Shape dims) { return Tensor(std::move(dims), Scalar(0)); }

  const Shape& dims() const { return dims_; }
  Index rank() const { return static_cast<Index>(dims_.size()); }
  Index extent(Index axis) const { return dims_.at(static_cast<std::size_t>(axis)); }
  Index size() const { return data_.size(); }

  Storage& values() { return data_; }
  const Storage& values() const { return data_; }
  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }

  template <typename... Idx>
  Scalar& operator()(Idx... idx) {
    return data_[offset({static_cast<Index>(idx)...})];
  }
  template <typename... Idx>
  const Scalar& operator()(Idx... idx) const {
    return data_[offset({static_cast<Index>(idx)...})];
  }

  Tensor reshaped(Shape dims) const {
    if (shape_size(dims) != size()) {
      throw InvalidInput("cannot reshape " + shape_str(dims_) + " to " + shape_str(dims));
    }
    return Tensor(std::move(dims), data_);
  }

  /// Slice along the leading axis.
  Tensor frame(Index t) const {
    if (rank() < 2 || t < 0 || t >= dims_[0]) {
      throw InvalidInput("frame " + std::to_string(t) + " out of range for " + shape_str(dims_));
    }
    Shape inner(dims_.begin() + 1, dims_.end());
    const Index n = shape_size(inner);
    return Tensor(std::move(inner), Storage(data_.segment(t * n, n)));
  }

  /// Row-major view as (extent(0), rest) matrix.
  Eigen::Map<const RowMatrix> as_matrix() const {
    return {data_.data(), dims_[0], size() / dims_[0]};
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.dims_ == b.dims_ && (a.data_ == b.data_).all();
  }

 private:
  static void check_dims(const Shape& dims) {
    if (dims.empty()) throw InvalidInput("tensor must have rank >= 1");
    for (Index d : dims) {
      if (d < 1) throw InvalidInput("tensor extents must be >= 1, got " + shape_str(dims));
    }
  }

  Index offset(std::initializer_list<Index> idx) const {
    if (idx.size() != dims_.size()) {
      throw InvalidInput("index rank mismatch for tensor " + shape_str(dims_));
    }
    Index off = 0;
    std::size_t axis = 0;
    for (Index i : idx) {
      if (i < 0 || i >= dims_[axis]) {
        throw InvalidInput("index out of range for tensor " + shape_str(dims_));
      }
      off = off * dims_[axis] + i;
      ++axis;
    }
    return off;
  }

  Shape dims_;
  Storage data_;
};

using TensorD = Tensor<double>;
using TensorF = Tensor<float>;

/// Stacks equally shaped tensors along a new leading axis.
template <typename Scalar>
Tensor<Scalar> stack(std::span<const Tensor<Scalar>> xs) {
  if (xs.empty()) throw InvalidInput("stack of zero tensors");
  const Shape& inner = xs.front().dims();
  const Index n = xs.front().size();
  Shape dims{static_cast<Index>(xs.size())};
  dims.insert(dims.end(), inner.begin(), inner.end());
  typename Tensor<Scalar>::Storage data(n * static_cast<Index>(xs.size()));
  for (std::size_t t = 0; t < xs.size(); ++t) {
    if (xs[t].dims() != inner) {
      throw InvalidInput("stack: shape " + shape_str(xs[t].dims()) + " differs from " +
                         shape_str(inner));
    }
    data.segment(static_cast<Index>(t) * n, n) = xs[t].values();
  }
  return Tensor<Scalar>(std::move(dims), std::move(data));
}

template <typename Scalar>
Tensor<Scalar> stack(const std::vector<Tensor<Scalar>>& xs) {
  return stack(std::span<const Tensor<Scalar>>(xs));
}

namespace detail {

template <typename Scalar>
void require_same_shape(const Tensor<Scalar>& a, const Tensor<Scalar>& b, const char* op) {
  if (a.dims() != b.dims()) {
    throw InvalidInput(std::string(op) + ": shape mismatch " + shape_str(a.dims()) + " vs " +
                       shape_str(b.dims()));
  }
}

template <typename Scalar, typename Fn>
Tensor<Scalar> map_values(const Tensor<Scalar>& x, Fn&& fn) {
  return Tensor<Scalar>(x.dims(), typename Tensor<Scalar>::Storage(fn(x.values())));
}

}  // namespace detail

// Elementwise arithmetic.

template <typename Scalar>
Tensor<Scalar> operator+(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  detail::require_same_shape(a, b, "add");
  return Tensor<Scalar>(a.dims(), typename Tensor<Scalar>::Storage(a.values() + b.values()));
}

template <typename Scalar>
Tensor<Scalar> operator-(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  detail::require_same_shape(a, b, "sub");
  return Tensor<Scalar>(a.dims(), typename Tensor<Scalar>::Storage(a.values() - b.values()));
}

/// Hadamard product.
template <typename Scalar>
Tensor<Scalar> operator*(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  detail::require_same_shape(a, b, "mul");
  return Tensor<Scalar>(a.dims(), typename Tensor<Scalar>::Storage(a.values() * b.values()));
}

template <typename Scalar>
Tensor<Scalar> operator*(Scalar s, const Tensor<Scalar>& a) {
  return Tensor<Scalar>(a.dims(), typename Tensor<Scalar>::Storage(s * a.values()));
}

// Activations.

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& x) {
  return detail::map_values(x, [](const auto& v) { return v.max(Scalar(0)); });
}

template <typename Scalar>
Tensor<Scalar> sigmoid(const Tensor<Scalar>& x) {
  return detail::map_values(x, [](const auto& v) { return (Scalar(1) + (-v).exp()).inverse(); });
}

template <typename Scalar>
Tensor<Scalar> tanh(const Tensor<Scalar>& x) {
  return detail::map_values(x, [](const auto& v) { return v.tanh(); });
}

/// Weight and bias of a convolution. Kernels are cross-correlations.
template <typename Scalar>
struct ConvParams {
  Tensor<Scalar> weight;  // [Cout, Cin, kh, kw] or [Cout, Cin, kt, kh, kw]
  Tensor<Scalar> bias;    // [Cout]
  Index stride = 1;
  Index padding = 0;

  Index out_channels() const { return weight.extent(0); }
  Index in_channels() const { return weight.extent(1); }

  void validate(Index kernel_rank) const {
    if (weight.rank() != kernel_rank) {
      throw InvalidInput("conv weight must have rank " + std::to_string(kernel_rank) + ", got " +
                         shape_str(weight.dims()));
    }
    if (bias.rank() != 1 || bias.extent(0) != weight.extent(0)) {
      throw InvalidInput("conv bias " + shape_str(bias.dims()) + " does not match weight " +
                         shape_str(weight.dims()));
    }
    if (stride < 1 || padding < 0) throw InvalidInput("conv stride must be >= 1, padding >= 0");
  }
};

/// Zero-initialized params with "same" padding for odd kernels.
template <typename Scalar>
ConvParams<Scalar> make_conv2d(Index cout, Index cin, Index k) {
  return {Tensor<Scalar>::zeros({cout, cin, k, k}), Tensor<Scalar>::zeros({cout}), 1, k / 2};
}

/// Zero-initialized temporal params with kernel [kt, 1, 1] and padding kt/2.
template <typename Scalar>
ConvParams<Scalar> make_conv3d(Index cout, Index cin, Index kt) {
  return {Tensor<Scalar>::zeros({cout, cin, kt, 1, 1}), Tensor<Scalar>::zeros({cout}), 1, kt / 2};
}

/// 2D convolution of x [C, H, W]; output [Cout, H', W'] with
/// H' = (H + 2*pad - kh) / stride + 1, which must be integral.
template <typename Scalar>
Tensor<Scalar> conv2d(const Tensor<Scalar>& x, const ConvParams<Scalar>& p) {
  using RowMatrix = typename Tensor<Scalar>::RowMatrix;
  p.validate(4);
  if (x.rank() != 3 || x.extent(0) != p.in_channels()) {
    throw InvalidInput("conv2d: input " + shape_str(x.dims()) + " incompatible with weight " +
                       shape_str(p.weight.dims()));
  }
  const Index cin = x.extent(0), h = x.extent(1), w = x.extent(2);
  const Index cout = p.out_channels(), kh = p.weight.extent(2), kw = p.weight.extent(3);
  const Index pad = p.padding, stride = p.stride;
  const Index span_h = h + 2 * pad - kh, span_w = w + 2 * pad - kw;
  if (span_h < 0 || span_w < 0 || span_h % stride != 0 || span_w % stride != 0) {
    throw InvalidInput("conv2d: input " + shape_str(x.dims()) + " with weight " +
                       shape_str(p.weight.dims()) + ", stride " + std::to_string(stride) +
                       ", padding " + std::to_string(pad) + " gives non-integral output");
  }
  const Index oh = span_h / stride + 1, ow = span_w / stride + 1;

  RowMatrix cols = RowMatrix::Zero(cin * kh * kw, oh * ow);
  for (Index c = 0; c < cin; ++c) {
    for (Index ky = 0; ky < kh; ++ky) {
      for (Index kx = 0; kx < kw; ++kx) {
        const Index row = (c * kh + ky) * kw + kx;
        for (Index oy = 0; oy < oh; ++oy) {
          const Index iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          for (Index ox = 0; ox < ow; ++ox) {
            const Index ix = ox * stride - pad + kx;
            if (ix < 0 || ix >= w) continue;
            cols(row, oy * ow + ox) = x.data()[(c * h + iy) * w + ix];
          }
        }
      }
    }
  }

  Eigen::Map<const RowMatrix> weights(p.weight.data(), cout, cin * kh * kw);
  Tensor<Scalar> out({cout, oh, ow});
  Eigen::Map<RowMatrix> result(out.data(), cout, oh * ow);
  result.noalias() = weights * cols;
  result.colwise() += p.bias.values().matrix();
  return out;
}

/// Temporal convolution of x [T, C, H, W] with weight [Cout, Cin, kt, 1, 1].
/// Stride 1; `padding` zero-pads the temporal axis only. Output is
/// [T + 2*pad - kt + 1, Cout, H, W].
template <typename Scalar>
Tensor<Scalar> conv3d(const Tensor<Scalar>& x, const ConvParams<Scalar>& p) {
  using RowMatrix = typename Tensor<Scalar>::RowMatrix;
  p.validate(5);
  if (p.weight.extent(3) != 1 || p.weight.extent(4) != 1) {
    throw InvalidInput("conv3d: only 1x1 spatial footprints are supported, got " +
                       shape_str(p.weight.dims()));
  }
  if (p.stride != 1) throw InvalidInput("conv3d: stride must be 1");
  if (x.rank() != 4 || x.extent(1) != p.in_channels()) {
    throw InvalidInput("conv3d: input " + shape_str(x.dims()) + " incompatible with weight " +
                       shape_str(p.weight.dims()));
  }
  const Index t_in = x.extent(0), cin = x.extent(1), hw = x.extent(2) * x.extent(3);
  const Index cout = p.out_channels(), kt = p.weight.extent(2), pad = p.padding;
  const Index t_out = t_in + 2 * pad - kt + 1;
  if (t_out < 1) {
    throw InvalidInput("conv3d: temporal kernel " + std::to_string(kt) +
                       " longer than padded input " + shape_str(x.dims()));
  }

  // Per-tap weight slices W[:, :, dt] as (Cout x Cin) matrices.
  std::vector<RowMatrix> taps(static_cast<std::size_t>(kt), RowMatrix(cout, cin));
  for (Index o = 0; o < cout; ++o) {
    for (Index c = 0; c < cin; ++c) {
      for (Index dt = 0; dt < kt; ++dt) {
        taps[static_cast<std::size_t>(dt)](o, c) = p.weight.data()[(o * cin + c) * kt + dt];
      }
    }
  }

  Tensor<Scalar> out({t_out, cout, x.extent(2), x.extent(3)});
  for (Index t = 0; t < t_out; ++t) {
    Eigen::Map<RowMatrix> dst(out.data() + t * cout * hw, cout, hw);
    dst.colwise() = p.bias.values().matrix();
    for (Index dt = 0; dt < kt; ++dt) {
      const Index src_t = t - pad + dt;
      if (src_t < 0 || src_t >= t_in) continue;
      Eigen::Map<const RowMatrix> src(x.data() + src_t * cin * hw, cin, hw);
      dst.noalias() += taps[static_cast<std::size_t>(dt)] * src;
    }
  }
  return out;
}

namespace detail {

// Applies a [C,H,W] -> [C',1,1] reduction to a rank-3 tensor, or to each
// frame of a rank-4 [T,C,H,W] tensor with the results stacked along T.
template <typename Scalar, typename Fn>
Tensor<Scalar> per_frame(const Tensor<Scalar>& x, Fn&& fn) {
  if (x.rank() == 3) return fn(x);
  if (x.rank() != 4) {
    throw InvalidInput("expected [C,H,W] or [T,C,H,W], got " + shape_str(x.dims()));
  }
  std::vector<Tensor<Scalar>> frames;
  frames.reserve(static_cast<std::size_t>(x.extent(0)));
  for (Index t = 0; t < x.extent(0); ++t) frames.push_back(fn(x.frame(t)));
  return stack(frames);
}

}  // namespace detail

/// Global average pooling: [C,H,W] -> [C,1,1] (or per frame of [T,C,H,W]).
template <typename Scalar>
Tensor<Scalar> gap(const Tensor<Scalar>& x) {
  return detail::per_frame(x, [](const Tensor<Scalar>& f) {
    const Index c = f.extent(0);
    return Tensor<Scalar>({c, 1, 1},
                          typename Tensor<Scalar>::Storage(f.as_matrix().rowwise().mean().array()));
  });
}

/// Spatial attention pooling. A 1x1 convolution `attn` (C -> 1) scores every
/// pixel, a softmax over the H*W positions turns the scores into weights, and
/// each channel is reduced to its weighted sum. Constant scores reduce to gap.
template <typename Scalar>
Tensor<Scalar> sap(const Tensor<Scalar>& x, const ConvParams<Scalar>& attn) {
  if (attn.weight.rank() != 4 || attn.out_channels() != 1 || attn.weight.extent(2) != 1 ||
      attn.weight.extent(3) != 1) {
    throw InvalidInput("sap: attention must be a 1x1 convolution to one channel, got " +
                       shape_str(attn.weight.dims()));
  }
  return detail::per_frame(x, [&](const Tensor<Scalar>& f) {
    const Tensor<Scalar> scores = conv2d(f, attn);
    const auto& s = scores.values();
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> weights = (s - s.maxCoeff()).exp().matrix();
    weights /= weights.sum();
    return Tensor<Scalar>({f.extent(0), 1, 1},
                          typename Tensor<Scalar>::Storage((f.as_matrix() * weights).array()));
  });
}

/// Stored batch-norm statistics (inference mode).
template <typename Scalar>
struct BatchNormParams {
  Eigen::Array<Scalar, Eigen::Dynamic, 1> mean;
  Eigen::Array<Scalar, Eigen::Dynamic, 1> var;
  Eigen::Array<Scalar, Eigen::Dynamic, 1> gamma;
  Eigen::Array<Scalar, Eigen::Dynamic, 1> beta;
  Scalar eps = Scalar(1e-5);

  /// mean 0, var 1, gamma 1, beta 0.
  static BatchNormParams neutral(Index channels, Scalar eps = Scalar(0)) {
    using A = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
    return {A::Zero(channels), A::Ones(channels), A::Ones(channels), A::Zero(channels), eps};
  }
};

/// Channel axis convention: axis rank-3 ([C,H,W] -> 0, [T,C,H,W] -> 1).
template <typename Scalar>
Index channel_axis(const Tensor<Scalar>& x) {
  if (x.rank() < 3) {
    throw InvalidInput("expected a [.., C, H, W] tensor, got " + shape_str(x.dims()));
  }
  return x.rank() - 3;
}

/// (x - mean) / sqrt(var + eps) * gamma + beta, per channel.
template <typename Scalar>
Tensor<Scalar> batchnorm_inference(const Tensor<Scalar>& x, const BatchNormParams<Scalar>& bn) {
  const Index axis = channel_axis(x);
  const Index c = x.extent(axis);
  if (bn.mean.size() != c || bn.var.size() != c || bn.gamma.size() != c || bn.beta.size() != c) {
    throw InvalidInput("batchnorm: statistics do not match " + std::to_string(c) + " channels");
  }
  if ((bn.var < Scalar(0)).any()) throw InvalidInput("batchnorm: negative variance");
  if (bn.eps < Scalar(0)) throw InvalidInput("batchnorm: negative eps");

  const auto scale = (bn.gamma / (bn.var + bn.eps).sqrt()).eval();
  const auto shift = (bn.beta - bn.mean * scale).eval();
  const Index inner = x.extent(axis + 1) * x.extent(axis + 2);
  const Index outer = x.size() / (c * inner);
  Tensor<Scalar> out = x;
  for (Index o = 0; o < outer; ++o) {
    for (Index ch = 0; ch < c; ++ch) {
      auto seg = out.values().segment((o * c + ch) * inner, inner);
      seg = seg * scale[ch] + shift[ch];
    }
  }
  return out;
}

/// Concatenates along the channel axis; all other extents must agree.
template <typename Scalar>
Tensor<Scalar> concat_channels(std::span<const Tensor<Scalar>> xs) {
  if (xs.empty()) throw InvalidInput("concat of zero tensors");
  const Index axis = channel_axis(xs.front());
  Shape dims = xs.front().dims();
  Index total = 0;
  for (const auto& x : xs) {
    Shape a = x.dims(), b = dims;
    if (a.size() != b.size()) {
      throw InvalidInput("concat: rank mismatch " + shape_str(a) + " vs " + shape_str(b));
    }
    a[static_cast<std::size_t>(axis)] = b[static_cast<std::size_t>(axis)] = 0;
    if (a != b) {
      throw InvalidInput("concat: spatial mismatch " + shape_str(x.dims()) + " vs " +
                         shape_str(dims));
    }
    total += x.extent(axis);
  }
  dims[static_cast<std::size_t>(axis)] = total;
  const Index inner = dims[static_cast<std::size_t>(axis) + 1] *
                      dims[static_cast<std::size_t>(axis) + 2];
  const Index outer = shape_size(dims) / (total * inner);

  Tensor<Scalar> out(dims);
  Index pos = 0;
  for (Index o = 0; o < outer; ++o) {
    for (const auto& x : xs) {
      const Index n = x.extent(axis) * inner;
      out.values().segment(pos, n) = x.values().segment(o * n, n);
      pos += n;
    }
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> concat_channels(const std::vector<Tensor<Scalar>>& xs) {
  return concat_channels(std::span<const Tensor<Scalar>>(xs));
}

/// Inverse of concat_channels for the given channel counts.
template <typename Scalar>
std::vector<Tensor<Scalar>> split_channels(const Tensor<Scalar>& x, std::span<const Index> sizes) {
  const Index axis = channel_axis(x);
  if (std::accumulate(sizes.begin(), sizes.end(), Index{0}) != x.extent(axis)) {
    throw InvalidInput("split: channel counts do not sum to " + std::to_string(x.extent(axis)));
  }
  const Index inner = x.extent(axis + 1) * x.extent(axis + 2);
  const Index outer = x.size() / (x.extent(axis) * inner);
  std::vector<Tensor<Scalar>> parts;
  for (Index s : sizes) {
    Shape d = x.dims();
    d[static_cast<std::size_t>(axis)] = s;
    parts.emplace_back(d);
  }
  Index pos = 0;
  for (Index o = 0; o < outer; ++o) {
    for (std::size_t k = 0; k < parts.size(); ++k) {
      const Index n = sizes[k] * inner;
      parts[k].values().segment(o * n, n) = x.values().segment(pos, n);
      pos += n;
    }
  }
  return parts;
}

}  // namespace tsdet
