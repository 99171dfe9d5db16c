#pragma once

// Global temporal-aware convolution: a 2D convolution whose weights and
// biases are rescaled per output channel, frame by frame, by factors derived
// from the preceding k-frame feature window.

#include <deque>
#include <string>
#include <vector>

#include "tsdet/tensor.hpp"
#include "tsdet/tsio.hpp"

namespace tsdet {

template <typename Scalar>
struct GtConvLayer {
  ConvParams<Scalar> base;       // [Cout, Cin, kh, kw]
  ConvParams<Scalar> f_agg_gap;  // [Cs, Cin, 1, 1, 1]
  ConvParams<Scalar> f_agg_sap;  // [Cs, Cin, 1, 1, 1]
  BatchNormParams<Scalar> bn;    // Cs channels
  ConvParams<Scalar> f_w;        // [Cout, Cs, 3, 1, 1], temporal padding 1
  ConvParams<Scalar> f_b;        // [Cout, Cs, 3, 1, 1], temporal padding 1
  ConvParams<Scalar> sap_attn;   // [1, Cin, 1, 1]

  Index in_channels() const { return base.in_channels(); }
  Index out_channels() const { return base.out_channels(); }
  Index summary_channels() const { return f_agg_gap.out_channels(); }

  /// Layer with neutral batch norm and zero-initialized generators, so that
  /// every calibration factor is exactly 1.
  static GtConvLayer identity_calibration(ConvParams<Scalar> base, Index summary_channels) {
    const Index cin = base.in_channels(), cout = base.out_channels();
    GtConvLayer layer{std::move(base),
                      make_conv3d<Scalar>(summary_channels, cin, 1),
                      make_conv3d<Scalar>(summary_channels, cin, 1),
                      BatchNormParams<Scalar>::neutral(summary_channels),
                      make_conv3d<Scalar>(cout, summary_channels, 3),
                      make_conv3d<Scalar>(cout, summary_channels, 3),
                      make_conv2d<Scalar>(1, cin, 1)};
    layer.validate();
    return layer;
  }

  void validate() const {
    base.validate(4);
    f_agg_gap.validate(5);
    f_agg_sap.validate(5);
    f_w.validate(5);
    f_b.validate(5);
    sap_attn.validate(4);
    const Index cin = in_channels(), cout = out_channels(), cs = summary_channels();
    auto fail = [](const std::string& what) { throw InvalidInput("gtconv: " + what); };
    if (f_agg_gap.in_channels() != cin || f_agg_sap.in_channels() != cin) {
      fail("aggregation convs must read the layer's input channels");
    }
    if (f_agg_sap.out_channels() != cs) fail("GAP and SAP aggregation widths differ");
    if (f_agg_gap.weight.extent(2) != 1 || f_agg_sap.weight.extent(2) != 1) {
      fail("aggregation convs must have temporal kernel 1");
    }
    if (bn.mean.size() != cs) fail("batch norm width differs from summary width");
    if (f_w.out_channels() != cout || f_b.out_channels() != cout) {
      fail("calibration generators must emit one factor per output channel");
    }
    if (f_w.in_channels() != cs || f_b.in_channels() != cs) {
      fail("calibration generators must read the summary channels");
    }
    if (sap_attn.in_channels() != cin || sap_attn.out_channels() != 1) {
      fail("SAP attention must map the input channels to one score map");
    }
  }
};

/// Rolling window of the last k per-frame feature tensors, oldest first.
template <typename Scalar>
class FrameSequenceBuffer {
 public:
  explicit FrameSequenceBuffer(std::size_t capacity = 4) : capacity_(capacity) {
    if (capacity_ == 0) throw InvalidInput("frame buffer capacity must be positive");
  }

  void push(Tensor<Scalar> frame) {
    if (!frames_.empty() && frames_.back().dims() != frame.dims()) {
      throw InvalidInput("frame buffer: shape " + shape_str(frame.dims()) +
                         " differs from buffered " + shape_str(frames_.back().dims()));
    }
    frames_.push_back(std::move(frame));
    if (frames_.size() > capacity_) frames_.pop_front();
  }

  void clear() { frames_.clear(); }

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return frames_.size(); }
  bool empty() const { return frames_.empty(); }
  const Tensor<Scalar>& newest() const {
    if (frames_.empty()) throw InvalidInput("frame buffer is empty");
    return frames_.back();
  }

  /// [k, C, H, W]; missing history is filled by repeating the oldest frame.
  Tensor<Scalar> window() const {
    if (frames_.empty()) throw InvalidInput("frame buffer is empty");
    std::vector<Tensor<Scalar>> seq(capacity_ - frames_.size(), frames_.front());
    seq.insert(seq.end(), frames_.begin(), frames_.end());
    return stack(seq);
  }

 private:
  std::size_t capacity_;
  std::deque<Tensor<Scalar>> frames_;
};

/// S = BN(ReLU(F_gap(GAP(seq)) + F_sap(SAP(seq)))) for seq [k, C, H, W];
/// output [k, Cs, 1, 1]. Each frame is pooled independently.
template <typename Scalar>
Tensor<Scalar> temporal_summary(const Tensor<Scalar>& seq, const GtConvLayer<Scalar>& layer) {
  if (seq.rank() != 4) {
    throw InvalidInput("temporal_summary expects [k,C,H,W], got " + shape_str(seq.dims()));
  }
  const Tensor<Scalar> pooled_gap = gap(seq);
  const Tensor<Scalar> pooled_sap = sap(seq, layer.sap_attn);
  return batchnorm_inference(
      relu(conv3d(pooled_gap, layer.f_agg_gap) + conv3d(pooled_sap, layer.f_agg_sap)), layer.bn);
}

template <typename Scalar>
struct CalibrationFactors {
  Eigen::Array<Scalar, Eigen::Dynamic, 1> weight;  // [Cout]
  Eigen::Array<Scalar, Eigen::Dynamic, 1> bias;    // [Cout]
};

/// alpha = 1 + F(S) where F is the [3,1,1] temporal conv; the factor at the
/// newest temporal index is the one used for the current frame.
template <typename Scalar>
CalibrationFactors<Scalar> calibration_factors(const Tensor<Scalar>& summary,
                                               const GtConvLayer<Scalar>& layer) {
  auto newest = [&](const ConvParams<Scalar>& gen) {
    const Tensor<Scalar> out = conv3d(summary, gen);  // [T', Cout, 1, 1]
    const Tensor<Scalar> last = out.frame(out.extent(0) - 1);
    return Eigen::Array<Scalar, Eigen::Dynamic, 1>(Scalar(1) + last.values());
  };
  return {newest(layer.f_w), newest(layer.f_b)};
}

/// Base params with W scaled per output channel by alpha.weight and b by
/// alpha.bias.
template <typename Scalar>
ConvParams<Scalar> calibrated(const ConvParams<Scalar>& base,
                              const CalibrationFactors<Scalar>& alpha) {
  ConvParams<Scalar> p = base;
  const Index cout = base.out_channels();
  const Index per_channel = base.weight.size() / cout;
  for (Index o = 0; o < cout; ++o) {
    p.weight.values().segment(o * per_channel, per_channel) *= alpha.weight[o];
  }
  p.bias.values() *= alpha.bias;
  return p;
}

/// Output of the calibrated convolution for the newest buffered frame `x_t`.
template <typename Scalar>
Tensor<Scalar> gtconv_forward(const Tensor<Scalar>& x_t, const FrameSequenceBuffer<Scalar>& buffer,
                              const GtConvLayer<Scalar>& layer) {
  if (!(buffer.newest() == x_t)) {
    throw InvalidInput("gtconv_forward: the buffer's newest frame must be the current input");
  }
  const auto alpha = calibration_factors(temporal_summary(buffer.window(), layer), layer);
  return conv2d(x_t, calibrated(layer.base, alpha));
}

// ---------------------------------------------------------------------------
// Weight loading. Names follow `gtconv.<part>.<field>`; 2D convs use "same"
// padding (k/2), temporal convs pad kt/2, batch norm uses eps 1e-5.

inline std::vector<std::string> gtconv_weight_names() {
  std::vector<std::string> names;
  for (const char* part : {"base", "f_agg_gap", "f_agg_sap", "f_w", "f_b", "sap_attn"}) {
    names.push_back(std::string("gtconv.") + part + ".weight");
    names.push_back(std::string("gtconv.") + part + ".bias");
  }
  for (const char* field : {"mean", "var", "gamma", "beta"}) {
    names.push_back(std::string("gtconv.bn.") + field);
  }
  return names;
}

namespace detail {

template <typename Scalar>
Tensor<Scalar> cast_tensor(const TensorD& t) {
  return Tensor<Scalar>(t.dims(), typename Tensor<Scalar>::Storage(t.values().cast<Scalar>()));
}

template <typename Scalar>
ConvParams<Scalar> load_conv(const NamedTensors& w, const std::string& prefix) {
  ConvParams<Scalar> p{cast_tensor<Scalar>(w.at(prefix + ".weight")),
                       cast_tensor<Scalar>(w.at(prefix + ".bias")), 1, 0};
  // kh for 2D kernels, kt for temporal ones.
  if (p.weight.rank() >= 3) p.padding = p.weight.extent(2) / 2;
  return p;
}

inline void require_weights(const NamedTensors& w, const std::vector<std::string>& names) {
  const auto missing = missing_names(w, names);
  if (missing.empty()) return;
  std::string msg = "missing weights:";
  for (const auto& n : missing) msg += " " + n;
  throw InvalidInput(msg);
}

}  // namespace detail

template <typename Scalar>
GtConvLayer<Scalar> load_gtconv(const NamedTensors& w) {
  detail::require_weights(w, gtconv_weight_names());
  auto vec = [&](const char* field) {
    return Eigen::Array<Scalar, Eigen::Dynamic, 1>(
        w.at(std::string("gtconv.bn.") + field).values().template cast<Scalar>());
  };
  GtConvLayer<Scalar> layer{detail::load_conv<Scalar>(w, "gtconv.base"),
                            detail::load_conv<Scalar>(w, "gtconv.f_agg_gap"),
                            detail::load_conv<Scalar>(w, "gtconv.f_agg_sap"),
                            {vec("mean"), vec("var"), vec("gamma"), vec("beta"), Scalar(1e-5)},
                            detail::load_conv<Scalar>(w, "gtconv.f_w"),
                            detail::load_conv<Scalar>(w, "gtconv.f_b"),
                            detail::load_conv<Scalar>(w, "gtconv.sap_attn")};
  layer.validate();
  return layer;
}

}  // namespace tsdet
