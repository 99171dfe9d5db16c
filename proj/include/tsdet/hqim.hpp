#pragma once

// Hierarchical queue integration: a convolutional LSTM whose output squash is
// a learned convolution, followed by a progressive fold of the last k hidden
// outputs into a single feature map.

#include <deque>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tsdet/gtconv.hpp"
#include "tsdet/tensor.hpp"

namespace tsdet {

// ---------------------------------------------------------------------------
// Classical dense LSTM, kept as a reference for the gate wiring.

template <typename Scalar>
struct DenseLstmParams {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  // Each gate matrix is [hidden, input + hidden] acting on [x; h_prev].
  Matrix w_f, w_i, w_o, w_c;
  Vector b_f, b_i, b_o, b_c;
};

template <typename Scalar>
struct DenseLstmState {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> h;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> c;
};

/// f gates the previous cell, i gates the candidate:
///   C_t = f * C_{t-1} + i * tanh(W_C [x, h] + b_C),  h_t = o * tanh(C_t)
template <typename Scalar>
DenseLstmState<Scalar> lstm_reference_step(const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& x,
                                           const DenseLstmState<Scalar>& state,
                                           const DenseLstmParams<Scalar>& p) {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> xh(x.size() + state.h.size());
  xh << x, state.h;
  auto sig = [](const auto& v) { return (Scalar(1) + (-v.array()).exp()).inverse().matrix(); };
  const auto f = sig(p.w_f * xh + p.b_f).eval();
  const auto i = sig(p.w_i * xh + p.b_i).eval();
  const auto o = sig(p.w_o * xh + p.b_o).eval();
  const auto cand = (p.w_c * xh + p.b_c).array().tanh().matrix().eval();
  DenseLstmState<Scalar> next;
  next.c = f.cwiseProduct(state.c) + i.cwiseProduct(cand);
  next.h = o.cwiseProduct(next.c.array().tanh().matrix());
  return next;
}

// ---------------------------------------------------------------------------
// Convolutional LSTM cell.

template <typename Scalar>
struct ConvLstmCell {
  // Gate convs read concat[x, h_prev] and emit the hidden width.
  ConvParams<Scalar> w_f, w_i, w_o, w_c;
  // Output fusion replacing tanh, hidden -> hidden, 3x3 in the default build.
  ConvParams<Scalar> fuse;

  Index hidden_channels() const { return w_f.out_channels(); }
  Index input_channels() const { return w_f.in_channels() - hidden_channels(); }

  void validate() const {
    for (const auto* g : {&w_f, &w_i, &w_o, &w_c}) {
      g->validate(4);
      if (g->weight.dims() != w_f.weight.dims()) {
        throw InvalidInput("convlstm: gate convs must share shapes, got " +
                           shape_str(g->weight.dims()) + " vs " + shape_str(w_f.weight.dims()));
      }
    }
    fuse.validate(4);
    if (input_channels() < 1) throw InvalidInput("convlstm: gate input narrower than hidden");
    if (fuse.in_channels() != hidden_channels() || fuse.out_channels() != hidden_channels()) {
      throw InvalidInput("convlstm: output fusion must map hidden -> hidden channels");
    }
  }

  /// Zero gates and fusion; `k_gate` is the gate kernel size.
  static ConvLstmCell zeros(Index input_channels, Index hidden_channels, Index k_gate = 3) {
    const Index cat = input_channels + hidden_channels;
    return {make_conv2d<Scalar>(hidden_channels, cat, k_gate),
            make_conv2d<Scalar>(hidden_channels, cat, k_gate),
            make_conv2d<Scalar>(hidden_channels, cat, k_gate),
            make_conv2d<Scalar>(hidden_channels, cat, k_gate),
            make_conv2d<Scalar>(hidden_channels, hidden_channels, 3)};
  }
};

template <typename Scalar>
struct LstmState {
  Tensor<Scalar> h;
  Tensor<Scalar> c;

  static LstmState zeros(Index channels, Index height, Index width) {
    return {Tensor<Scalar>::zeros({channels, height, width}),
            Tensor<Scalar>::zeros({channels, height, width})};
  }
};

/// Gates and cell update of one convolutional LSTM step, exposed for tests.
template <typename Scalar>
struct ConvLstmGates {
  Tensor<Scalar> f, i, o, candidate;
};

template <typename Scalar>
ConvLstmGates<Scalar> convlstm_gates(const Tensor<Scalar>& x, const LstmState<Scalar>& state,
                                     const ConvLstmCell<Scalar>& cell) {
  cell.validate();
  if (x.rank() != 3 || x.extent(0) != cell.input_channels()) {
    throw InvalidInput("convlstm: input " + shape_str(x.dims()) + " does not match cell input of " +
                       std::to_string(cell.input_channels()) + " channels");
  }
  if (state.h.dims() != state.c.dims() || state.h.rank() != 3 ||
      state.h.extent(0) != cell.hidden_channels() || state.h.extent(1) != x.extent(1) ||
      state.h.extent(2) != x.extent(2)) {
    throw InvalidInput("convlstm: state " + shape_str(state.h.dims()) + "/" +
                       shape_str(state.c.dims()) + " incompatible with input " +
                       shape_str(x.dims()));
  }
  const std::vector<Tensor<Scalar>> parts{x, state.h};
  const Tensor<Scalar> xh = concat_channels(parts);
  return {sigmoid(conv2d(xh, cell.w_f)), sigmoid(conv2d(xh, cell.w_i)),
          sigmoid(conv2d(xh, cell.w_o)), tanh(conv2d(xh, cell.w_c))};
}

/// One step: C_t = f * C_{t-1} + i * C~, h_t = F(o * C_t). The returned state
/// carries h_t as the recurrent hidden input for the next step.
template <typename Scalar>
LstmState<Scalar> convlstm_step(const Tensor<Scalar>& x, const LstmState<Scalar>& state,
                                const ConvLstmCell<Scalar>& cell) {
  const auto g = convlstm_gates(x, state, cell);
  Tensor<Scalar> c = g.f * state.c + g.i * g.candidate;
  Tensor<Scalar> h = conv2d(g.o * c, cell.fuse);
  return {std::move(h), std::move(c)};
}

/// Runs the cell over `seq` from `init`; returns the k hidden outputs in
/// temporal order and leaves the final state in `final_state` when given.
template <typename Scalar>
std::vector<Tensor<Scalar>> run_sequence(std::span<const Tensor<Scalar>> seq,
                                         const ConvLstmCell<Scalar>& cell,
                                         const LstmState<Scalar>& init,
                                         LstmState<Scalar>* final_state = nullptr) {
  std::vector<Tensor<Scalar>> hiddens;
  hiddens.reserve(seq.size());
  LstmState<Scalar> state = init;
  for (const auto& x : seq) {
    state = convlstm_step(x, state, cell);
    hiddens.push_back(state.h);
  }
  if (final_state) *final_state = std::move(state);
  return hiddens;
}

/// Same, starting from zero state.
template <typename Scalar>
std::vector<Tensor<Scalar>> run_sequence(std::span<const Tensor<Scalar>> seq,
                                         const ConvLstmCell<Scalar>& cell) {
  if (seq.empty()) return {};
  const auto& x = seq.front();
  if (x.rank() != 3) throw InvalidInput("run_sequence expects [C,H,W] frames");
  return run_sequence(seq, cell,
                      LstmState<Scalar>::zeros(cell.hidden_channels(), x.extent(1), x.extent(2)));
}

// ---------------------------------------------------------------------------
// Progressive accumulation.

/// Channel-halving reducers. Fold step s (merging hidden s+1 into the
/// accumulator) uses reducers[2s] on the accumulator and reducers[2s+1] on
/// the incoming hidden, so k hiddens need 2(k-1) reducers.
template <typename Scalar>
struct AccumulatorStack {
  std::vector<ConvParams<Scalar>> reducers;

  static std::size_t reducers_for(std::size_t k) { return k < 2 ? 0 : 2 * (k - 1); }

  void validate(Index channels) const {
    for (std::size_t r = 0; r < reducers.size(); ++r) {
      reducers[r].validate(4);
      if (reducers[r].in_channels() != channels || 2 * reducers[r].out_channels() != channels) {
        throw InvalidInput("accumulator reducer " + std::to_string(r) + " " +
                           shape_str(reducers[r].weight.dims()) + " must map " +
                           std::to_string(channels) + " -> " + std::to_string(channels / 2) +
                           " channels");
      }
    }
  }

  /// 3x3 zero reducers for k hiddens of `channels` channels.
  static AccumulatorStack zeros(Index channels, std::size_t k) {
    AccumulatorStack s;
    for (std::size_t r = 0; r < reducers_for(k); ++r) {
      s.reducers.push_back(make_conv2d<Scalar>(channels / 2, channels, 3));
    }
    return s;
  }
};

/// acc <- h_0; for each later hidden h_s: acc <- concat(R_a(acc), R_b(h_s)).
template <typename Scalar>
Tensor<Scalar> progressive_accumulate(std::span<const Tensor<Scalar>> hiddens,
                                      const AccumulatorStack<Scalar>& stack) {
  if (hiddens.empty()) throw InvalidInput("progressive_accumulate needs at least one hidden");
  Tensor<Scalar> acc = hiddens.front();
  if (hiddens.size() == 1) return acc;
  const Index c = acc.extent(0);
  if (c % 2 != 0) {
    throw InvalidInput("progressive_accumulate: channel count " + std::to_string(c) +
                       " must be even");
  }
  if (stack.reducers.size() < AccumulatorStack<Scalar>::reducers_for(hiddens.size())) {
    throw InvalidInput("progressive_accumulate: " + std::to_string(hiddens.size()) +
                       " hiddens need " +
                       std::to_string(AccumulatorStack<Scalar>::reducers_for(hiddens.size())) +
                       " reducers, have " + std::to_string(stack.reducers.size()));
  }
  stack.validate(c);
  for (std::size_t s = 1; s < hiddens.size(); ++s) {
    if (hiddens[s].dims() != acc.dims()) {
      throw InvalidInput("progressive_accumulate: hidden " + shape_str(hiddens[s].dims()) +
                         " differs from " + shape_str(acc.dims()));
    }
    const std::vector<Tensor<Scalar>> halves{conv2d(acc, stack.reducers[2 * (s - 1)]),
                                             conv2d(hiddens[s], stack.reducers[2 * (s - 1) + 1])};
    acc = concat_channels(halves);
  }
  return acc;
}

/// Hidden outputs of a k-frame window (from zero state) folded into M_t.
template <typename Scalar>
Tensor<Scalar> hqim_forward(std::span<const Tensor<Scalar>> seq, const ConvLstmCell<Scalar>& cell,
                            const AccumulatorStack<Scalar>& stack) {
  const auto hiddens = run_sequence(seq, cell);
  return progressive_accumulate(std::span<const Tensor<Scalar>>(hiddens), stack);
}

/// Streaming form over a whole video: the LSTM state persists across frames
/// and the last k hidden outputs are queued for accumulation.
template <typename Scalar>
class HqimStream {
 public:
  HqimStream(ConvLstmCell<Scalar> cell, AccumulatorStack<Scalar> stack, std::size_t k = 4)
      : cell_(std::move(cell)), stack_(std::move(stack)), k_(k) {
    if (k_ == 0) throw InvalidInput("HqimStream: k must be positive");
    cell_.validate();
  }

  /// Feeds frame L_t and returns M_t. Before k frames have been seen the
  /// fold runs over the hiddens available so far.
  Tensor<Scalar> push(const Tensor<Scalar>& x) {
    if (!state_) {
      state_ = LstmState<Scalar>::zeros(cell_.hidden_channels(), x.extent(1), x.extent(2));
    }
    *state_ = convlstm_step(x, *state_, cell_);
    queue_.push_back(state_->h);
    if (queue_.size() > k_) queue_.pop_front();
    const std::vector<Tensor<Scalar>> hiddens(queue_.begin(), queue_.end());
    return progressive_accumulate(std::span<const Tensor<Scalar>>(hiddens), stack_);
  }

  void reset() {
    state_.reset();
    queue_.clear();
  }

 private:
  ConvLstmCell<Scalar> cell_;
  AccumulatorStack<Scalar> stack_;
  std::size_t k_;
  std::optional<LstmState<Scalar>> state_;
  std::deque<Tensor<Scalar>> queue_;
};

// ---------------------------------------------------------------------------
// Weight loading: hqim.cell.{W_f,W_i,W_o,W_C,F}.{weight,bias} and
// hqim.acc.reducer<idx>.{weight,bias}.

inline std::vector<std::string> hqim_weight_names(std::size_t k) {
  std::vector<std::string> names;
  for (const char* g : {"W_f", "W_i", "W_o", "W_C", "F"}) {
    names.push_back(std::string("hqim.cell.") + g + ".weight");
    names.push_back(std::string("hqim.cell.") + g + ".bias");
  }
  for (std::size_t r = 0; r < AccumulatorStack<double>::reducers_for(k); ++r) {
    names.push_back("hqim.acc.reducer" + std::to_string(r) + ".weight");
    names.push_back("hqim.acc.reducer" + std::to_string(r) + ".bias");
  }
  return names;
}

template <typename Scalar>
ConvLstmCell<Scalar> load_convlstm_cell(const NamedTensors& w) {
  detail::require_weights(w, hqim_weight_names(1));
  ConvLstmCell<Scalar> cell{detail::load_conv<Scalar>(w, "hqim.cell.W_f"),
                            detail::load_conv<Scalar>(w, "hqim.cell.W_i"),
                            detail::load_conv<Scalar>(w, "hqim.cell.W_o"),
                            detail::load_conv<Scalar>(w, "hqim.cell.W_C"),
                            detail::load_conv<Scalar>(w, "hqim.cell.F")};
  cell.validate();
  return cell;
}

template <typename Scalar>
AccumulatorStack<Scalar> load_accumulator(const NamedTensors& w, std::size_t k) {
  detail::require_weights(w, hqim_weight_names(k));
  AccumulatorStack<Scalar> stack;
  for (std::size_t r = 0; r < AccumulatorStack<Scalar>::reducers_for(k); ++r) {
    stack.reducers.push_back(detail::load_conv<Scalar>(w, "hqim.acc.reducer" + std::to_string(r)));
  }
  return stack;
}

}  // namespace tsdet
