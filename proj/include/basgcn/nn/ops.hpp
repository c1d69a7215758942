#pragma once

#include "basgcn/types.hpp"

#include <span>
#include <stdexcept>

namespace basgcn::nn {

template <class Scalar>
MatrixX<Scalar> relu(const MatrixX<Scalar>& x) {
  return x.cwiseMax(Scalar(0));
}

// Row-normalizes a nonnegative matrix; all-zero rows stay zero.
template <class Scalar>
MatrixX<Scalar> row_normalized(const MatrixX<Scalar>& a) {
  MatrixX<Scalar> out = a;
  for (Index i = 0; i < a.rows(); ++i) {
    Scalar d = a.row(i).sum();
    if (d != Scalar(0)) out.row(i) /= d;
  }
  return out;
}

// Propagation matrices of the directed grid adjacency: the in-matrix
// aggregates over edges pointing at a vertex, the out-matrix over edges
// leaving it. Both are degree-normalized with zero rows mapped to zero.
template <class Scalar>
MatrixX<Scalar> in_propagation(const MatrixX<Scalar>& directed_adj) {
  return row_normalized<Scalar>(directed_adj.transpose());
}

template <class Scalar>
MatrixX<Scalar> out_propagation(const MatrixX<Scalar>& directed_adj) {
  return row_normalized<Scalar>(directed_adj);
}

// Channel sum of the Hadamard product: entry i is <x_row_i, w_row_i>.
template <class Scalar>
VectorX<Scalar> hadamard_rowsum(const MatrixX<Scalar>& x, const MatrixX<Scalar>& w) {
  if (x.rows() != w.rows() || x.cols() != w.cols()) {
    throw std::invalid_argument("hadamard_rowsum: shape mismatch");
  }
  return x.cwiseProduct(w).rowwise().sum();
}

enum class ConvDirection { in, out };

// Single-filter backtrackless spatial graph convolution: weight each vertex
// feature vector, sum channels, propagate over in- or out-neighbors, degree
// normalize, rectify.
template <class Scalar>
VectorX<Scalar> graph_conv(const MatrixX<Scalar>& x, const MatrixX<Scalar>& directed_adj,
                           const MatrixX<Scalar>& w, ConvDirection dir) {
  if (directed_adj.rows() != directed_adj.cols() || directed_adj.rows() != x.rows()) {
    throw std::invalid_argument("graph_conv: adjacency shape mismatch");
  }
  MatrixX<Scalar> prop = dir == ConvDirection::in ? in_propagation(directed_adj)
                                                  : out_propagation(directed_adj);
  return (prop * hadamard_rowsum(x, w)).cwiseMax(Scalar(0));
}

template <class Scalar>
VectorX<Scalar> graph_conv_in(const MatrixX<Scalar>& x, const MatrixX<Scalar>& directed_adj,
                              const MatrixX<Scalar>& w) {
  return graph_conv(x, directed_adj, w, ConvDirection::in);
}

template <class Scalar>
VectorX<Scalar> graph_conv_out(const MatrixX<Scalar>& x, const MatrixX<Scalar>& directed_adj,
                               const MatrixX<Scalar>& w) {
  return graph_conv(x, directed_adj, w, ConvDirection::out);
}

// Multi-filter layer: column h of the output is the single-filter convolution
// with filters[h]. Vertex order is preserved.
template <class Scalar>
MatrixX<Scalar> graph_conv_layer(const MatrixX<Scalar>& z, const MatrixX<Scalar>& directed_adj,
                                 std::span<const MatrixX<Scalar>> filters, ConvDirection dir) {
  MatrixX<Scalar> out(z.rows(), static_cast<Index>(filters.size()));
  for (std::size_t h = 0; h < filters.size(); ++h) {
    if (filters[h].rows() != z.rows() || filters[h].cols() != z.cols()) {
      throw std::invalid_argument("graph_conv_layer: filter channel mismatch");
    }
    out.col(static_cast<Index>(h)) = graph_conv(z, directed_adj, filters[h], dir);
  }
  return out;
}

// Undirected baseline convolution ReLU(D^-1 A X W); comparison layer for the
// tottering tests.
template <class Scalar>
MatrixX<Scalar> dgcnn_conv(const MatrixX<Scalar>& x, const MatrixX<Scalar>& self_loop_adj,
                           const MatrixX<Scalar>& w) {
  if (self_loop_adj.rows() != self_loop_adj.cols() || self_loop_adj.rows() != x.rows() ||
      x.cols() != w.rows()) {
    throw std::invalid_argument("dgcnn_conv: shape mismatch");
  }
  return relu<Scalar>(row_normalized(self_loop_adj) * x * w);
}

// Row ranges coupling input to output for one tap of a same-padded
// cross-correlation: destination rows [dst, dst+count) read source rows
// [src, src+count).
struct TapSpan {
  Index dst = 0, src = 0, count = 0;
};
inline TapSpan tap_span(Index len, int tap, int k) {
  const Index shift = tap - k / 2;
  TapSpan s;
  s.dst = std::max<Index>(0, -shift);
  s.src = std::max<Index>(0, shift);
  s.count = len - s.dst - s.src;
  return s;
}

// Cross-correlation with stride 1 and zero same-padding, accumulated tap by
// tap; kernel rows are tap-major blocks of in_channels, one column per output
// channel, bias per output channel.
template <class Scalar>
MatrixX<Scalar> conv1d_same(const MatrixX<Scalar>& x, const MatrixX<Scalar>& kernel,
                            const MatrixX<Scalar>& bias, int k) {
  if (k % 2 == 0) throw std::invalid_argument("conv1d_same: kernel size must be odd");
  if (kernel.rows() != k * x.cols() || bias.rows() != 1 || bias.cols() != kernel.cols()) {
    throw std::invalid_argument("conv1d_same: shape mismatch");
  }
  const Index len = x.rows(), cin = x.cols();
  MatrixX<Scalar> out = bias.replicate(len, 1);
  for (int o = 0; o < k; ++o) {
    const TapSpan s = tap_span(len, o, k);
    if (s.count <= 0) continue;
    out.middleRows(s.dst, s.count).noalias() +=
        x.middleRows(s.src, s.count) * kernel.middleRows(o * cin, cin);
  }
  return out;
}

// Non-overlapping window means; a trailing partial window is dropped.
template <class Scalar>
MatrixX<Scalar> avgpool(const MatrixX<Scalar>& x, int k = 2) {
  if (k < 1) throw std::invalid_argument("avgpool: window must be >= 1");
  const Index out_len = x.rows() / k;
  MatrixX<Scalar> out(out_len, x.cols());
  for (Index r = 0; r < out_len; ++r) {
    out.row(r) = x.middleRows(r * k, k).colwise().mean();
  }
  return out;
}

template <class Scalar>
MatrixX<Scalar> fully_connected(const MatrixX<Scalar>& x, const MatrixX<Scalar>& w,
                                const MatrixX<Scalar>& bias) {
  if (x.cols() != w.rows() || bias.rows() != 1 || bias.cols() != w.cols()) {
    throw std::invalid_argument("fully_connected: shape mismatch");
  }
  MatrixX<Scalar> out = x * w;
  out.rowwise() += bias.row(0);
  return out;
}

template <class Scalar>
MatrixX<Scalar> softmax(const MatrixX<Scalar>& logits) {
  MatrixX<Scalar> p = (logits.array() - logits.maxCoeff()).exp();
  return p / p.sum();
}

template <class Scalar>
struct CrossEntropyResult {
  Scalar loss;
  MatrixX<Scalar> probabilities;
};

template <class Scalar>
CrossEntropyResult<Scalar> softmax_cross_entropy(const MatrixX<Scalar>& logits, int target) {
  if (logits.rows() != 1 || target < 0 || target >= logits.cols()) {
    throw std::invalid_argument("softmax_cross_entropy: bad logits row or target");
  }
  Scalar max = logits.maxCoeff();
  MatrixX<Scalar> shifted = logits.array() - max;
  Scalar log_norm = std::log(shifted.array().exp().sum());
  CrossEntropyResult<Scalar> out;
  out.probabilities = (shifted.array() - log_norm).exp();
  out.loss = log_norm - shifted(0, target);
  return out;
}

// Inverted-scaling dropout mask: kept entries are scaled by 1/(1-rate).
template <class Scalar>
MatrixX<Scalar> dropout_mask(Index rows, Index cols, Scalar rate, std::mt19937_64& rng) {
  if (!(rate >= Scalar(0) && rate < Scalar(1))) throw std::invalid_argument("dropout: rate must be in [0,1)");
  MatrixX<Scalar> mask(rows, cols);
  const Scalar keep = Scalar(1) / (Scalar(1) - rate);
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) {
      mask(r, c) = static_cast<Scalar>(uniform_unit(rng)) < rate ? Scalar(0) : keep;
    }
  }
  return mask;
}

}  // namespace basgcn::nn
