#pragma once

#include "basgcn/nn/ops.hpp"

#include <functional>
#include <utility>
#include <vector>

namespace basgcn::nn {

// Trainable tensor: value plus accumulated gradient of matching shape.
template <class Scalar>
struct Parameter {
  MatrixX<Scalar> value;
  MatrixX<Scalar> grad;

  Parameter() = default;
  explicit Parameter(MatrixX<Scalar> v)
      : value(std::move(v)), grad(MatrixX<Scalar>::Zero(value.rows(), value.cols())) {}
  void zero_grad() { grad.setZero(); }
};

struct TensorId {
  int index = -1;
};

// Reverse-mode tape over dense matrices. Operations record a value node and
// a pull closure; backward() walks the nodes in reverse creation order (a
// topological order by construction) and accumulates gradients into upstream
// nodes and directly into Parameter::grad. A non-recording tape evaluates
// forward values only.
template <class Scalar>
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) { nodes_.reserve(96); }

  bool recording() const { return recording_; }

  const MatrixX<Scalar>& value(TensorId id) const { return nodes_[id.index].value; }

  // Gradient of the loss w.r.t. a node; zero matrix if the node was never on
  // a path to the loss.
  MatrixX<Scalar> gradient(TensorId id) const {
    const Entry& e = nodes_[id.index];
    if (e.grad.size() == 0) return MatrixX<Scalar>::Zero(e.value.rows(), e.value.cols());
    return e.grad;
  }

  TensorId input(MatrixX<Scalar> value, bool track_grad = false) {
    return emplace(std::move(value), track_grad, {});
  }

  // Graph convolution layer, one node for all filters:
  //   out = relu(prop * Y), column h of Y = channel sum of z (.) filters[h].
  // `prop` must outlive the tape.
  TensorId graph_conv_layer(TensorId z, const MatrixX<Scalar>* prop,
                            std::vector<Parameter<Scalar>*> filters) {
    const MatrixX<Scalar>& zv = value(z);
    MatrixX<Scalar> y(zv.rows(), static_cast<Index>(filters.size()));
    for (std::size_t h = 0; h < filters.size(); ++h) {
      const MatrixX<Scalar>& w = filters[h]->value;
      if (w.rows() != zv.rows() || w.cols() != zv.cols()) {
        throw std::invalid_argument("graph_conv_layer: filter channel mismatch");
      }
      auto col = y.col(static_cast<Index>(h));
      col.noalias() = zv.col(0).cwiseProduct(w.col(0));
      for (Index c = 1; c < zv.cols(); ++c) col.noalias() += zv.col(c).cwiseProduct(w.col(c));
    }
    MatrixX<Scalar> out = ((*prop) * y).cwiseMax(Scalar(0));
    if (!recording_) return emplace(std::move(out), false, {});
    return emplace(std::move(out), true,
                   [z, prop, filters = std::move(filters)](Tape& t, TensorId self) {
                     const MatrixX<Scalar>& out_v = t.value(self);
                     MatrixX<Scalar> dpre =
                         t.nodes_[self.index].grad.cwiseProduct((out_v.array() > Scalar(0)).template cast<Scalar>().matrix());
                     MatrixX<Scalar> dy = prop->transpose() * dpre;
                     const MatrixX<Scalar>& zv = t.value(z);
                     const bool track_z = t.nodes_[z.index].track;
                     for (std::size_t h = 0; h < filters.size(); ++h) {
                       auto col = dy.col(static_cast<Index>(h));
                       filters[h]->grad.array() += zv.array().colwise() * col.array();
                       if (track_z) {
                         t.grad_buffer(z).array() += filters[h]->value.array().colwise() * col.array();
                       }
                     }
                   });
  }

  TensorId fully_connected(TensorId x, Parameter<Scalar>& w, Parameter<Scalar>& b) {
    MatrixX<Scalar> out = nn::fully_connected(value(x), w.value, b.value);
    if (!recording_) return emplace(std::move(out), false, {});
    return emplace(std::move(out), true, [x, &w, &b](Tape& t, TensorId self) {
      const MatrixX<Scalar>& g = t.nodes_[self.index].grad;
      w.grad += t.value(x).transpose() * g;
      b.grad += g.colwise().sum();
      if (t.nodes_[x.index].track) t.grad_buffer(x) += g * w.value.transpose();
    });
  }

  TensorId relu(TensorId x) {
    MatrixX<Scalar> out = nn::relu(value(x));
    if (!should_track(x)) return emplace(std::move(out), false, {});
    return emplace(std::move(out), true, [x](Tape& t, TensorId self) {
      const MatrixX<Scalar>& out_v = t.value(self);
      t.grad_buffer(x).array() +=
          t.nodes_[self.index].grad.array() * (out_v.array() > Scalar(0)).template cast<Scalar>();
    });
  }

  TensorId concat_cols(std::vector<TensorId> xs) {
    if (xs.empty()) throw std::invalid_argument("concat_cols: nothing to concatenate");
    Index rows = value(xs.front()).rows();
    Index cols = 0;
    for (TensorId id : xs) cols += value(id).cols();
    MatrixX<Scalar> out(rows, cols);
    Index at = 0;
    for (TensorId id : xs) {
      out.middleCols(at, value(id).cols()) = value(id);
      at += value(id).cols();
    }
    bool track = false;
    for (TensorId id : xs) track = track || should_track(id);
    if (!track) return emplace(std::move(out), false, {});
    return emplace(std::move(out), true, [xs = std::move(xs)](Tape& t, TensorId self) {
      const MatrixX<Scalar>& g = t.nodes_[self.index].grad;
      Index at = 0;
      for (TensorId id : xs) {
        Index w = t.value(id).cols();
        if (t.nodes_[id.index].track) t.grad_buffer(id) += g.middleCols(at, w);
        at += w;
      }
    });
  }

  // Row-major flatten to a 1 x (rows*cols) row vector.
  TensorId flatten_row(TensorId x) {
    const MatrixX<Scalar>& xv = value(x);
    MatrixX<Scalar> out(1, xv.size());
    for (Index r = 0; r < xv.rows(); ++r) {
      for (Index c = 0; c < xv.cols(); ++c) out(0, r * xv.cols() + c) = xv(r, c);
    }
    if (!should_track(x)) return emplace(std::move(out), false, {});
    return emplace(std::move(out), true, [x](Tape& t, TensorId self) {
      const MatrixX<Scalar>& g = t.nodes_[self.index].grad;
      MatrixX<Scalar>& dx = t.grad_buffer(x);
      for (Index r = 0; r < dx.rows(); ++r) {
        for (Index c = 0; c < dx.cols(); ++c) dx(r, c) += g(0, r * dx.cols() + c);
      }
    });
  }

  TensorId conv1d_same(TensorId x, Parameter<Scalar>& kernel, Parameter<Scalar>& bias, int k) {
    MatrixX<Scalar> out = nn::conv1d_same(value(x), kernel.value, bias.value, k);
    if (!recording_) return emplace(std::move(out), false, {});
    return emplace(std::move(out), true, [x, &kernel, &bias, k](Tape& t, TensorId self) {
      const MatrixX<Scalar>& g = t.nodes_[self.index].grad;
      const MatrixX<Scalar>& xv = t.value(x);
      const Index len = xv.rows(), cin = xv.cols();
      bias.grad += g.colwise().sum();
      const bool track_x = t.nodes_[x.index].track;
      for (int o = 0; o < k; ++o) {
        const TapSpan s = tap_span(len, o, k);
        if (s.count <= 0) continue;
        kernel.grad.middleRows(o * cin, cin).noalias() +=
            xv.middleRows(s.src, s.count).transpose() * g.middleRows(s.dst, s.count);
        if (track_x) {
          t.grad_buffer(x).middleRows(s.src, s.count).noalias() +=
              g.middleRows(s.dst, s.count) * kernel.value.middleRows(o * cin, cin).transpose();
        }
      }
    });
  }

  TensorId avgpool(TensorId x, int k) {
    MatrixX<Scalar> out = nn::avgpool(value(x), k);
    if (!should_track(x)) return emplace(std::move(out), false, {});
    return emplace(std::move(out), true, [x, k](Tape& t, TensorId self) {
      const MatrixX<Scalar>& g = t.nodes_[self.index].grad;
      MatrixX<Scalar>& dx = t.grad_buffer(x);
      for (Index r = 0; r < g.rows(); ++r) {
        for (int o = 0; o < k; ++o) dx.row(r * k + o) += g.row(r) / Scalar(k);
      }
    });
  }

  // Left-multiplication by a constant matrix (not trained, must outlive the
  // tape).
  TensorId const_premul(const MatrixX<Scalar>* a, TensorId x) {
    MatrixX<Scalar> out = (*a) * value(x);
    if (!should_track(x)) return emplace(std::move(out), false, {});
    return emplace(std::move(out), true, [a, x](Tape& t, TensorId self) {
      t.grad_buffer(x) += a->transpose() * t.nodes_[self.index].grad;
    });
  }

  // Scalar reduction sum(x (.) weights); the usual loss head in gradient
  // tests.
  TensorId weighted_sum(TensorId x, MatrixX<Scalar> weights) {
    MatrixX<Scalar> out(1, 1);
    out(0, 0) = value(x).cwiseProduct(weights).sum();
    if (!should_track(x)) return emplace(std::move(out), false, {});
    return emplace(std::move(out), true, [x, weights = std::move(weights)](Tape& t, TensorId self) {
      t.grad_buffer(x) += t.nodes_[self.index].grad(0, 0) * weights;
    });
  }

  // Training-mode dropout with inverted scaling; identity in evaluation mode.
  TensorId dropout(TensorId x, Scalar rate, std::mt19937_64& rng, bool training) {
    if (!training || rate == Scalar(0)) return x;
    MatrixX<Scalar> mask = dropout_mask<Scalar>(value(x).rows(), value(x).cols(), rate, rng);
    MatrixX<Scalar> out = value(x).cwiseProduct(mask);
    if (!should_track(x)) return emplace(std::move(out), false, {});
    return emplace(std::move(out), true, [x, mask = std::move(mask)](Tape& t, TensorId self) {
      t.grad_buffer(x) += t.nodes_[self.index].grad.cwiseProduct(mask);
    });
  }

  // Scalar loss node; probabilities are retrievable from the result struct.
  struct LossNode {
    TensorId loss;
    MatrixX<Scalar> probabilities;
  };
  LossNode softmax_cross_entropy(TensorId logits, int target) {
    auto ce = nn::softmax_cross_entropy(value(logits), target);
    MatrixX<Scalar> out(1, 1);
    out(0, 0) = ce.loss;
    LossNode result;
    result.probabilities = ce.probabilities;
    if (!should_track(logits)) {
      result.loss = emplace(std::move(out), false, {});
      return result;
    }
    result.loss = emplace(std::move(out), true,
                          [logits, target, probs = ce.probabilities](Tape& t, TensorId self) {
                            Scalar g = t.nodes_[self.index].grad(0, 0);
                            MatrixX<Scalar> d = probs * g;
                            d(0, target) -= g;
                            t.grad_buffer(logits) += d;
                          });
    return result;
  }

  // Seeds d(loss)/d(loss) = seed and pulls gradients through every recorded
  // node. The root must be a 1x1 node; the pulls are accumulative, so a tape
  // runs backward once.
  void backward(TensorId root, Scalar seed = Scalar(1)) {
    if (!recording_) throw std::logic_error("backward on a non-recording tape");
    if (consumed_) throw std::logic_error("backward already ran on this tape");
    if (value(root).size() != 1) throw std::invalid_argument("backward: root must be scalar");
    consumed_ = true;
    grad_buffer(root)(0, 0) += seed;
    for (int i = root.index; i >= 0; --i) {
      Entry& e = nodes_[i];
      if (e.track && e.pull && e.grad.size() != 0) e.pull(*this, TensorId{i});
    }
  }

 private:
  struct Entry {
    MatrixX<Scalar> value;
    MatrixX<Scalar> grad;
    std::function<void(Tape&, TensorId)> pull;
    bool track = false;
  };

  bool should_track(TensorId id) const { return recording_ && nodes_[id.index].track; }

  MatrixX<Scalar>& grad_buffer(TensorId id) {
    Entry& e = nodes_[id.index];
    if (e.grad.size() == 0) e.grad = MatrixX<Scalar>::Zero(e.value.rows(), e.value.cols());
    return e.grad;
  }

  TensorId emplace(MatrixX<Scalar> value, bool track, std::function<void(Tape&, TensorId)> pull) {
    nodes_.push_back(Entry{std::move(value), {}, std::move(pull), track && recording_});
    return TensorId{static_cast<int>(nodes_.size()) - 1};
  }

  std::vector<Entry> nodes_;
  bool recording_;
  bool consumed_ = false;
};

}  // namespace basgcn::nn
