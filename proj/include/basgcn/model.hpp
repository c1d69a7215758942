#pragma once

#include "basgcn/align.hpp"
#include "basgcn/nn/adam.hpp"

#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>

namespace basgcn {

struct BasgcnConfig {
  int grid_size = 64;     // aligned grid vertices (M)
  int levels = 10;        // alignment depth levels (L)
  int conv_layers = 5;    // stacked graph-convolution layers (T)
  int conv_filters = 32;  // filters per graph-convolution layer (H)
  int cnn_channels = 32;  // channels of each 1-D convolution
  int cnn_kernel = 5;
  int pool_size = 2;
  int branch_fc = 128;    // width of the per-branch fully-connected layer
  int fuse_fc = 128;      // width of the per-path fusion layer
  double dropout_rate = 0.5;
  double learning_rate = 5e-5;
  int epochs = 100;
  int batch_size = 32;
  std::uint64_t seed = 1;
};

enum class EdgeMode { directed, undirected };

inline const char* to_string(EdgeMode m) { return m == EdgeMode::directed ? "directed" : "undirected"; }

// Per-grid constants consumed by the model: features plus the two
// degree-normalized propagation matrices. In undirected mode both paths
// propagate over the symmetric aligned adjacency.
template <class Scalar>
struct GridTensors {
  MatrixX<Scalar> features;
  MatrixX<Scalar> prop_in;
  MatrixX<Scalar> prop_out;
};

template <class Scalar>
GridTensors<Scalar> make_grid_tensors(const AlignedGrid<Scalar>& grid, EdgeMode mode) {
  GridTensors<Scalar> t;
  t.features = grid.features;
  if (mode == EdgeMode::directed) {
    t.prop_in = nn::in_propagation(grid.backtrackless);
    t.prop_out = nn::out_propagation(grid.backtrackless);
  } else {
    t.prop_in = nn::row_normalized(grid.adjacency);
    t.prop_out = t.prop_in;
  }
  return t;
}

// The full network: T stacked in- and out-convolution layers over shared
// filter banks, cumulative concatenations fed through T+1 CNN branches
// (shared between the two paths), a shared fusion layer per path, and a
// softmax head over the concatenated fused vectors.
template <class Scalar>
class BasgcnModel {
 public:
  struct BranchParams {
    nn::Parameter<Scalar> conv1_k, conv1_b;
    nn::Parameter<Scalar> conv2_k, conv2_b;
    nn::Parameter<Scalar> conv3_k, conv3_b;
    nn::Parameter<Scalar> fc_w, fc_b;
  };

  BasgcnModel(const BasgcnConfig& cfg, int in_channels, int num_classes)
      : cfg_(cfg), in_channels_(in_channels), num_classes_(num_classes),
        rng_(mix_seed(cfg.seed, 0xBA5u)) {
    if (in_channels < 1 || num_classes < 2) {
      throw std::invalid_argument("model: need at least one channel and two classes");
    }
    if (cfg_.grid_size < 1 || cfg_.conv_layers < 0 || cfg_.conv_filters < 1 ||
        cfg_.cnn_channels < 1 || cfg_.cnn_kernel < 1 || cfg_.cnn_kernel % 2 == 0 ||
        cfg_.pool_size < 1 || cfg_.branch_fc < 1 || cfg_.fuse_fc < 1 ||
        !(cfg_.dropout_rate >= 0.0 && cfg_.dropout_rate < 1.0)) {
      throw std::invalid_argument("model: invalid configuration");
    }
    pooled_len_ = cfg_.grid_size / cfg_.pool_size / cfg_.pool_size;
    if (pooled_len_ < 1) throw std::invalid_argument("model: grid too small for two pooling stages");

    for (int t = 0; t < cfg_.conv_layers; ++t) {
      int prev = t == 0 ? in_channels_ : cfg_.conv_filters;
      std::vector<nn::Parameter<Scalar>> bank;
      bank.reserve(cfg_.conv_filters);
      for (int h = 0; h < cfg_.conv_filters; ++h) bank.push_back(glorot(cfg_.grid_size, prev));
      filters_.push_back(std::move(bank));
    }

    const int k = cfg_.cnn_kernel, ch = cfg_.cnn_channels;
    for (int t = 0; t <= cfg_.conv_layers; ++t) {
      int in_ch = in_channels_ + cfg_.conv_filters * t;
      BranchParams b;
      b.conv1_k = glorot(k * in_ch, ch);
      b.conv1_b = zeros(1, ch);
      b.conv2_k = glorot(k * ch, ch);
      b.conv2_b = zeros(1, ch);
      b.conv3_k = glorot(k * ch, ch);
      b.conv3_b = zeros(1, ch);
      b.fc_w = glorot(pooled_len_ * ch, cfg_.branch_fc);
      b.fc_b = zeros(1, cfg_.branch_fc);
      branches_.push_back(std::move(b));
    }

    fuse_w_ = glorot((cfg_.conv_layers + 1) * cfg_.branch_fc, cfg_.fuse_fc);
    fuse_b_ = zeros(1, cfg_.fuse_fc);
    out_w_ = glorot(2 * cfg_.fuse_fc, num_classes_);
    out_b_ = zeros(1, num_classes_);

    optimizer_ = std::make_unique<nn::Adam<Scalar>>(parameters(), Scalar(cfg_.learning_rate));
  }

  struct Output {
    VectorX<Scalar> probabilities;
    Scalar loss = std::numeric_limits<Scalar>::quiet_NaN();
  };

  // Runs the network on one grid. A nonnegative target attaches the
  // cross-entropy loss so backward() can run afterwards.
  Output forward(const GridTensors<Scalar>& grid, int target, bool training) {
    Trace trace = run(grid, target, training, /*recording=*/training && target >= 0);
    Output out;
    out.probabilities = trace.probabilities;
    out.loss = trace.loss;
    return out;
  }

  // Accumulates gradients of scale * (last forward loss) into the parameters.
  void backward(Scalar scale = Scalar(1)) {
    if (!tape_ || loss_node_.index < 0) {
      throw std::logic_error("backward called before a training forward pass");
    }
    tape_->backward(loss_node_, scale);
  }

  struct Prediction {
    int class_index = 0;
    VectorX<Scalar> probabilities;
  };

  Prediction predict(const GridTensors<Scalar>& grid) {
    Output out = forward(grid, -1, /*training=*/false);
    Prediction p;
    p.probabilities = out.probabilities;
    out.probabilities.maxCoeff(&p.class_index);
    return p;
  }

  // One pass over the training set in shuffled mini-batches with an Adam step
  // per batch; returns the mean sample loss.
  Scalar train_epoch(std::span<const GridTensors<Scalar>* const> grids, std::span<const int> labels,
                     int batch_size) {
    if (grids.empty()) throw std::invalid_argument("train_epoch: empty training set");
    if (grids.size() != labels.size()) throw std::invalid_argument("train_epoch: label count mismatch");
    if (batch_size < 1) throw std::invalid_argument("train_epoch: bad batch size");
    const int n = static_cast<int>(grids.size());
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (int i = n - 1; i > 0; --i) {  // Fisher-Yates on the canonical draw
      int j = static_cast<int>(uniform_unit(rng_) * (i + 1));
      if (j > i) j = i;
      std::swap(order[i], order[j]);
    }
    Scalar total = 0;
    for (int start = 0; start < n; start += batch_size) {
      const int count = std::min(batch_size, n - start);
      optimizer_->zero_grad();
      for (int b = 0; b < count; ++b) {
        int idx = order[start + b];
        Output out = forward(*grids[idx], labels[idx], /*training=*/true);
        backward(Scalar(1) / Scalar(count));
        total += out.loss;
      }
      optimizer_->step();
    }
    return total / Scalar(n);
  }

  std::vector<nn::Parameter<Scalar>*> parameters() {
    std::vector<nn::Parameter<Scalar>*> ps;
    for (auto& bank : filters_) {
      for (auto& w : bank) ps.push_back(&w);
    }
    for (auto& b : branches_) {
      ps.push_back(&b.conv1_k);
      ps.push_back(&b.conv1_b);
      ps.push_back(&b.conv2_k);
      ps.push_back(&b.conv2_b);
      ps.push_back(&b.conv3_k);
      ps.push_back(&b.conv3_b);
      ps.push_back(&b.fc_w);
      ps.push_back(&b.fc_b);
    }
    ps.push_back(&fuse_w_);
    ps.push_back(&fuse_b_);
    ps.push_back(&out_w_);
    ps.push_back(&out_b_);
    return ps;
  }

  // Fused per-path vectors before the head; evaluation mode. Test hook.
  struct PathActivations {
    MatrixX<Scalar> fused_in, fused_out;
  };
  PathActivations path_activations(const GridTensors<Scalar>& grid) {
    Trace trace = run(grid, -1, /*training=*/false, /*recording=*/false);
    return PathActivations{trace.fused_in, trace.fused_out};
  }

  const BasgcnConfig& config() const { return cfg_; }
  int in_channels() const { return in_channels_; }
  int num_classes() const { return num_classes_; }
  std::vector<nn::Parameter<Scalar>>& filters(int layer) { return filters_[layer]; }
  BranchParams& branch(int t) { return branches_[t]; }
  nn::Parameter<Scalar>& fusion_weights() { return fuse_w_; }
  nn::Parameter<Scalar>& fusion_bias() { return fuse_b_; }
  nn::Parameter<Scalar>& output_weights() { return out_w_; }
  nn::Parameter<Scalar>& output_bias() { return out_b_; }
  nn::Adam<Scalar>& optimizer() { return *optimizer_; }

  // Structural fingerprint guarding checkpoint compatibility.
  std::uint64_t structure_fingerprint() const {
    Fnv1a h;
    for (int v : {cfg_.grid_size, cfg_.conv_layers, cfg_.conv_filters, cfg_.cnn_channels,
                  cfg_.cnn_kernel, cfg_.pool_size, cfg_.branch_fc, cfg_.fuse_fc, in_channels_,
                  num_classes_}) {
      h.update_i32(v);
    }
    return h.digest();
  }

  void save(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path.string());
    const char magic[4] = {'B', 'C', 'K', '1'};
    out.write(magic, 4);
    write_u32(out, 1);
    write_u64(out, structure_fingerprint());
    auto ps = parameters();
    write_u32(out, static_cast<std::uint32_t>(ps.size()));
    for (auto* p : ps) write_matrix(out, p->value);
    write_u64(out, static_cast<std::uint64_t>(optimizer_->step_count()));
    for (auto& slot : optimizer_->slots()) {
      write_matrix(out, slot.m);
      write_matrix(out, slot.v);
    }
    if (!out) throw std::runtime_error("failed writing checkpoint: " + path.string());
  }

  void load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::string_view(magic, 4) != "BCK1") {
      throw std::runtime_error("not a checkpoint file: " + path.string());
    }
    if (read_u32(in, path) != 1) throw std::runtime_error("unsupported checkpoint version: " + path.string());
    if (read_u64(in, path) != structure_fingerprint()) {
      throw std::runtime_error("checkpoint does not match model structure: " + path.string());
    }
    auto ps = parameters();
    if (read_u32(in, path) != ps.size()) {
      throw std::runtime_error("checkpoint parameter count mismatch: " + path.string());
    }
    for (auto* p : ps) read_matrix_into(in, p->value, path);
    optimizer_->mutable_step_count() = static_cast<long>(read_u64(in, path));
    for (auto& slot : optimizer_->slots()) {
      read_matrix_into(in, slot.m, path);
      read_matrix_into(in, slot.v, path);
    }
  }

 private:
  struct Trace {
    VectorX<Scalar> probabilities;
    Scalar loss = std::numeric_limits<Scalar>::quiet_NaN();
    MatrixX<Scalar> fused_in, fused_out;
  };

  Trace run(const GridTensors<Scalar>& grid, int target, bool training, bool recording) {
    if (grid.features.rows() != cfg_.grid_size || grid.features.cols() != in_channels_) {
      throw std::invalid_argument("forward: grid does not match model configuration");
    }
    tape_ = std::make_unique<nn::Tape<Scalar>>(recording);
    loss_node_ = nn::TensorId{};
    nn::Tape<Scalar>& t = *tape_;

    auto x = t.input(grid.features);
    std::vector<nn::TensorId> z_in{x}, z_out{x};
    for (int layer = 0; layer < cfg_.conv_layers; ++layer) {
      std::vector<nn::Parameter<Scalar>*> bank;
      bank.reserve(filters_[layer].size());
      for (auto& w : filters_[layer]) bank.push_back(&w);
      z_in.push_back(t.graph_conv_layer(z_in.back(), &grid.prop_in, bank));
      z_out.push_back(t.graph_conv_layer(z_out.back(), &grid.prop_out, std::move(bank)));
    }

    std::vector<nn::TensorId> branch_in, branch_out;
    for (int stage = 0; stage <= cfg_.conv_layers; ++stage) {
      auto cat_in = stage == 0 ? x : t.concat_cols({z_in.begin(), z_in.begin() + stage + 1});
      auto cat_out = stage == 0 ? x : t.concat_cols({z_out.begin(), z_out.begin() + stage + 1});
      branch_in.push_back(run_branch(t, cat_in, branches_[stage]));
      branch_out.push_back(run_branch(t, cat_out, branches_[stage]));
    }

    auto fused_in = t.relu(t.fully_connected(t.concat_cols(branch_in), fuse_w_, fuse_b_));
    auto fused_out = t.relu(t.fully_connected(t.concat_cols(branch_out), fuse_w_, fuse_b_));
    auto both = t.concat_cols({fused_in, fused_out});
    auto dropped = t.dropout(both, Scalar(cfg_.dropout_rate), rng_, training);
    auto logits = t.fully_connected(dropped, out_w_, out_b_);

    Trace trace;
    trace.fused_in = t.value(fused_in);
    trace.fused_out = t.value(fused_out);
    if (target >= 0) {
      auto ce = t.softmax_cross_entropy(logits, target);
      loss_node_ = ce.loss;
      trace.loss = t.value(ce.loss)(0, 0);
      trace.probabilities = ce.probabilities.row(0).transpose();
    } else {
      trace.probabilities = nn::softmax(t.value(logits)).row(0).transpose();
    }
    return trace;
  }

  nn::TensorId run_branch(nn::Tape<Scalar>& t, nn::TensorId input, BranchParams& b) {
    auto h1 = t.avgpool(t.relu(t.conv1d_same(input, b.conv1_k, b.conv1_b, cfg_.cnn_kernel)), cfg_.pool_size);
    auto h2 = t.avgpool(t.relu(t.conv1d_same(h1, b.conv2_k, b.conv2_b, cfg_.cnn_kernel)), cfg_.pool_size);
    auto h3 = t.relu(t.conv1d_same(h2, b.conv3_k, b.conv3_b, cfg_.cnn_kernel));
    return t.relu(t.fully_connected(t.flatten_row(h3), b.fc_w, b.fc_b));
  }

  nn::Parameter<Scalar> glorot(int rows, int cols) {
    Scalar bound = std::sqrt(Scalar(6) / Scalar(rows + cols));
    MatrixX<Scalar> w(rows, cols);
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) {
        w(r, c) = (Scalar(2) * static_cast<Scalar>(uniform_unit(rng_)) - Scalar(1)) * bound;
      }
    }
    return nn::Parameter<Scalar>(std::move(w));
  }

  static nn::Parameter<Scalar> zeros(int rows, int cols) {
    return nn::Parameter<Scalar>(MatrixX<Scalar>::Zero(rows, cols));
  }

  static void write_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); }
  static void write_u64(std::ostream& out, std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); }
  static std::uint32_t read_u32(std::istream& in, const std::filesystem::path& p) {
    std::uint32_t v;
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in) throw std::runtime_error("checkpoint truncated: " + p.string());
    return v;
  }
  static std::uint64_t read_u64(std::istream& in, const std::filesystem::path& p) {
    std::uint64_t v;
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in) throw std::runtime_error("checkpoint truncated: " + p.string());
    return v;
  }
  static void write_matrix(std::ostream& out, const MatrixX<Scalar>& m) {
    write_u32(out, static_cast<std::uint32_t>(m.rows()));
    write_u32(out, static_cast<std::uint32_t>(m.cols()));
    for (Index r = 0; r < m.rows(); ++r) {
      for (Index c = 0; c < m.cols(); ++c) {
        double v = static_cast<double>(m(r, c));
        out.write(reinterpret_cast<const char*>(&v), sizeof v);
      }
    }
  }
  static void read_matrix_into(std::istream& in, MatrixX<Scalar>& m, const std::filesystem::path& p) {
    auto rows = read_u32(in, p), cols = read_u32(in, p);
    if (rows != static_cast<std::uint32_t>(m.rows()) || cols != static_cast<std::uint32_t>(m.cols())) {
      throw std::runtime_error("checkpoint tensor shape mismatch: " + p.string());
    }
    for (Index r = 0; r < m.rows(); ++r) {
      for (Index c = 0; c < m.cols(); ++c) {
        double v;
        in.read(reinterpret_cast<char*>(&v), sizeof v);
        if (!in) throw std::runtime_error("checkpoint truncated: " + p.string());
        m(r, c) = static_cast<Scalar>(v);
      }
    }
  }

  BasgcnConfig cfg_;
  int in_channels_;
  int num_classes_;
  int pooled_len_;
  std::mt19937_64 rng_;

  std::vector<std::vector<nn::Parameter<Scalar>>> filters_;  // [layer][filter]
  std::vector<BranchParams> branches_;                       // [stage 0..T]
  nn::Parameter<Scalar> fuse_w_, fuse_b_;
  nn::Parameter<Scalar> out_w_, out_b_;
  std::unique_ptr<nn::Adam<Scalar>> optimizer_;

  std::unique_ptr<nn::Tape<Scalar>> tape_;
  nn::TensorId loss_node_;
};

}  // namespace basgcn
