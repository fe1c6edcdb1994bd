#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "macgaze/common.hpp"

namespace macgaze::nn {

struct Param {
  std::string name;
  MatX value;
  MatX grad;

  Param() = default;
  Param(std::string n, Eigen::Index rows, Eigen::Index cols)
      : name(std::move(n)), value(MatX::Zero(rows, cols)), grad(MatX::Zero(rows, cols)) {}
  void zero_grad() { grad.setZero(); }
};

/// Layers operate on channel-major maps (channels x time); vector-valued
/// layers take single-column matrices. forward caches whatever backward
/// needs, so a layer instance is single-owner during training and must be
/// copied per worker for parallel inference.
class Layer {
 public:
  virtual ~Layer() = default;
  virtual MatX forward(const MatX& x, bool train = false) = 0;
  virtual MatX backward(const MatX& dy) = 0;
  virtual void collect_params(std::vector<Param*>& out) { (void)out; }
  virtual void init_params(std::mt19937_64& rng) { (void)rng; }
  void set_rng(std::mt19937_64* rng) { rng_ = rng; }

 protected:
  std::mt19937_64* rng_ = nullptr;
};

struct ConvSpec {
  int kernel = 7;
  int stride = 1;
  int dilation = 1;
  int pad = 0;

  static ConvSpec same(int kernel, int dilation = 1, int stride = 1) {
    return ConvSpec{kernel, stride, dilation, dilation * (kernel - 1) / 2};
  }
};

int conv_out_len(int t_in, const ConvSpec& s);
int tconv_out_len(int t_in, const ConvSpec& s, int out_pad);

/// x: C x T  ->  (C*k) x t_out patch matrix (row index = c*k + tap).
MatX im2col(const MatX& x, const ConvSpec& s, int t_out);
/// Adjoint scatter-add of im2col back into a C x t_in map.
MatX col2im(const MatX& cols, const ConvSpec& s, int channels, int t_in);

class Conv1d : public Layer {
 public:
  Conv1d(std::string name, int c_in, int c_out, ConvSpec spec);
  MatX forward(const MatX& x, bool train) override;
  MatX backward(const MatX& dy) override;
  void collect_params(std::vector<Param*>& out) override;
  void init_params(std::mt19937_64& rng) override;

  Param w;  // c_out x (c_in*k)
  Param b;  // c_out x 1
  int c_in, c_out;
  ConvSpec spec;

 private:
  MatX cols_;
  int t_in_ = 0;
};

/// Transposed 1-D convolution implemented as the adjoint of Conv1d; the
/// exact output length is (T-1)*stride - 2*pad + dilation*(k-1) + 1 + out_pad.
class ConvTranspose1d : public Layer {
 public:
  ConvTranspose1d(std::string name, int c_in, int c_out, ConvSpec spec, int out_pad = 0);
  MatX forward(const MatX& x, bool train) override;
  MatX backward(const MatX& dy) override;
  void collect_params(std::vector<Param*>& out) override;
  void init_params(std::mt19937_64& rng) override;

  Param w;  // c_in x (c_out*k)
  Param b;  // c_out x 1
  int c_in, c_out, out_pad;
  ConvSpec spec;

 private:
  MatX x_;
};

class Dense : public Layer {
 public:
  Dense(std::string name, int in, int out);
  MatX forward(const MatX& x, bool train) override;  // x: in x m
  MatX backward(const MatX& dy) override;
  void collect_params(std::vector<Param*>& out) override;
  void init_params(std::mt19937_64& rng) override;

  Param w;  // out x in
  Param b;  // out x 1
  int in, out;

 private:
  MatX x_;
};

class ReLU : public Layer {
 public:
  MatX forward(const MatX& x, bool train) override;
  MatX backward(const MatX& dy) override;

 private:
  MatX mask_;
};

class Dropout : public Layer {
 public:
  explicit Dropout(double p) : p_(p) {}
  MatX forward(const MatX& x, bool train) override;
  MatX backward(const MatX& dy) override;
  void set_fixed_mask(MatX mask) { fixed_mask_ = std::move(mask); }  // test hook

 private:
  double p_;
  MatX mask_;
  MatX fixed_mask_;
  bool active_ = false;
};

/// Squeeze-and-excitation channel gate: global average over time,
/// bottleneck MLP, sigmoid gate multiplied back onto every time step.
class SEGate : public Layer {
 public:
  SEGate(std::string name, int channels, int reduction = 8);
  MatX forward(const MatX& x, bool train) override;
  MatX backward(const MatX& dy) override;
  void collect_params(std::vector<Param*>& out) override;
  void init_params(std::mt19937_64& rng) override;

  Dense fc1, fc2;
  int channels;

 private:
  MatX x_;
  MatX h_mask_;
  MatX g_;
};

/// Single-head scaled dot-product self-attention over time steps with a
/// residual connection: y = x + Wo * Attn(Wq x, Wk x, Wv x). A zero input
/// yields uniform attention over zero values, hence a zero output.
class SelfAttention : public Layer {
 public:
  SelfAttention(std::string name, int channels, int d_k);
  MatX forward(const MatX& x, bool train) override;
  MatX backward(const MatX& dy) override;
  void collect_params(std::vector<Param*>& out) override;
  void init_params(std::mt19937_64& rng) override;

  Dense wq, wk, wv, wo;
  int channels, d_k;

 private:
  MatX q_, k_, v_, a_;
};

/// Pre-activation residual block: relu -> conv(k, dilation, stride) ->
/// relu -> dropout -> conv(k, dilation) -> SE gate, plus a 1x1 projection
/// shortcut whenever channels or stride change.
class ResidualBlock : public Layer {
 public:
  ResidualBlock(std::string name, int c_in, int c_out, int kernel, int dilation, int stride,
                double dropout);
  MatX forward(const MatX& x, bool train) override;
  MatX backward(const MatX& dy) override;
  void collect_params(std::vector<Param*>& out) override;
  void init_params(std::mt19937_64& rng) override;

  Conv1d conv1, conv2;
  SEGate se;
  std::optional<Conv1d> proj;  // empty for identity shortcut
  ReLU relu1, relu2;
  Dropout drop;

 private:
  MatX x_;
};

MatX softmax_rows(const MatX& s);
VecX softmax(const VecX& logits);

/// Cross-entropy of one label against logits; grad is softmax - onehot.
double cross_entropy(const VecX& logits, int label, VecX* grad_logits = nullptr);

class Adam {
 public:
  Adam(std::vector<Param*> params, double lr);
  void step();
  void zero_grad();
  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }

 private:
  std::vector<Param*> params_;
  std::vector<MatX> m_, v_;
  double lr_, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  long t_ = 0;
};

std::vector<MatX> snapshot(const std::vector<Param*>& params);
void restore(const std::vector<Param*>& params, const std::vector<MatX>& snap);

std::map<std::string, MatX> state_dict(const std::vector<Param*>& params);
void load_state_dict(const std::vector<Param*>& params, const std::map<std::string, MatX>& state);

/// Central-difference gradient of f with respect to p.value (p restored).
MatX numeric_gradient(Param& p, const std::function<double()>& f, double h = 1e-5);

/// Max over entries of |a-b| / max(scale, |a|+|b|).
double relative_error(const MatX& a, const MatX& b, double scale = 1e-6);

}  // namespace macgaze::nn
