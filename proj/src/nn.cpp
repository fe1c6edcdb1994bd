#include "macgaze/nn.hpp"

#include <cmath>

namespace macgaze::nn {

int conv_out_len(int t_in, const ConvSpec& s) {
  const int span = s.dilation * (s.kernel - 1) + 1;
  const int padded = t_in + 2 * s.pad;
  if (padded < span) return 0;
  return (padded - span) / s.stride + 1;
}

int tconv_out_len(int t_in, const ConvSpec& s, int out_pad) {
  return (t_in - 1) * s.stride - 2 * s.pad + s.dilation * (s.kernel - 1) + 1 + out_pad;
}

MatX im2col(const MatX& x, const ConvSpec& s, int t_out) {
  const auto c = x.rows();
  const auto t_in = static_cast<int>(x.cols());
  MatX cols = MatX::Zero(c * s.kernel, t_out);
  for (int to = 0; to < t_out; ++to) {
    const int base = to * s.stride - s.pad;
    for (int tap = 0; tap < s.kernel; ++tap) {
      const int ti = base + tap * s.dilation;
      if (ti < 0 || ti >= t_in) continue;
      for (Eigen::Index ch = 0; ch < c; ++ch) cols(ch * s.kernel + tap, to) = x(ch, ti);
    }
  }
  return cols;
}

MatX col2im(const MatX& cols, const ConvSpec& s, int channels, int t_in) {
  const int t_out = static_cast<int>(cols.cols());
  MatX x = MatX::Zero(channels, t_in);
  for (int to = 0; to < t_out; ++to) {
    const int base = to * s.stride - s.pad;
    for (int tap = 0; tap < s.kernel; ++tap) {
      const int ti = base + tap * s.dilation;
      if (ti < 0 || ti >= t_in) continue;
      for (int ch = 0; ch < channels; ++ch) x(ch, ti) += cols(ch * s.kernel + tap, to);
    }
  }
  return x;
}

namespace {

void he_init(MatX& w, int fan_in, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, std::sqrt(2.0 / std::max(1, fan_in)));
  for (Eigen::Index i = 0; i < w.rows(); ++i)
    for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = gauss(rng);
}

void xavier_init(MatX& w, int fan_in, int fan_out, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, std::sqrt(2.0 / std::max(1, fan_in + fan_out)));
  for (Eigen::Index i = 0; i < w.rows(); ++i)
    for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = gauss(rng);
}

}  // namespace

Conv1d::Conv1d(std::string name, int c_in_, int c_out_, ConvSpec spec_)
    : w(name + ".w", c_out_, static_cast<Eigen::Index>(c_in_) * spec_.kernel),
      b(name + ".b", c_out_, 1),
      c_in(c_in_),
      c_out(c_out_),
      spec(spec_) {}

MatX Conv1d::forward(const MatX& x, bool) {
  if (x.rows() != c_in) throw std::invalid_argument("Conv1d: channel mismatch");
  t_in_ = static_cast<int>(x.cols());
  const int t_out = conv_out_len(t_in_, spec);
  if (t_out <= 0) throw std::invalid_argument("Conv1d: input too short");
  cols_ = im2col(x, spec, t_out);
  MatX y = w.value * cols_;
  y.colwise() += b.value.col(0);
  return y;
}

MatX Conv1d::backward(const MatX& dy) {
  w.grad += dy * cols_.transpose();
  b.grad.col(0) += dy.rowwise().sum();
  const MatX dcols = w.value.transpose() * dy;
  return col2im(dcols, spec, c_in, t_in_);
}

void Conv1d::collect_params(std::vector<Param*>& out) {
  out.push_back(&w);
  out.push_back(&b);
}

void Conv1d::init_params(std::mt19937_64& rng) {
  he_init(w.value, c_in * spec.kernel, rng);
  b.value.setZero();
}

ConvTranspose1d::ConvTranspose1d(std::string name, int c_in_, int c_out_, ConvSpec spec_,
                                 int out_pad_)
    : w(name + ".w", c_in_, static_cast<Eigen::Index>(c_out_) * spec_.kernel),
      b(name + ".b", c_out_, 1),
      c_in(c_in_),
      c_out(c_out_),
      out_pad(out_pad_),
      spec(spec_) {
  if (out_pad < 0 || out_pad >= spec.stride)
    throw std::invalid_argument("ConvTranspose1d: out_pad must be in [0, stride)");
}

MatX ConvTranspose1d::forward(const MatX& x, bool) {
  if (x.rows() != c_in) throw std::invalid_argument("ConvTranspose1d: channel mismatch");
  x_ = x;
  const int t_out = tconv_out_len(static_cast<int>(x.cols()), spec, out_pad);
  if (t_out <= 0) throw std::invalid_argument("ConvTranspose1d: input too short");
  const MatX cols = w.value.transpose() * x;  // (c_out*k) x t_in
  MatX y = col2im(cols, spec, c_out, t_out);
  y.colwise() += b.value.col(0);
  return y;
}

MatX ConvTranspose1d::backward(const MatX& dy) {
  const MatX dcols = im2col(dy, spec, static_cast<int>(x_.cols()));
  w.grad += x_ * dcols.transpose();
  b.grad.col(0) += dy.rowwise().sum();
  return w.value * dcols;
}

void ConvTranspose1d::collect_params(std::vector<Param*>& out) {
  out.push_back(&w);
  out.push_back(&b);
}

void ConvTranspose1d::init_params(std::mt19937_64& rng) {
  he_init(w.value, c_in * spec.kernel, rng);
  b.value.setZero();
}

Dense::Dense(std::string name, int in_, int out_)
    : w(name + ".w", out_, in_), b(name + ".b", out_, 1), in(in_), out(out_) {}

MatX Dense::forward(const MatX& x, bool) {
  if (x.rows() != in) throw std::invalid_argument("Dense: input dimension mismatch");
  x_ = x;
  MatX y = w.value * x;
  y.colwise() += b.value.col(0);
  return y;
}

MatX Dense::backward(const MatX& dy) {
  w.grad += dy * x_.transpose();
  b.grad.col(0) += dy.rowwise().sum();
  return w.value.transpose() * dy;
}

void Dense::collect_params(std::vector<Param*>& out_) {
  out_.push_back(&w);
  out_.push_back(&b);
}

void Dense::init_params(std::mt19937_64& rng) {
  he_init(w.value, in, rng);
  b.value.setZero();
}

MatX ReLU::forward(const MatX& x, bool) {
  mask_ = (x.array() > 0.0).cast<double>().matrix();
  return x.cwiseMax(0.0);
}

MatX ReLU::backward(const MatX& dy) { return dy.cwiseProduct(mask_); }

MatX Dropout::forward(const MatX& x, bool train) {
  active_ = train && p_ > 0.0;
  if (!active_) return x;
  if (fixed_mask_.size() > 0) {
    mask_ = fixed_mask_;
  } else {
    if (!rng_) throw std::logic_error("Dropout: training forward without an RNG");
    std::bernoulli_distribution keep(1.0 - p_);
    mask_.resize(x.rows(), x.cols());
    const double scale = 1.0 / (1.0 - p_);
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      for (Eigen::Index j = 0; j < x.cols(); ++j) mask_(i, j) = keep(*rng_) ? scale : 0.0;
  }
  return x.cwiseProduct(mask_);
}

MatX Dropout::backward(const MatX& dy) {
  if (!active_) return dy;
  return dy.cwiseProduct(mask_);
}

SEGate::SEGate(std::string name, int channels_, int reduction)
    : fc1(name + ".fc1", channels_, std::max(1, channels_ / reduction)),
      fc2(name + ".fc2", std::max(1, channels_ / reduction), channels_),
      channels(channels_) {}

MatX SEGate::forward(const MatX& x, bool train) {
  if (x.rows() != channels) throw std::invalid_argument("SEGate: channel mismatch");
  x_ = x;
  const MatX s = x.rowwise().mean();
  MatX h = fc1.forward(s, train);
  h_mask_ = (h.array() > 0.0).cast<double>().matrix();
  h = h.cwiseMax(0.0);
  const MatX gp = fc2.forward(h, train);
  g_ = (1.0 / (1.0 + (-gp.array()).exp())).matrix();
  return (x.array().colwise() * g_.col(0).array()).matrix();
}

MatX SEGate::backward(const MatX& dy) {
  MatX dx = (dy.array().colwise() * g_.col(0).array()).matrix();
  const MatX dg = dy.cwiseProduct(x_).rowwise().sum();
  const MatX dgp = (dg.array() * g_.array() * (1.0 - g_.array())).matrix();
  MatX dh = fc2.backward(dgp);
  dh = dh.cwiseProduct(h_mask_);
  const MatX ds = fc1.backward(dh);
  const double t = static_cast<double>(x_.cols());
  dx.colwise() += (ds.col(0) / t).eval();
  return dx;
}

void SEGate::collect_params(std::vector<Param*>& out) {
  fc1.collect_params(out);
  fc2.collect_params(out);
}

void SEGate::init_params(std::mt19937_64& rng) {
  fc1.init_params(rng);
  fc2.init_params(rng);
}

SelfAttention::SelfAttention(std::string name, int channels_, int d_k_)
    : wq(name + ".wq", channels_, d_k_),
      wk(name + ".wk", channels_, d_k_),
      wv(name + ".wv", channels_, d_k_),
      wo(name + ".wo", d_k_, channels_),
      channels(channels_),
      d_k(d_k_) {}

MatX SelfAttention::forward(const MatX& x, bool train) {
  if (x.rows() != channels) throw std::invalid_argument("SelfAttention: channel mismatch");
  q_ = wq.forward(x, train);
  k_ = wk.forward(x, train);
  v_ = wv.forward(x, train);
  const MatX scores = q_.transpose() * k_ / std::sqrt(static_cast<double>(d_k));
  a_ = softmax_rows(scores);
  const MatX o = v_ * a_.transpose();
  return x + wo.forward(o, train);
}

MatX SelfAttention::backward(const MatX& dy) {
  MatX dx = dy;
  const MatX dout = wo.backward(dy);       // d wrt o (d_k x T)
  MatX dv = dout * a_;                     // d_k x T
  MatX da = dout.transpose() * v_;         // T x T
  // softmax rows backward
  MatX ds(a_.rows(), a_.cols());
  for (Eigen::Index i = 0; i < a_.rows(); ++i) {
    const double dot = da.row(i).dot(a_.row(i));
    ds.row(i) = (a_.row(i).array() * (da.row(i).array() - dot)).matrix();
  }
  ds /= std::sqrt(static_cast<double>(d_k));
  const MatX dq = k_ * ds.transpose();
  const MatX dk = q_ * ds;
  dx += wq.backward(dq);
  dx += wk.backward(dk);
  dx += wv.backward(dv);
  return dx;
}

void SelfAttention::collect_params(std::vector<Param*>& out) {
  wq.collect_params(out);
  wk.collect_params(out);
  wv.collect_params(out);
  wo.collect_params(out);
}

void SelfAttention::init_params(std::mt19937_64& rng) {
  xavier_init(wq.w.value, channels, d_k, rng);
  xavier_init(wk.w.value, channels, d_k, rng);
  xavier_init(wv.w.value, channels, d_k, rng);
  xavier_init(wo.w.value, d_k, channels, rng);
  wq.b.value.setZero();
  wk.b.value.setZero();
  wv.b.value.setZero();
  wo.b.value.setZero();
}

ResidualBlock::ResidualBlock(std::string name, int c_in, int c_out, int kernel, int dilation,
                             int stride, double dropout)
    : conv1(name + ".conv1", c_in, c_out, ConvSpec{kernel, stride, dilation,
                                                   dilation * (kernel - 1) / 2}),
      conv2(name + ".conv2", c_out, c_out, ConvSpec::same(kernel, dilation)),
      se(name + ".se", c_out),
      relu1(),
      relu2(),
      drop(dropout) {
  if (c_in != c_out || stride != 1)
    proj.emplace(name + ".proj", c_in, c_out, ConvSpec{1, stride, 1, 0});
}

MatX ResidualBlock::forward(const MatX& x, bool train) {
  x_ = x;
  drop.set_rng(rng_);
  MatX h = relu1.forward(x, train);
  h = conv1.forward(h, train);
  h = relu2.forward(h, train);
  h = drop.forward(h, train);
  h = conv2.forward(h, train);
  h = se.forward(h, train);
  const MatX shortcut = proj ? proj->forward(x, train) : x;
  if (shortcut.rows() != h.rows() || shortcut.cols() != h.cols())
    throw std::logic_error("ResidualBlock: shortcut shape mismatch");
  return h + shortcut;
}

MatX ResidualBlock::backward(const MatX& dy) {
  MatX dh = se.backward(dy);
  dh = conv2.backward(dh);
  dh = drop.backward(dh);
  dh = relu2.backward(dh);
  dh = conv1.backward(dh);
  MatX dx = relu1.backward(dh);
  dx += proj ? proj->backward(dy) : dy;
  return dx;
}

void ResidualBlock::collect_params(std::vector<Param*>& out) {
  conv1.collect_params(out);
  conv2.collect_params(out);
  se.collect_params(out);
  if (proj) proj->collect_params(out);
}

void ResidualBlock::init_params(std::mt19937_64& rng) {
  conv1.init_params(rng);
  conv2.init_params(rng);
  se.init_params(rng);
  if (proj) proj->init_params(rng);
}

MatX softmax_rows(const MatX& s) {
  MatX out(s.rows(), s.cols());
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    const double m = s.row(i).maxCoeff();
    Eigen::ArrayXd e = (s.row(i).array() - m).exp();
    out.row(i) = (e / e.sum()).matrix();
  }
  return out;
}

VecX softmax(const VecX& logits) {
  const double m = logits.maxCoeff();
  Eigen::ArrayXd e = (logits.array() - m).exp();
  return (e / e.sum()).matrix();
}

double cross_entropy(const VecX& logits, int label, VecX* grad_logits) {
  if (label < 0 || label >= logits.size())
    throw std::invalid_argument("cross_entropy: label out of range");
  const VecX p = softmax(logits);
  const double loss = -std::log(std::max(p[label], 1e-300));
  if (grad_logits) {
    *grad_logits = p;
    (*grad_logits)[label] -= 1.0;
  }
  return loss;
}

Adam::Adam(std::vector<Param*> params, double lr) : params_(std::move(params)), lr_(lr) {
  for (const auto* p : params_) {
    m_.push_back(MatX::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(MatX::Zero(p->value.rows(), p->value.cols()));
  }
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = *params_[i];
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * p.grad;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * p.grad.cwiseProduct(p.grad);
    const MatX mhat = m_[i] / bc1;
    const MatX vhat = v_[i] / bc2;
    p.value -= lr_ * mhat.cwiseQuotient((vhat.cwiseSqrt().array() + eps_).matrix());
  }
}

void Adam::zero_grad() {
  for (auto* p : params_) p->zero_grad();
}

std::vector<MatX> snapshot(const std::vector<Param*>& params) {
  std::vector<MatX> out;
  out.reserve(params.size());
  for (const auto* p : params) out.push_back(p->value);
  return out;
}

void restore(const std::vector<Param*>& params, const std::vector<MatX>& snap) {
  if (params.size() != snap.size()) throw std::invalid_argument("snapshot size mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = snap[i];
}

std::map<std::string, MatX> state_dict(const std::vector<Param*>& params) {
  std::map<std::string, MatX> out;
  for (const auto* p : params) {
    if (!out.emplace(p->name, p->value).second)
      throw std::logic_error("duplicate parameter name " + p->name);
  }
  return out;
}

void load_state_dict(const std::vector<Param*>& params,
                     const std::map<std::string, MatX>& state) {
  for (auto* p : params) {
    const auto it = state.find(p->name);
    if (it == state.end()) throw std::invalid_argument("missing parameter " + p->name);
    if (it->second.rows() != p->value.rows() || it->second.cols() != p->value.cols())
      throw std::invalid_argument("shape mismatch for parameter " + p->name);
    p->value = it->second;
  }
}

MatX numeric_gradient(Param& p, const std::function<double()>& f, double h) {
  MatX grad(p.value.rows(), p.value.cols());
  for (Eigen::Index i = 0; i < p.value.rows(); ++i) {
    for (Eigen::Index j = 0; j < p.value.cols(); ++j) {
      const double orig = p.value(i, j);
      const double step = h * std::max(1.0, std::abs(orig));
      p.value(i, j) = orig + step;
      const double fp = f();
      p.value(i, j) = orig - step;
      const double fm = f();
      p.value(i, j) = orig;
      grad(i, j) = (fp - fm) / (2.0 * step);
    }
  }
  return grad;
}

double relative_error(const MatX& a, const MatX& b, double scale) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      const double denom = std::max(scale, std::abs(a(i, j)) + std::abs(b(i, j)));
      worst = std::max(worst, std::abs(a(i, j) - b(i, j)) / denom);
    }
  return worst;
}

}  // namespace macgaze::nn
