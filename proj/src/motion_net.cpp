#include "macgaze/motion_net.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

namespace macgaze {

using nlohmann::json;

void HarConfig::validate() const {
  if (in_channels <= 0) throw ConfigError("in_channels must be positive");
  if (base_channels.empty() || base_channels.size() != dilations.size())
    throw ConfigError("base_channels and dilations must be equal-length and non-empty");
  if (conv_kernel < 1 || conv_kernel % 2 == 0)
    throw ConfigError("conv_kernel must be odd and positive");
  if (latent_dim <= 0 || classifier_hidden <= 0) throw ConfigError("latent sizes must be positive");
  if (classes < 2) throw ConfigError("need at least two classes");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must be in [0,1)");
  if (!(recon_weight >= 0.0 && recon_weight <= 1.0))
    throw ConfigError("recon_weight must be in [0,1]");
  if (window_len < (1 << base_channels.size()))
    throw ConfigError("window_len too short for the number of strided blocks");
}

HarConfig HarConfig::paper_preset(int classes) {
  HarConfig c;
  c.classes = classes;
  return c;
}

HarConfig HarConfig::desk_preset(int classes) {
  HarConfig c;
  c.base_channels = {8, 16, 32};
  c.latent_dim = 32;
  c.classifier_hidden = 512;
  c.classes = classes;
  c.window_len = 64;
  return c;
}

HarConfig HarConfig::tiny_preset(int classes) {
  HarConfig c;
  c.base_channels = {4, 8, 8};
  c.latent_dim = 8;
  c.classifier_hidden = 16;
  c.classes = classes;
  c.window_len = 16;
  return c;
}

namespace {

std::vector<nn::ResidualBlock> build_blocks(const HarConfig& cfg) {
  std::vector<nn::ResidualBlock> blocks;
  for (std::size_t i = 0; i < cfg.base_channels.size(); ++i) {
    const int c_in = i == 0 ? cfg.base_channels[0] : cfg.base_channels[i - 1];
    blocks.emplace_back("encoder.block" + std::to_string(i), c_in, cfg.base_channels[i],
                        cfg.conv_kernel, cfg.dilations[i], /*stride=*/2, cfg.dropout);
  }
  return blocks;
}

}  // namespace

HarModel::HarModel(HarConfig cfg)
    : cfg_((cfg.validate(), cfg)),
      stem_("encoder.stem", cfg.in_channels, cfg.base_channels[0],
            nn::ConvSpec::same(cfg.conv_kernel)),
      blocks_(build_blocks(cfg)),
      attn_("encoder.attn", cfg.base_channels.back(), cfg.base_channels.back()),
      to_latent_("encoder.to_latent", 0, 0),  // sized below once lengths are known
      cls_hidden_("classifier.hidden", cfg.latent_dim, cfg.classifier_hidden),
      cls_drop_(cfg.dropout),
      cls_out_("classifier.out", cfg.classifier_hidden, cfg.classes),
      from_latent_("decoder.from_latent", 0, 0),
      out_conv_("decoder.out", cfg.base_channels[0], cfg.in_channels,
                nn::ConvSpec::same(cfg.conv_kernel)) {
  enc_lens_.push_back(cfg.window_len);
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const int len = nn::conv_out_len(enc_lens_.back(), blocks_[i].conv1.spec);
    if (len < 1) throw ConfigError("window too short for encoder block " + std::to_string(i));
    enc_lens_.push_back(len);
  }
  const int flat = cfg.base_channels.back() * enc_lens_.back();
  to_latent_ = nn::Dense("encoder.to_latent", flat, cfg.latent_dim);
  from_latent_ = nn::Dense("decoder.from_latent", cfg.latent_dim, flat);

  for (std::size_t j = 0; j < blocks_.size(); ++j) {
    const std::size_t i = blocks_.size() - 1 - j;  // mirror of encoder block i
    const int c_from = cfg.base_channels[i];
    const int c_to = i == 0 ? cfg.base_channels[0] : cfg.base_channels[i - 1];
    const auto spec = nn::ConvSpec::same(cfg.conv_kernel, cfg.dilations[i], 2);
    const int in_len = enc_lens_[i + 1];
    const int target = enc_lens_[i];
    const int natural = nn::tconv_out_len(in_len, spec, 0);
    const int out_pad = target - natural;
    if (out_pad < 0 || out_pad >= spec.stride)
      throw ConfigError("decoder cannot mirror encoder lengths at block " + std::to_string(i));
    deconvs_.emplace_back("decoder.deconv" + std::to_string(j), c_from, c_to, spec, out_pad);
    derelus_.emplace_back();
  }
}

void HarModel::init_params(std::uint64_t seed) {
  auto rng = substream(seed, "har-init");
  for (auto* p : params()) p->zero_grad();
  stem_.init_params(rng);
  for (auto& blk : blocks_) blk.init_params(rng);
  attn_.init_params(rng);
  to_latent_.init_params(rng);
  cls_hidden_.init_params(rng);
  cls_out_.init_params(rng);
  from_latent_.init_params(rng);
  for (auto& d : deconvs_) d.init_params(rng);
  out_conv_.init_params(rng);
}

void HarModel::zero_init() {
  for (auto* p : params()) {
    p->value.setZero();
    p->grad.setZero();
  }
}

std::vector<nn::Param*> HarModel::params() {
  std::vector<nn::Param*> out;
  stem_.collect_params(out);
  for (auto& blk : blocks_) blk.collect_params(out);
  attn_.collect_params(out);
  to_latent_.collect_params(out);
  cls_hidden_.collect_params(out);
  cls_out_.collect_params(out);
  from_latent_.collect_params(out);
  for (auto& d : deconvs_) d.collect_params(out);
  out_conv_.collect_params(out);
  return out;
}

void HarModel::check_window(const ImuWindow& w) const {
  if (w.samples.rows() != cfg_.window_len || w.samples.cols() != cfg_.in_channels)
    throw std::invalid_argument(
        "window shape " + std::to_string(w.samples.rows()) + "x" +
        std::to_string(w.samples.cols()) + " does not match model " +
        std::to_string(cfg_.window_len) + "x" + std::to_string(cfg_.in_channels));
}

HarModel::ForwardState HarModel::forward_all(const MatX& x, bool train, std::mt19937_64* rng) {
  for (auto& blk : blocks_) blk.set_rng(rng);
  cls_drop_.set_rng(rng);

  MatX h = stem_.forward(x, train);
  for (auto& blk : blocks_) h = blk.forward(h, train);
  h = attn_.forward(h, train);

  ForwardState st;
  st.encoded = h;
  const Eigen::Map<const VecX> flat(h.data(), h.size());
  st.latent = to_latent_.forward(flat, train).col(0);

  MatX c = cls_hidden_.forward(st.latent, train);
  c = cls_relu_.forward(c, train);
  c = cls_drop_.forward(c, train);
  st.logits = cls_out_.forward(c, train).col(0);

  MatX dvec = from_latent_.forward(st.latent, train);
  MatX dh = Eigen::Map<MatX>(dvec.data(), h.rows(), h.cols());
  for (std::size_t j = 0; j < deconvs_.size(); ++j) {
    dh = derelus_[j].forward(dh, train);
    dh = deconvs_[j].forward(dh, train);
  }
  dh = out_relu_.forward(dh, train);
  st.recon = out_conv_.forward(dh, train);
  return st;
}

VecX HarModel::encode(const ImuWindow& w) {
  check_window(w);
  const MatX x = w.samples.transpose();
  MatX h = stem_.forward(x, false);
  for (auto& blk : blocks_) {
    blk.set_rng(nullptr);
    h = blk.forward(h, false);
  }
  h = attn_.forward(h, false);
  const Eigen::Map<const VecX> flat(h.data(), h.size());
  return to_latent_.forward(flat, false).col(0);
}

VecX HarModel::classify(const ImuWindow& w) {
  const VecX latent = encode(w);
  MatX c = cls_hidden_.forward(latent, false);
  c = cls_relu_.forward(c, false);
  c = cls_drop_.forward(c, false);
  return nn::softmax(cls_out_.forward(c, false).col(0));
}

int HarModel::predict_class(const ImuWindow& w) {
  const VecX p = classify(w);
  Eigen::Index best;
  p.maxCoeff(&best);
  return static_cast<int>(best);
}

MatX HarModel::reconstruct(const ImuWindow& w) {
  check_window(w);
  const auto st = forward_all(w.samples.transpose(), false, nullptr);
  return st.recon.transpose();
}

double HarModel::sample_loss(const ImuWindow& w, int label) {
  check_window(w);
  const MatX x = w.samples.transpose();
  const auto st = forward_all(x, false, nullptr);
  const double mse = (x - st.recon).squaredNorm() / static_cast<double>(x.size());
  const double ce = nn::cross_entropy(st.logits, label);
  return cfg_.recon_weight * mse + (1.0 - cfg_.recon_weight) * ce;
}

double HarModel::accumulate_gradients(const ImuWindow& w, int label, double weight,
                                      std::mt19937_64& rng) {
  check_window(w);
  const MatX x = w.samples.transpose();
  const auto st = forward_all(x, true, &rng);

  const double mse = (x - st.recon).squaredNorm() / static_cast<double>(x.size());
  VecX dlogits;
  const double ce = nn::cross_entropy(st.logits, label, &dlogits);
  const double loss = cfg_.recon_weight * mse + (1.0 - cfg_.recon_weight) * ce;

  // decoder path
  const MatX drecon =
      (weight * cfg_.recon_weight * 2.0 / static_cast<double>(x.size())) * (st.recon - x);
  MatX dh = out_conv_.backward(drecon);
  dh = out_relu_.backward(dh);
  for (std::size_t j = deconvs_.size(); j-- > 0;) {
    dh = deconvs_[j].backward(dh);
    dh = derelus_[j].backward(dh);
  }
  const Eigen::Map<const VecX> dflat_dec(dh.data(), dh.size());
  MatX dlatent = from_latent_.backward(dflat_dec);

  // classifier path
  MatX dc = (weight * (1.0 - cfg_.recon_weight)) * dlogits;
  dc = cls_out_.backward(dc);
  dc = cls_drop_.backward(dc);
  dc = cls_relu_.backward(dc);
  dlatent += cls_hidden_.backward(dc);

  // encoder
  MatX denc_flat = to_latent_.backward(dlatent);
  MatX denc = Eigen::Map<MatX>(denc_flat.data(), st.encoded.rows(), st.encoded.cols());
  denc = attn_.backward(denc);
  for (std::size_t i = blocks_.size(); i-- > 0;) denc = blocks_[i].backward(denc);
  stem_.backward(denc);
  return loss;
}

double har_loss(HarModel& m, const std::vector<ImuWindow>& windows,
                const std::vector<int>& labels) {
  if (windows.size() != labels.size() || windows.empty())
    throw std::invalid_argument("har_loss: windows and labels must be equal-length, non-empty");
  double sum = 0.0;
  for (std::size_t i = 0; i < windows.size(); ++i) sum += m.sample_loss(windows[i], labels[i]);
  return sum / static_cast<double>(windows.size());
}

TrainHistory train_har(HarModel& m, const std::vector<ImuWindow>& windows,
                       const std::vector<int>& labels, const HarTrainParams& params) {
  if (windows.size() != labels.size() || windows.empty())
    throw std::invalid_argument("train_har: windows and labels must be equal-length, non-empty");
  const int classes = m.config().classes;
  std::vector<std::size_t> class_counts(static_cast<std::size_t>(classes), 0);
  for (int l : labels) {
    if (l < 0 || l >= classes) throw std::invalid_argument("train_har: label out of range");
    ++class_counts[static_cast<std::size_t>(l)];
  }
  for (int c = 0; c < classes; ++c)
    if (class_counts[static_cast<std::size_t>(c)] == 0)
      throw std::invalid_argument("train_har: class " + std::to_string(c) + " has no examples");

  TrainHistory history;
  if (params.max_epochs <= 0) return history;

  // split, then normalize with training-split statistics
  std::vector<std::size_t> idx(windows.size());
  std::iota(idx.begin(), idx.end(), 0);
  auto split_rng = substream(params.seed, "har-split");
  std::shuffle(idx.begin(), idx.end(), split_rng);
  const auto val_n = windows.size() >= 5
                         ? static_cast<std::size_t>(std::llround(
                               static_cast<double>(windows.size()) * params.val_fraction))
                         : 0;
  std::vector<std::size_t> val_idx(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(val_n));
  std::vector<std::size_t> train_idx(idx.begin() + static_cast<std::ptrdiff_t>(val_n), idx.end());

  std::vector<ImuWindow> train_pool;
  train_pool.reserve(train_idx.size());
  for (auto i : train_idx) train_pool.push_back(windows[i]);
  m.input_stats = compute_channel_stats(train_pool);
  for (int c = 0; c < 3; ++c) m.input_stats.std[c] = std::max(m.input_stats.std[c], 1e-8);

  std::vector<ImuWindow> norm(windows.size());
  for (std::size_t i = 0; i < windows.size(); ++i) norm[i] = z_normalize(windows[i], m.input_stats);

  auto all_params = m.params();
  nn::Adam adam(all_params, params.lr);
  auto drop_rng = substream(params.seed, "har-dropout");

  auto eval_loss = [&](const std::vector<std::size_t>& subset) {
    if (subset.empty()) return std::numeric_limits<double>::quiet_NaN();
    double sum = 0.0;
    for (auto i : subset) sum += m.sample_loss(norm[i], labels[i]);
    return sum / static_cast<double>(subset.size());
  };

  double best_val = eval_loss(val_idx.empty() ? train_idx : val_idx);
  std::vector<MatX> best_state = nn::snapshot(all_params);
  history.best_epoch = -1;
  history.best_val_loss = best_val;
  int early_counter = 0, plateau_counter = 0;

  for (int epoch = 0; epoch < params.max_epochs; ++epoch) {
    auto epoch_rng = substream(params.seed, "har-epoch", static_cast<std::uint64_t>(epoch));
    std::shuffle(train_idx.begin(), train_idx.end(), epoch_rng);

    double train_loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < train_idx.size();
         start += static_cast<std::size_t>(params.batch)) {
      const auto end = std::min(train_idx.size(), start + static_cast<std::size_t>(params.batch));
      const double wgt = 1.0 / static_cast<double>(end - start);
      adam.zero_grad();
      for (std::size_t i = start; i < end; ++i)
        train_loss_sum += m.accumulate_gradients(norm[train_idx[i]], labels[train_idx[i]], wgt,
                                                 drop_rng);
      adam.step();
      seen += end - start;
    }
    const double train_loss = train_loss_sum / static_cast<double>(seen);
    const double val_loss = val_idx.empty() ? eval_loss(train_idx) : eval_loss(val_idx);
    history.epochs.push_back({train_loss, val_loss, adam.lr()});
    if (!std::isfinite(train_loss) || !std::isfinite(val_loss))
      throw TrainingError("train_har: non-finite loss at epoch " + std::to_string(epoch));

    if (val_loss < best_val - params.min_delta) {
      best_val = val_loss;
      best_state = nn::snapshot(all_params);
      history.best_epoch = epoch;
      history.best_val_loss = val_loss;
      early_counter = 0;
      plateau_counter = 0;
    } else {
      ++early_counter;
      ++plateau_counter;
    }
    if (plateau_counter >= params.plateau_patience) {
      adam.set_lr(adam.lr() * params.plateau_factor);
      plateau_counter = 0;
    }
    if (early_counter >= params.early_stop_patience) break;
  }
  nn::restore(all_params, best_state);
  return history;
}

namespace {

json matrix_to_json(const MatX& m) {
  json data = json::array();
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) data.push_back(m(i, j));
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

MatX matrix_from_json(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto& data = j.at("data");
  if (static_cast<Eigen::Index>(data.size()) != rows * cols)
    throw ParseError("checkpoint matrix size mismatch");
  MatX m(rows, cols);
  std::size_t n = 0;
  for (Eigen::Index jj = 0; jj < cols; ++jj)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, jj) = data[n++].get<double>();
  return m;
}

}  // namespace

void save_har_checkpoint(HarModel& m, const std::string& path) {
  const auto& cfg = m.config();
  json j;
  j["format"] = "macgaze-har";
  j["version"] = 1;
  j["config"] = {{"in_channels", cfg.in_channels},
                 {"base_channels", cfg.base_channels},
                 {"dilations", cfg.dilations},
                 {"conv_kernel", cfg.conv_kernel},
                 {"latent_dim", cfg.latent_dim},
                 {"classifier_hidden", cfg.classifier_hidden},
                 {"classes", cfg.classes},
                 {"dropout", cfg.dropout},
                 {"recon_weight", cfg.recon_weight},
                 {"window_len", cfg.window_len}};
  j["stats"] = {{"mean", {m.input_stats.mean[0], m.input_stats.mean[1], m.input_stats.mean[2]}},
                {"std", {m.input_stats.std[0], m.input_stats.std[1], m.input_stats.std[2]}}};
  j["classes_names"] = m.class_names;
  json params = json::object();
  for (auto* p : m.params()) params[p->name] = matrix_to_json(p->value);
  j["params"] = std::move(params);
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open " + path + " for writing");
  out << j.dump() << "\n";
}

HarModel load_har_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError(path + ": invalid JSON: " + e.what());
  }
  if (j.value("format", "") != "macgaze-har") throw ParseError(path + ": not a HAR checkpoint");
  if (j.value("version", 0) != 1) throw ParseError(path + ": unsupported checkpoint version");
  const auto& jc = j.at("config");
  HarConfig cfg;
  cfg.in_channels = jc.at("in_channels").get<int>();
  cfg.base_channels = jc.at("base_channels").get<std::vector<int>>();
  cfg.dilations = jc.at("dilations").get<std::vector<int>>();
  cfg.conv_kernel = jc.at("conv_kernel").get<int>();
  cfg.latent_dim = jc.at("latent_dim").get<int>();
  cfg.classifier_hidden = jc.at("classifier_hidden").get<int>();
  cfg.classes = jc.at("classes").get<int>();
  cfg.dropout = jc.at("dropout").get<double>();
  cfg.recon_weight = jc.at("recon_weight").get<double>();
  cfg.window_len = jc.at("window_len").get<int>();

  HarModel m(cfg);
  const auto& js = j.at("stats");
  for (int c = 0; c < 3; ++c) {
    m.input_stats.mean[c] = js.at("mean")[static_cast<std::size_t>(c)].get<double>();
    m.input_stats.std[c] = js.at("std")[static_cast<std::size_t>(c)].get<double>();
  }
  m.class_names = j.value("classes_names", std::vector<std::string>{});
  std::map<std::string, MatX> state;
  for (const auto& [name, jm] : j.at("params").items()) state[name] = matrix_from_json(jm);
  nn::load_state_dict(m.params(), state);
  return m;
}

}  // namespace macgaze
