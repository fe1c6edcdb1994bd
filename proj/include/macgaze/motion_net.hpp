#pragma once

#include <string>
#include <vector>

#include "macgaze/nn.hpp"
#include "macgaze/session.hpp"

namespace macgaze {

struct HarConfig {
  int in_channels = 3;
  std::vector<int> base_channels = {64, 128, 256};
  std::vector<int> dilations = {1, 2, 4};
  int conv_kernel = 7;
  int latent_dim = 256;
  int classifier_hidden = 512;
  int classes = 4;
  double dropout = 0.1;
  double recon_weight = 0.3;  // r: weight of the reconstruction term
  int window_len = 200;

  void validate() const;

  static HarConfig paper_preset(int classes);  // T=200, [64,128,256], latent 256
  static HarConfig desk_preset(int classes);   // T=64,  [8,16,32],    latent 32
  static HarConfig tiny_preset(int classes);   // T=16,  [4,8,8],      latent 8
};

/// Supervised convolutional autoencoder for IMU activity recognition:
/// dilated residual encoder with SE gates and temporal self-attention,
/// a classification head, and a transposed-convolution decoder.
///
/// Forward passes cache per-layer state, so copy the model per worker
/// for parallel inference; a trained model's parameters are never
/// mutated by encode/classify.
class HarModel {
 public:
  explicit HarModel(HarConfig cfg);
  HarModel(const HarModel&) = default;
  HarModel& operator=(const HarModel&) = default;

  void init_params(std::uint64_t seed);
  void zero_init();

  /// Latent representation of a normalized T x 3 window (eval mode).
  VecX encode(const ImuWindow& w);
  /// Class probabilities for a normalized window (eval mode).
  VecX classify(const ImuWindow& w);
  int predict_class(const ImuWindow& w);
  /// decode(encode(w)), T x 3 (eval mode).
  MatX reconstruct(const ImuWindow& w);

  const HarConfig& config() const { return cfg_; }
  std::vector<nn::Param*> params();

  /// Forward in train mode and accumulate weighted gradients of the
  /// combined loss r*MSE + (1-r)*CE. Returns the unweighted sample loss.
  double accumulate_gradients(const ImuWindow& w, int label, double weight,
                              std::mt19937_64& rng);

  /// Combined loss of one sample in eval mode (no gradient).
  double sample_loss(const ImuWindow& w, int label);

  ChannelStats input_stats;              // z-normalization used at training time
  std::vector<std::string> class_names;  // index -> label

 private:
  struct ForwardState {
    MatX encoded;       // channels x T/8, after attention
    VecX latent;
    VecX logits;
    MatX recon;
  };
  ForwardState forward_all(const MatX& x, bool train, std::mt19937_64* rng);
  void check_window(const ImuWindow& w) const;

  HarConfig cfg_;
  std::vector<int> enc_lens_;  // time length after stem and each block

  nn::Conv1d stem_;
  std::vector<nn::ResidualBlock> blocks_;
  nn::SelfAttention attn_;
  nn::Dense to_latent_;

  nn::Dense cls_hidden_;
  nn::ReLU cls_relu_;
  nn::Dropout cls_drop_;
  nn::Dense cls_out_;

  nn::Dense from_latent_;
  std::vector<nn::ConvTranspose1d> deconvs_;
  std::vector<nn::ReLU> derelus_;
  nn::ReLU out_relu_;
  nn::Conv1d out_conv_;
};

/// Mean combined loss over a batch (eval mode): for each (window, label),
/// r * meanSquaredError(w, decode(encode(w))) + (1-r) * crossEntropy.
double har_loss(HarModel& m, const std::vector<ImuWindow>& windows,
                const std::vector<int>& labels);

struct HarTrainParams {
  double lr = 1e-4;
  int batch = 256;
  int max_epochs = 200;
  int plateau_patience = 10;
  double plateau_factor = 0.1;
  int early_stop_patience = 10;
  double min_delta = 1e-3;
  double val_fraction = 0.2;
  std::uint64_t seed = 0;
};

struct EpochStats {
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
  int best_epoch = -1;
  double best_val_loss = 0.0;
};

/// Train in place on raw (unnormalized) windows. Channel stats are
/// computed on the training split, stored on the model, and applied to
/// every window. The parameters at the best validation loss are restored
/// before returning.
TrainHistory train_har(HarModel& m, const std::vector<ImuWindow>& windows,
                       const std::vector<int>& labels, const HarTrainParams& params);

void save_har_checkpoint(HarModel& m, const std::string& path);
HarModel load_har_checkpoint(const std::string& path);

}  // namespace macgaze
