#pragma once

#include <array>
#include <string>
#include <vector>

#include "segsr/common.hpp"
#include "segsr/conv.hpp"
#include "segsr/volume.hpp"

namespace segsr {

using LatentVector = std::vector<float>;

// Fully convolutional encoder/decoder pair with a channel-softmax output.
// Encoder: `channels.size()` conv stages (kernel/stride/pad below, LeakyReLU
// after each), then parallel linear heads to mu/logvar. Decoder mirrors the
// encoder with transposed convolutions and ends in a 1x1x1 conv + softmax.
struct GeneratorArch {
  std::array<int, 3> input_dims{40, 64, 64};
  int num_classes = 4;
  std::vector<int> channels{16, 32, 64, 128};
  int latent_dim = 64;
  int kernel = 3;
  int stride = 2;
  int pad = 1;
  double lrelu_slope = 0.2;

  void validate() const;
  bool operator==(const GeneratorArch&) const = default;
};

struct TrainingMeta {
  int epochs_run = 0;
  double final_ce = 0.0;
  double final_kl = 0.0;
  double final_total = 0.0;
  double best_val_ce = 0.0;
  uint64_t seed = 0;
};

struct TensorSpec {
  std::string name;
  std::vector<int> shape;
  size_t offset = 0;
  size_t size = 0;
};

struct GeneratorModel {
  GeneratorArch arch;
  double beta = 1e-3;
  TrainingMeta meta;
  std::vector<TensorSpec> specs;
  std::vector<float> params;

  int index_of(const std::string& name) const;  // throws DataError if absent
  const float* tensor(const std::string& name) const {
    return params.data() + specs[index_of(name)].offset;
  }
  float* tensor(const std::string& name) {
    return params.data() + specs[index_of(name)].offset;
  }
};

// Derived layer plan shared by all forward/backward passes.
struct ModelPlan {
  std::vector<std::array<int, 3>> dims;  // spatial dims per stage, dims[0]=input
  std::vector<ConvShape> enc;            // encoder stages; decoder i is its adjoint
  int num_classes = 0;
  int latent = 0;
  size_t flat = 0;  // bottleneck channels * voxels
  double slope = 0.2;
};

ModelPlan make_plan(const GeneratorArch& arch);
GeneratorModel init_model(const GeneratorArch& arch, double beta, uint64_t seed);

struct VaeLossReport {
  double ce = 0.0;
  double kl = 0.0;
  double total = 0.0;
};

double kl_divergence(const std::vector<float>& mu, const std::vector<float>& logvar);

ProbVolume decode(const GeneratorModel& m, const LatentVector& z);
LatentVector decode_vjp(const GeneratorModel& m, const LatentVector& z,
                        const ProbVolume& upstream);
std::pair<LatentVector, LatentVector> encode(const GeneratorModel& m,
                                             const ProbVolume& p);

struct VaeTrainConfig {
  int epochs = 200;
  int batch = 16;
  double lr = 1e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int patience = 20;  // early stop on validation CE plateau
  uint64_t seed = 0;
  int workers = 1;
  bool verbose = false;
};

struct EpochStats {
  VaeLossReport train;
  double val_ce = 0.0;
};

struct TrainResult {
  GeneratorModel model;
  std::vector<EpochStats> history;
};

TrainResult train_vae(const std::vector<LabelVolume>& train_set,
                      const std::vector<LabelVolume>& val_set,
                      const GeneratorArch& arch, double beta,
                      const VaeTrainConfig& cfg);

// Checkpoint: one JSON header line (arch, beta, training meta, tensor table,
// payload checksum), then the raw little-endian float32 parameter blob in
// header-declared order.
void save_model(const GeneratorModel& m, const std::string& path);
GeneratorModel load_model(const std::string& path);

// --- precision-generic internals (used by latent-opt and the 64-bit checks) ---

namespace detail {

template <typename T>
struct ModelCache {
  const GeneratorModel* model = nullptr;
  ModelPlan plan;
  std::vector<T> params;  // double path keeps an upcast copy; float aliases

  explicit ModelCache(const GeneratorModel& m);
  const T* tensor(int idx) const;
};

template <typename T>
struct DecodeWs {
  std::vector<T> fc_post;               // post-lrelu bottleneck
  std::vector<std::vector<T>> post;     // post[i]: stage-i decoder output (post-lrelu)
  std::vector<T> logits;
  Grid<T> prob;
  ConvWorkspace<T> cws;
};

template <typename T>
void decode_forward(const ModelCache<T>& mc, const std::vector<T>& z, DecodeWs<T>& ws);

// grad of <upstream, decode(z)> wrt z; pure latent gradient, weights fixed
template <typename T>
std::vector<T> decode_backward_z(const ModelCache<T>& mc, const DecodeWs<T>& ws,
                                 const Grid<T>& upstream);

template <typename T>
struct EncodeWs {
  std::vector<std::vector<T>> post;  // post[i]: stage-i encoder output (post-lrelu)
  std::vector<T> mu, logvar;
  ConvWorkspace<T> cws;
};

template <typename T>
void encode_forward(const ModelCache<T>& mc, const Grid<T>& x, EncodeWs<T>& ws);

// Per-sample VAE loss and parameter gradient (accumulated into grad, which is
// a flat buffer aligned with model.params). eps is the reparameterisation
// draw, supplied by the caller. weight scales the contribution (1/batch).
template <typename T>
VaeLossReport vae_sample_grads(const ModelCache<T>& mc, const LabelVolume& x,
                               const std::vector<T>& eps, double beta, T weight,
                               std::vector<T>& grad);

template <typename T>
Grid<T> one_hot_t(const LabelVolume& v);

}  // namespace detail

}  // namespace segsr
