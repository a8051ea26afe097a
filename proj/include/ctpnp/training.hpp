#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "ctpnp/network.hpp"
#include "ctpnp/types.hpp"

namespace ctpnp {

struct L1Result {
  double loss = 0.0;
  std::vector<double> grad;  // d(loss)/d(pred)
};

/// mean |pred - target| and its gradient sign(pred - target) / N, sign(0) = 0.
L1Result l1_loss(std::span<const double> pred, std::span<const double> target);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct OptimState {
  std::vector<std::vector<double>> m;  // first moments, one per tensor
  std::vector<std::vector<double>> v;  // second moments
  std::uint64_t step = 0;
  double lr = 1e-3;
};

OptimState make_optim_state(const PriorParams& params, double lr);

/// Bias-corrected Adam update using state.lr.
void adam_step(PriorParams& params, const PriorParams& grads, OptimState& state, const AdamConfig& cfg = {});

/// Reduce-on-plateau: after `patience` consecutive epochs without a strict
/// improvement of the tracked metric, divide the learning rate by `factor`.
class PlateauScheduler {
 public:
  PlateauScheduler(double factor, int patience) : factor_(factor), patience_(patience) {}

  /// Records one epoch's metric; returns true if it is a new best. `lr` is
  /// reduced in place when the plateau rule fires.
  bool step(double metric, double& lr);

  double best() const { return best_; }

 private:
  double factor_;
  int patience_;
  double best_ = std::numeric_limits<double>::infinity();
  int bad_epochs_ = 0;
};

struct Patch {
  FeatureMap input;   // 2h+1 slices
  FeatureMap target;  // clean centre slice, one channel
};

struct Dataset {
  std::vector<Patch> train;
  std::vector<Patch> validation;
};

struct PatchingConfig {
  int half_width = 2;
  int height = 32;
  int width = 32;
  int stride_y = 32;
  int stride_x = 32;
  int stride_z = 1;
};

/// Regularly strided patches of an aligned (input, target) volume pair, in
/// (z, y, x) scan order.
std::vector<Patch> collect_patches(const Volume& input, const Volume& target, const PatchingConfig& cfg);

/// Seeded shuffle, then the first `train_fraction` go to training.
Dataset split_patches(std::vector<Patch> patches, std::uint64_t seed, double train_fraction);

Dataset extract_patches(const Volume& input, const Volume& target, const PatchingConfig& cfg,
                        std::uint64_t seed, double train_fraction = 0.8);

struct TrainConfig {
  int epochs = 200;
  double lr = 1e-3;
  AdamConfig adam;
  double plateau_factor = 2.0;
  int plateau_patience = 10;
  std::size_t batch = 8;
  std::uint64_t seed = 0;
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_nrmse = 0.0;
  double lr = 0.0;  // learning rate after this epoch's scheduler update
};

struct TrainResult {
  PriorParams params;  // snapshot from the best validation epoch
  std::vector<EpochLog> log;
  int best_epoch = 0;
};

/// NRMSE of (centre - R(input)) against the targets, pooled over patches.
double validation_nrmse(const PriorParams& params, const std::vector<Patch>& patches);

/// Minimises the L1 residual loss with Adam. If arch.input_scale <= 0 it is
/// set to 1 / RMS of the training inputs.
TrainResult train_prior(const Dataset& data, Architecture arch, const TrainConfig& cfg);

}  // namespace ctpnp
