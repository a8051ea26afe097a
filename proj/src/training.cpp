#include "ctpnp/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>

#include "ctpnp/errors.hpp"
#include "ctpnp/rng.hpp"

namespace ctpnp {
namespace {

constexpr std::uint64_t kSplitStream = 0x73706c6974ull;  // "split"
constexpr std::uint64_t kEpochStream = 0x65706f6368ull;  // "epoch"

// Centre channel minus predicted residual.
std::vector<double> cleaned(const Patch& p, const FeatureMap& residual) {
  const int c = p.input.channels / 2;
  const double* centre = p.input.channel(c);
  std::vector<double> out(p.input.plane());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = centre[i] - residual.data[i];
  return out;
}

void zero_grads(PriorParams& g) {
  for (auto t : g.tensors()) std::fill(t.begin(), t.end(), 0.0);
}

}  // namespace

L1Result l1_loss(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size()) throw ShapeError("l1_loss: length mismatch");
  L1Result r;
  r.grad.assign(pred.size(), 0.0);
  if (pred.empty()) return r;
  const double inv_n = 1.0 / static_cast<double>(pred.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double e = pred[i] - target[i];
    acc += std::abs(e);
    r.grad[i] = e > 0.0 ? inv_n : (e < 0.0 ? -inv_n : 0.0);
  }
  r.loss = acc * inv_n;
  return r;
}

OptimState make_optim_state(const PriorParams& params, double lr) {
  OptimState s;
  s.lr = lr;
  for (auto t : params.tensors()) {
    s.m.emplace_back(t.size(), 0.0);
    s.v.emplace_back(t.size(), 0.0);
  }
  return s;
}

void adam_step(PriorParams& params, const PriorParams& grads, OptimState& state, const AdamConfig& cfg) {
  auto p = params.tensors();
  const auto g = grads.tensors();
  if (p.size() != g.size() || p.size() != state.m.size()) throw ShapeError("adam_step: tensor count mismatch");
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (p[k].size() != g[k].size() || p[k].size() != state.m[k].size())
      throw ShapeError("adam_step: tensor shape mismatch");
    auto& m = state.m[k];
    auto& v = state.v[k];
    for (std::size_t i = 0; i < p[k].size(); ++i) {
      const double gi = g[k][i];
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p[k][i] -= state.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

bool PlateauScheduler::step(double metric, double& lr) {
  if (metric < best_) {
    best_ = metric;
    bad_epochs_ = 0;
    return true;
  }
  if (++bad_epochs_ >= patience_) {
    lr /= factor_;
    bad_epochs_ = 0;
  }
  return false;
}

std::vector<Patch> collect_patches(const Volume& input, const Volume& target, const PatchingConfig& cfg) {
  if (!(input.dims == target.dims)) throw ShapeError("patch volumes are not aligned");
  if (cfg.height <= 0 || cfg.width <= 0 || cfg.stride_x <= 0 || cfg.stride_y <= 0 || cfg.stride_z <= 0)
    throw ParamError("patch shape and strides must be positive");
  const int H = static_cast<int>(input.dims.ny), W = static_cast<int>(input.dims.nx);
  if (cfg.height > H || cfg.width > W)
    throw ShapeError("patch larger than volume");
  std::vector<Patch> out;
  for (std::size_t z = 0; z < input.dims.nz; z += static_cast<std::size_t>(cfg.stride_z)) {
    const SliceStack s = stack_slices(input, z, cfg.half_width);
    const auto tslice = target.slice(z);
    for (int y0 = 0; y0 + cfg.height <= H; y0 += cfg.stride_y)
      for (int x0 = 0; x0 + cfg.width <= W; x0 += cfg.stride_x) {
        Patch p{FeatureMap(s.map.channels, cfg.height, cfg.width), FeatureMap(1, cfg.height, cfg.width)};
        for (int c = 0; c < s.map.channels; ++c)
          for (int y = 0; y < cfg.height; ++y)
            std::copy_n(s.map.channel(c) + static_cast<std::size_t>(y0 + y) * W + x0, cfg.width,
                        p.input.channel(c) + static_cast<std::size_t>(y) * cfg.width);
        for (int y = 0; y < cfg.height; ++y)
          std::copy_n(tslice.data() + static_cast<std::size_t>(y0 + y) * W + x0, cfg.width,
                      p.target.data.data() + static_cast<std::size_t>(y) * cfg.width);
        out.push_back(std::move(p));
      }
  }
  return out;
}

Dataset split_patches(std::vector<Patch> patches, std::uint64_t seed, double train_fraction) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ParamError("train fraction must lie in (0, 1)");
  CounterRng rng(seed, kSplitStream);
  rng.shuffle(patches);
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(patches.size())));
  Dataset d;
  d.train.assign(std::make_move_iterator(patches.begin()),
                 std::make_move_iterator(patches.begin() + static_cast<std::ptrdiff_t>(n_train)));
  d.validation.assign(std::make_move_iterator(patches.begin() + static_cast<std::ptrdiff_t>(n_train)),
                      std::make_move_iterator(patches.end()));
  return d;
}

Dataset extract_patches(const Volume& input, const Volume& target, const PatchingConfig& cfg, std::uint64_t seed,
                        double train_fraction) {
  return split_patches(collect_patches(input, target, cfg), seed, train_fraction);
}

double validation_nrmse(const PriorParams& params, const std::vector<Patch>& patches) {
  std::vector<double> err(patches.size()), ref(patches.size());
  const long n = static_cast<long>(patches.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (long i = 0; i < n; ++i) {
    const Patch& p = patches[static_cast<std::size_t>(i)];
    const std::vector<double> clean = cleaned(p, net_forward(params, p.input));
    double e = 0.0, r = 0.0;
    for (std::size_t k = 0; k < clean.size(); ++k) {
      const double d = clean[k] - p.target.data[k];
      e += d * d;
      r += p.target.data[k] * p.target.data[k];
    }
    err[static_cast<std::size_t>(i)] = e;
    ref[static_cast<std::size_t>(i)] = r;
  }
  const double e = std::accumulate(err.begin(), err.end(), 0.0);
  const double r = std::accumulate(ref.begin(), ref.end(), 0.0);
  if (!(r > 0.0)) throw MetricUndefined("validation targets are all zero");
  return std::sqrt(e / r);
}

TrainResult train_prior(const Dataset& data, Architecture arch, const TrainConfig& cfg) {
  if (data.train.empty()) throw DataError("training set is empty");
  if (data.validation.empty()) throw DataError("validation set is empty");
  if (cfg.epochs < 1) throw ParamError("epochs must be >= 1");
  if (cfg.batch < 1) throw ParamError("batch size must be >= 1");
  if (data.train.front().input.channels != arch.in_channels())
    throw ShapeError("patch channel count does not match the architecture half width");

  if (!(arch.input_scale > 0.0)) {
    double ss = 0.0;
    std::size_t count = 0;
    for (const Patch& p : data.train) {
      const double* c = p.input.channel(p.input.channels / 2);
      for (std::size_t i = 0; i < p.input.plane(); ++i) ss += c[i] * c[i];
      count += p.input.plane();
    }
    const double rms = std::sqrt(ss / static_cast<double>(count));
    arch.input_scale = rms > 0.0 ? 1.0 / rms : 1.0;
  }

  TrainResult result;
  PriorParams params = init_params(arch, cfg.seed);
  OptimState state = make_optim_state(params, cfg.lr);
  PlateauScheduler scheduler(cfg.plateau_factor, cfg.plateau_patience);
  result.params = params;

  std::vector<std::size_t> order(data.train.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<PriorParams> sample_grads;
  PriorParams batch_grad = zero_params(arch);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    CounterRng rng(cfg.seed + static_cast<std::uint64_t>(epoch), kEpochStream);
    rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      const std::size_t nb = std::min(cfg.batch, order.size() - start);
      sample_grads.resize(nb, batch_grad);
      std::vector<double> sample_loss(nb, 0.0);
      std::size_t batch_pixels = 0;
      for (std::size_t b = 0; b < nb; ++b) batch_pixels += data.train[order[start + b]].target.data.size();

      // Per-sample gradients in parallel, reduced in sample order below.
#pragma omp parallel for schedule(dynamic, 1)
      for (long b = 0; b < static_cast<long>(nb); ++b) {
        const Patch& p = data.train[order[start + static_cast<std::size_t>(b)]];
        PriorParams& g = sample_grads[static_cast<std::size_t>(b)];
        zero_grads(g);
        ForwardTape tape;
        const FeatureMap residual = net_forward(params, p.input, &tape);
        // Residual target: centre - clean.
        const double* centre = p.input.channel(p.input.channels / 2);
        std::vector<double> target(residual.data.size());
        for (std::size_t i = 0; i < target.size(); ++i) target[i] = centre[i] - p.target.data[i];
        const L1Result l1 = l1_loss(residual.data, target);
        FeatureMap upstream(1, residual.height, residual.width);
        const double w = static_cast<double>(residual.data.size()) / static_cast<double>(batch_pixels);
        for (std::size_t i = 0; i < upstream.data.size(); ++i) upstream.data[i] = l1.grad[i] * w;
        net_backward(params, tape, upstream, g);
        sample_loss[static_cast<std::size_t>(b)] = l1.loss * w;
      }
      zero_grads(batch_grad);
      double batch_loss = 0.0;
      for (std::size_t b = 0; b < nb; ++b) {
        auto dst = batch_grad.tensors();
        const auto src = std::as_const(sample_grads[b]).tensors();
        for (std::size_t k = 0; k < dst.size(); ++k)
          for (std::size_t i = 0; i < dst[k].size(); ++i) dst[k][i] += src[k][i];
        batch_loss += sample_loss[b];
      }
      adam_step(params, batch_grad, state, cfg.adam);
      loss_sum += batch_loss * static_cast<double>(nb);
      loss_count += nb;
    }

    const double val = validation_nrmse(params, data.validation);
    const bool improved = scheduler.step(val, state.lr);
    if (improved) {
      result.params = params;
      result.best_epoch = epoch;
    }
    result.log.push_back({epoch, loss_sum / static_cast<double>(loss_count), val, state.lr});
  }
  return result;
}

}  // namespace ctpnp
