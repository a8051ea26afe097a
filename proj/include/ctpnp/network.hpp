#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ctpnp/types.hpp"

namespace ctpnp {

/// Encoder-decoder layout of the residual network.
struct Architecture {
  int levels = 2;         // pooling/unpooling stages
  int base_features = 8;  // channels at full resolution
  int half_width = 2;     // input stack holds 2*half_width + 1 slices
  /// Intensities are multiplied by this factor on entry and the predicted
  /// residual divided by it on exit, so the network works on O(1) values.
  double input_scale = 1.0;

  int in_channels() const { return 2 * half_width + 1; }
  int features(int level) const { return base_features << level; }
  std::size_t spatial_multiple() const { return std::size_t{1} << levels; }
  bool operator==(const Architecture&) const = default;
};

struct ConvLayer {
  std::string name;
  int cin = 0;
  int cout = 0;
  int ksize = 3;
  std::vector<double> weight;  // [cout][cin][ky][kx]
  std::vector<double> bias;    // [cout]
};

/// All trainable tensors, in declaration order:
///   enc{l}.a, enc{l}.b            for l = 0 .. L-1
///   mid.a, mid.b
///   up{l}, dec{l}.a, dec{l}.b     for l = L-1 .. 0
///   out (1x1)
struct PriorParams {
  Architecture arch;
  std::vector<ConvLayer> layers;

  std::size_t parameter_count() const;
  /// Weight and bias tensors interleaved in declaration order.
  std::vector<std::span<double>> tensors();
  std::vector<std::span<const double>> tensors() const;
};

/// Shape-correct parameters with every value zero.
PriorParams zero_params(const Architecture& arch);
/// Uniform(-sqrt(1/fan_in), +sqrt(1/fan_in)) for weights and biases.
PriorParams init_params(const Architecture& arch, std::uint64_t seed);

/// C x H x W feature map, row-major.
struct FeatureMap {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> data;

  FeatureMap() = default;
  FeatureMap(int c, int h, int w) : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, 0.0) {}
  std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
  double* channel(int c) { return data.data() + static_cast<std::size_t>(c) * plane(); }
  const double* channel(int c) const { return data.data() + static_cast<std::size_t>(c) * plane(); }
};

/// 2h+1 adjacent slices as channels; slice indices outside the volume are
/// clamped to the nearest boundary slice.
struct SliceStack {
  FeatureMap map;
  int center_index = 0;
};

SliceStack stack_slices(const Volume& vol, std::size_t z, int half_width);

/// Activations recorded by net_forward for net_backward.
struct ForwardTape {
  std::vector<FeatureMap> conv_input;  // per layer
  std::vector<FeatureMap> conv_output;  // per layer, after activation
  std::vector<std::vector<std::uint32_t>> pool_argmax;  // per level
};

/// Predicted residual R(stack; theta), one channel of the input's spatial size.
FeatureMap net_forward(const PriorParams& params, const FeatureMap& stack, ForwardTape* tape = nullptr);

/// Accumulates d(loss)/d(theta) into `grads` (same layout as params) given
/// d(loss)/d(residual).
void net_backward(const PriorParams& params, const ForwardTape& tape, const FeatureMap& upstream,
                  PriorParams& grads);

/// Output slice z = centre slice - R(stack_slices(vol, z, h)). Slices whose
/// size is not a multiple of 2^levels are reflect-padded and cropped back.
Volume denoise_volume(const PriorParams& params, const Volume& vol);

// Building blocks, exposed for tests.
FeatureMap conv2d(const ConvLayer& layer, const FeatureMap& in);
FeatureMap reflect_pad(const FeatureMap& in, int height, int width);

}  // namespace ctpnp
