#include "ctpnp/network.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ctpnp/errors.hpp"
#include "ctpnp/rng.hpp"

namespace ctpnp {
namespace {

constexpr std::uint64_t kInitStream = 0x696e6974ull;  // "init"

ConvLayer make_layer(std::string name, int cin, int cout, int k) {
  ConvLayer l;
  l.name = std::move(name);
  l.cin = cin;
  l.cout = cout;
  l.ksize = k;
  l.weight.assign(static_cast<std::size_t>(cout) * cin * k * k, 0.0);
  l.bias.assign(static_cast<std::size_t>(cout), 0.0);
  return l;
}

// Layer indices for a given architecture, in declaration order.
struct Layout {
  int levels;
  int enc_a(int l) const { return 2 * l; }
  int enc_b(int l) const { return 2 * l + 1; }
  int mid_a() const { return 2 * levels; }
  int mid_b() const { return 2 * levels + 1; }
  // decoder level l is the (levels-1-l)-th decoder block
  int up(int l) const { return 2 * levels + 2 + 3 * (levels - 1 - l); }
  int dec_a(int l) const { return up(l) + 1; }
  int dec_b(int l) const { return up(l) + 2; }
  int out() const { return 5 * levels + 2; }
  int count() const { return 5 * levels + 3; }
};

void relu_inplace(FeatureMap& m) {
  for (double& v : m.data) v = v > 0.0 ? v : 0.0;
}

// dL/d(pre) from dL/d(post) for a ReLU whose output was `post`.
void relu_backward(const FeatureMap& post, FeatureMap& grad) {
  for (std::size_t i = 0; i < grad.data.size(); ++i)
    if (!(post.data[i] > 0.0)) grad.data[i] = 0.0;
}

FeatureMap maxpool2(const FeatureMap& in, std::vector<std::uint32_t>* argmax) {
  const int h = in.height / 2, w = in.width / 2;
  FeatureMap out(in.channels, h, w);
  if (argmax) argmax->assign(out.data.size(), 0);
  for (int c = 0; c < in.channels; ++c) {
    const double* src = in.channel(c);
    double* dst = out.channel(c);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        // Window visited in increasing flat index; strict > keeps the first max.
        std::size_t best = static_cast<std::size_t>(2 * y) * in.width + 2 * x;
        const std::size_t cand[3] = {best + 1, best + static_cast<std::size_t>(in.width),
                                     best + static_cast<std::size_t>(in.width) + 1};
        for (std::size_t idx : cand)
          if (src[idx] > src[best]) best = idx;
        const std::size_t o = static_cast<std::size_t>(y) * w + x;
        dst[o] = src[best];
        if (argmax) (*argmax)[static_cast<std::size_t>(c) * out.plane() + o] = static_cast<std::uint32_t>(best);
      }
  }
  return out;
}

FeatureMap upsample2(const FeatureMap& in) {
  FeatureMap out(in.channels, in.height * 2, in.width * 2);
  for (int c = 0; c < in.channels; ++c) {
    const double* src = in.channel(c);
    double* dst = out.channel(c);
    for (int y = 0; y < out.height; ++y)
      for (int x = 0; x < out.width; ++x)
        dst[static_cast<std::size_t>(y) * out.width + x] = src[static_cast<std::size_t>(y / 2) * in.width + x / 2];
  }
  return out;
}

FeatureMap upsample2_backward(const FeatureMap& grad) {
  FeatureMap out(grad.channels, grad.height / 2, grad.width / 2);
  for (int c = 0; c < grad.channels; ++c) {
    const double* src = grad.channel(c);
    double* dst = out.channel(c);
    for (int y = 0; y < grad.height; ++y)
      for (int x = 0; x < grad.width; ++x)
        dst[static_cast<std::size_t>(y / 2) * out.width + x / 2] += src[static_cast<std::size_t>(y) * grad.width + x];
  }
  return out;
}

FeatureMap concat(const FeatureMap& a, const FeatureMap& b) {
  FeatureMap out(a.channels + b.channels, a.height, a.width);
  std::copy(a.data.begin(), a.data.end(), out.data.begin());
  std::copy(b.data.begin(), b.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(a.data.size()));
  return out;
}

// Accumulates weight/bias gradients of `layer` into `g`; returns dL/d(input)
// when `want_input` is set.
FeatureMap conv2d_backward(const ConvLayer& layer, const FeatureMap& in, const FeatureMap& dout, ConvLayer& g,
                           bool want_input) {
  const int H = in.height, W = in.width, k = layer.ksize, pad = k / 2;
  FeatureMap din;
  if (want_input) din = FeatureMap(layer.cin, H, W);
  for (int co = 0; co < layer.cout; ++co) {
    const double* go = dout.channel(co);
    double bsum = 0.0;
    for (std::size_t i = 0; i < dout.plane(); ++i) bsum += go[i];
    g.bias[static_cast<std::size_t>(co)] += bsum;
    for (int ci = 0; ci < layer.cin; ++ci) {
      const double* src = in.channel(ci);
      double* dsrc = want_input ? din.channel(ci) : nullptr;
      for (int ky = 0; ky < k; ++ky)
        for (int kx = 0; kx < k; ++kx) {
          const std::size_t widx = ((static_cast<std::size_t>(co) * layer.cin + ci) * k + ky) * k + kx;
          const double w = layer.weight[widx];
          const int dy = ky - pad, dx = kx - pad;
          const int y0 = std::max(0, -dy), y1 = std::min(H, H - dy);
          const int x0 = std::max(0, -dx), x1 = std::min(W, W - dx);
          double acc = 0.0;
          for (int y = y0; y < y1; ++y) {
            const double* grow = go + static_cast<std::size_t>(y) * W;
            const double* srow = src + static_cast<std::size_t>(y + dy) * W + dx;
            for (int x = x0; x < x1; ++x) acc += grow[x] * srow[x];
            if (dsrc) {
              double* drow = dsrc + static_cast<std::size_t>(y + dy) * W + dx;
              for (int x = x0; x < x1; ++x) drow[x] += w * grow[x];
            }
          }
          g.weight[widx] += acc;
        }
    }
  }
  return din;
}

void check_stack(const PriorParams& params, const FeatureMap& stack) {
  const Architecture& a = params.arch;
  if (stack.channels != a.in_channels())
    throw ShapeError("stack has " + std::to_string(stack.channels) + " channels, network expects " +
                     std::to_string(a.in_channels()));
  const int m = static_cast<int>(a.spatial_multiple());
  if (stack.height <= 0 || stack.width <= 0 || stack.height % m != 0 || stack.width % m != 0)
    throw ShapeError("stack spatial size must be a positive multiple of " + std::to_string(m));
  if (stack.data.size() != static_cast<std::size_t>(stack.channels) * stack.plane())
    throw ShapeError("stack data length");
  if (static_cast<int>(params.layers.size()) != Layout{a.levels}.count())
    throw ShapeError("parameter layer count does not match architecture");
}

}  // namespace

std::size_t PriorParams::parameter_count() const {
  std::size_t n = 0;
  for (const ConvLayer& l : layers) n += l.weight.size() + l.bias.size();
  return n;
}

std::vector<std::span<double>> PriorParams::tensors() {
  std::vector<std::span<double>> out;
  for (ConvLayer& l : layers) {
    out.emplace_back(l.weight);
    out.emplace_back(l.bias);
  }
  return out;
}

std::vector<std::span<const double>> PriorParams::tensors() const {
  std::vector<std::span<const double>> out;
  for (const ConvLayer& l : layers) {
    out.emplace_back(l.weight);
    out.emplace_back(l.bias);
  }
  return out;
}

PriorParams zero_params(const Architecture& arch) {
  if (arch.levels < 0 || arch.base_features < 1 || arch.half_width < 0 || !(arch.input_scale > 0.0))
    throw ParamError("invalid architecture descriptor");
  PriorParams p;
  p.arch = arch;
  const int L = arch.levels;
  int cin = arch.in_channels();
  for (int l = 0; l < L; ++l) {
    const int f = arch.features(l);
    p.layers.push_back(make_layer("enc" + std::to_string(l) + ".a", cin, f, 3));
    p.layers.push_back(make_layer("enc" + std::to_string(l) + ".b", f, f, 3));
    cin = f;
  }
  const int fm = arch.features(L);
  p.layers.push_back(make_layer("mid.a", cin, fm, 3));
  p.layers.push_back(make_layer("mid.b", fm, fm, 3));
  for (int l = L - 1; l >= 0; --l) {
    const int f = arch.features(l);
    p.layers.push_back(make_layer("up" + std::to_string(l), arch.features(l + 1), f, 3));
    p.layers.push_back(make_layer("dec" + std::to_string(l) + ".a", 2 * f, f, 3));
    p.layers.push_back(make_layer("dec" + std::to_string(l) + ".b", f, f, 3));
  }
  p.layers.push_back(make_layer("out", L > 0 ? arch.features(0) : fm, 1, 1));
  return p;
}

PriorParams init_params(const Architecture& arch, std::uint64_t seed) {
  PriorParams p = zero_params(arch);
  CounterRng rng(seed, kInitStream);
  for (ConvLayer& l : p.layers) {
    const double bound = std::sqrt(1.0 / static_cast<double>(l.cin * l.ksize * l.ksize));
    for (double& w : l.weight) w = rng.uniform(-bound, bound);
    for (double& b : l.bias) b = rng.uniform(-bound, bound);
  }
  return p;
}

SliceStack stack_slices(const Volume& vol, std::size_t z, int half_width) {
  if (z >= vol.dims.nz) throw RangeError("slice index out of range");
  if (half_width < 0) throw ParamError("half width must be >= 0");
  SliceStack s;
  s.center_index = half_width;
  s.map = FeatureMap(2 * half_width + 1, static_cast<int>(vol.dims.ny), static_cast<int>(vol.dims.nx));
  const long nz = static_cast<long>(vol.dims.nz);
  for (int c = 0; c < s.map.channels; ++c) {
    const long zz = std::clamp(static_cast<long>(z) + c - half_width, 0L, nz - 1);
    const auto src = vol.slice(static_cast<std::size_t>(zz));
    std::copy(src.begin(), src.end(), s.map.channel(c));
  }
  return s;
}

FeatureMap conv2d(const ConvLayer& layer, const FeatureMap& in) {
  if (in.channels != layer.cin) throw ShapeError("conv2d: channel mismatch in layer " + layer.name);
  const int H = in.height, W = in.width, k = layer.ksize, pad = k / 2;
  FeatureMap out(layer.cout, H, W);
  for (int co = 0; co < layer.cout; ++co) {
    double* dst = out.channel(co);
    std::fill(dst, dst + out.plane(), layer.bias[static_cast<std::size_t>(co)]);
    for (int ci = 0; ci < layer.cin; ++ci) {
      const double* src = in.channel(ci);
      for (int ky = 0; ky < k; ++ky)
        for (int kx = 0; kx < k; ++kx) {
          const double w = layer.weight[((static_cast<std::size_t>(co) * layer.cin + ci) * k + ky) * k + kx];
          if (w == 0.0) continue;
          const int dy = ky - pad, dx = kx - pad;
          const int y0 = std::max(0, -dy), y1 = std::min(H, H - dy);
          const int x0 = std::max(0, -dx), x1 = std::min(W, W - dx);
          for (int y = y0; y < y1; ++y) {
            double* orow = dst + static_cast<std::size_t>(y) * W;
            const double* srow = src + static_cast<std::size_t>(y + dy) * W + dx;
            for (int x = x0; x < x1; ++x) orow[x] += w * srow[x];
          }
        }
    }
  }
  return out;
}

FeatureMap net_forward(const PriorParams& params, const FeatureMap& stack, ForwardTape* tape) {
  check_stack(params, stack);
  const Layout lay{params.arch.levels};
  const int L = params.arch.levels;
  if (tape) {
    tape->conv_input.assign(static_cast<std::size_t>(lay.count()), {});
    tape->conv_output.assign(static_cast<std::size_t>(lay.count()), {});
    tape->pool_argmax.assign(static_cast<std::size_t>(L), {});
  }
  auto run = [&](int idx, const FeatureMap& in, bool relu) {
    FeatureMap out = conv2d(params.layers[static_cast<std::size_t>(idx)], in);
    if (relu) relu_inplace(out);
    if (tape) {
      tape->conv_input[static_cast<std::size_t>(idx)] = in;
      tape->conv_output[static_cast<std::size_t>(idx)] = out;
    }
    return out;
  };

  FeatureMap cur = stack;
  if (params.arch.input_scale != 1.0)
    for (double& v : cur.data) v *= params.arch.input_scale;

  std::vector<FeatureMap> skips(static_cast<std::size_t>(L));
  for (int l = 0; l < L; ++l) {
    FeatureMap a = run(lay.enc_a(l), cur, true);
    skips[static_cast<std::size_t>(l)] = run(lay.enc_b(l), a, true);
    cur = maxpool2(skips[static_cast<std::size_t>(l)], tape ? &tape->pool_argmax[static_cast<std::size_t>(l)] : nullptr);
  }
  cur = run(lay.mid_a(), cur, true);
  cur = run(lay.mid_b(), cur, true);
  for (int l = L - 1; l >= 0; --l) {
    FeatureMap up = run(lay.up(l), upsample2(cur), false);
    FeatureMap a = run(lay.dec_a(l), concat(skips[static_cast<std::size_t>(l)], up), true);
    cur = run(lay.dec_b(l), a, true);
  }
  FeatureMap out = run(lay.out(), cur, false);
  if (params.arch.input_scale != 1.0)
    for (double& v : out.data) v /= params.arch.input_scale;
  return out;
}

void net_backward(const PriorParams& params, const ForwardTape& tape, const FeatureMap& upstream,
                  PriorParams& grads) {
  const Layout lay{params.arch.levels};
  const int L = params.arch.levels;
  if (static_cast<int>(tape.conv_input.size()) != lay.count()) throw ShapeError("tape does not match network");
  if (grads.layers.size() != params.layers.size()) throw ShapeError("gradient layout does not match params");

  auto back = [&](int idx, FeatureMap grad, bool relu, bool want_input) {
    const auto i = static_cast<std::size_t>(idx);
    if (relu) relu_backward(tape.conv_output[i], grad);
    return conv2d_backward(params.layers[i], tape.conv_input[i], grad, grads.layers[i], want_input);
  };

  FeatureMap d = upstream;
  if (params.arch.input_scale != 1.0)
    for (double& v : d.data) v /= params.arch.input_scale;

  d = back(lay.out(), d, false, true);
  std::vector<FeatureMap> dskips(static_cast<std::size_t>(L));
  for (int l = 0; l < L; ++l) {
    d = back(lay.dec_b(l), d, true, true);
    FeatureMap dcat = back(lay.dec_a(l), d, true, true);
    const int f = params.arch.features(l);
    FeatureMap dskip(f, dcat.height, dcat.width), dup(f, dcat.height, dcat.width);
    std::copy(dcat.data.begin(), dcat.data.begin() + static_cast<std::ptrdiff_t>(dskip.data.size()), dskip.data.begin());
    std::copy(dcat.data.begin() + static_cast<std::ptrdiff_t>(dskip.data.size()), dcat.data.end(), dup.data.begin());
    dskips[static_cast<std::size_t>(l)] = std::move(dskip);
    d = upsample2_backward(back(lay.up(l), dup, false, true));
  }
  d = back(lay.mid_b(), d, true, true);
  d = back(lay.mid_a(), d, true, L > 0);
  for (int l = L - 1; l >= 0; --l) {
    FeatureMap dskip = std::move(dskips[static_cast<std::size_t>(l)]);
    const auto& argmax = tape.pool_argmax[static_cast<std::size_t>(l)];
    const std::size_t pooled_plane = d.plane();
    for (int c = 0; c < d.channels; ++c)
      for (std::size_t o = 0; o < pooled_plane; ++o) {
        const std::size_t src = static_cast<std::size_t>(c) * pooled_plane + o;
        dskip.channel(c)[argmax[src]] += d.data[src];
      }
    d = back(lay.enc_b(l), std::move(dskip), true, true);
    d = back(lay.enc_a(l), d, true, l > 0);
  }
}

FeatureMap reflect_pad(const FeatureMap& in, int height, int width) {
  if (height < in.height || width < in.width) throw ShapeError("reflect_pad: target smaller than input");
  FeatureMap out(in.channels, height, width);
  auto fold = [](int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * (n - 1);
    i %= period;
    return i < n ? i : period - i;
  };
  for (int c = 0; c < in.channels; ++c) {
    const double* src = in.channel(c);
    double* dst = out.channel(c);
    for (int y = 0; y < height; ++y) {
      const int sy = fold(y, in.height);
      for (int x = 0; x < width; ++x)
        dst[static_cast<std::size_t>(y) * width + x] = src[static_cast<std::size_t>(sy) * in.width + fold(x, in.width)];
    }
  }
  return out;
}

Volume denoise_volume(const PriorParams& params, const Volume& vol) {
  const int h = params.arch.half_width;
  const int m = static_cast<int>(params.arch.spatial_multiple());
  const int H = static_cast<int>(vol.dims.ny), W = static_cast<int>(vol.dims.nx);
  const int Hp = (H + m - 1) / m * m, Wp = (W + m - 1) / m * m;
  Volume out(vol.dims, vol.voxel_size_mm);
  const long nz = static_cast<long>(vol.dims.nz);
#pragma omp parallel for schedule(dynamic, 1)
  for (long z = 0; z < nz; ++z) {
    SliceStack s = stack_slices(vol, static_cast<std::size_t>(z), h);
    const FeatureMap input = (Hp == H && Wp == W) ? std::move(s.map) : reflect_pad(s.map, Hp, Wp);
    const FeatureMap residual = net_forward(params, input);
    const auto centre = vol.slice(static_cast<std::size_t>(z));
    auto dst = out.slice(static_cast<std::size_t>(z));
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * W + x;
        dst[i] = centre[i] - residual.data[static_cast<std::size_t>(y) * Wp + x];
      }
  }
  return out;
}

}  // namespace ctpnp
