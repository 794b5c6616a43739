#include "disa/cnn.hpp"

#include "disa/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace disa {

std::string_view to_string(LayerType type) {
  switch (type) {
    case LayerType::Conv3d: return "conv3d";
    case LayerType::LeakyRelu: return "leaky_relu";
    case LayerType::BlurPool: return "blurpool";
    case LayerType::ResidualBegin: return "residual_begin";
    case LayerType::ResidualEnd: return "residual_end";
    case LayerType::NormClip: return "norm_clip";
  }
  return "?";
}

LayerType parse_layer_type(std::string_view text) {
  for (LayerType t : {LayerType::Conv3d, LayerType::LeakyRelu, LayerType::BlurPool, LayerType::ResidualBegin,
                      LayerType::ResidualEnd, LayerType::NormClip})
    if (to_string(t) == text) return t;
  throw DataError("unknown layer type '" + std::string(text) + "'");
}

std::size_t LayerSpec::parameter_count() const {
  if (type != LayerType::Conv3d) return 0;
  const std::size_t k3 = static_cast<std::size_t>(kernel) * kernel * kernel;
  return static_cast<std::size_t>(in_channels) * out_channels * k3 + static_cast<std::size_t>(out_channels);
}

NetworkSpec NetworkSpec::reference() {
  NetworkSpec s;
  auto& l = s.layers;
  auto resblock = [&](int c) {
    l.push_back(LayerSpec::residual_begin());
    l.push_back(LayerSpec::conv(c, c));
    l.push_back(LayerSpec::leaky_relu());
    l.push_back(LayerSpec::conv(c, c));
    l.push_back(LayerSpec::residual_end());
    l.push_back(LayerSpec::leaky_relu());
  };
  l.push_back(LayerSpec::conv(1, 16));
  l.push_back(LayerSpec::leaky_relu());
  l.push_back(LayerSpec::blurpool());
  resblock(16);
  resblock(16);
  l.push_back(LayerSpec::conv(16, 24));
  l.push_back(LayerSpec::leaky_relu());
  l.push_back(LayerSpec::blurpool());
  resblock(24);
  l.push_back(LayerSpec::conv(24, 32));
  l.push_back(LayerSpec::leaky_relu());
  l.push_back(LayerSpec::conv(32, 16, 1));
  l.push_back(LayerSpec::norm_clip());
  return s;
}

void NetworkSpec::validate() const {
  if (layers.empty()) throw DataError("network has no layers");
  int channels = -1;
  std::vector<int> open;
  int pools = 0;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& l = layers[i];
    switch (l.type) {
      case LayerType::Conv3d:
        if (l.in_channels < 1 || l.out_channels < 1) throw DataError("conv layer needs positive channel counts");
        if (l.kernel != 1 && l.kernel != 3) throw DataError("conv kernel must be 1 or 3");
        if (channels >= 0 && l.in_channels != channels)
          throw DataError("channel mismatch at layer " + std::to_string(i));
        channels = l.out_channels;
        break;
      case LayerType::LeakyRelu:
        if (!(l.slope >= 0.0f && l.slope < 1.0f)) throw DataError("leaky_relu slope must lie in [0, 1)");
        break;
      case LayerType::BlurPool:
        ++pools;
        break;
      case LayerType::ResidualBegin:
        open.push_back(channels);
        break;
      case LayerType::ResidualEnd:
        if (open.empty()) throw DataError("residual_end without residual_begin");
        if (open.back() != channels) throw DataError("residual branch changes channel count");
        open.pop_back();
        break;
      case LayerType::NormClip:
        if (i + 1 != layers.size()) throw DataError("norm_clip must be the terminal layer");
        break;
    }
  }
  if (!open.empty()) throw DataError("unterminated residual block");
  if (pools != 2) throw DataError("total striding factor must be 4 (exactly two blurpool layers)");
  if (layers.back().type != LayerType::NormClip) throw DataError("terminal layer must be norm_clip");
  if (channels != FeatureMap::kDescriptorChannels) throw DataError("network must output 16 channels");
  if (input_channels() != 1) throw DataError("network must take one input channel");
}

std::size_t NetworkSpec::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.parameter_count();
  return n;
}

int NetworkSpec::conv_count() const {
  return static_cast<int>(std::count_if(layers.begin(), layers.end(),
                                        [](const LayerSpec& l) { return l.type == LayerType::Conv3d; }));
}

int NetworkSpec::stride() const {
  int s = 1;
  for (const auto& l : layers)
    if (l.type == LayerType::BlurPool) s *= 2;
  return s;
}

int NetworkSpec::input_channels() const {
  for (const auto& l : layers)
    if (l.type == LayerType::Conv3d) return l.in_channels;
  return 0;
}

int NetworkSpec::output_channels() const {
  int c = 0;
  for (const auto& l : layers)
    if (l.type == LayerType::Conv3d) c = l.out_channels;
  return c;
}

Network::Network(NetworkSpec spec, std::vector<ConvWeights> weights)
    : spec_(std::move(spec)), weights_(std::move(weights)) {
  spec_.validate();
  if (weights_.size() != static_cast<std::size_t>(spec_.conv_count()))
    throw DataError("weight tensor count does not match the conv layer count");
  std::size_t k = 0;
  for (const auto& l : spec_.layers) {
    if (l.type != LayerType::Conv3d) continue;
    const ConvWeights& w = weights_[k++];
    if (w.kernel.size() + w.bias.size() != l.parameter_count() ||
        w.bias.size() != static_cast<std::size_t>(l.out_channels))
      throw DataError("weight shape mismatch at conv " + std::to_string(k - 1));
  }
}

Network Network::random(const NetworkSpec& spec, std::uint64_t seed, float gain) {
  spec.validate();
  std::mt19937_64 rng(seed);
  std::vector<ConvWeights> weights;
  for (const auto& l : spec.layers) {
    if (l.type != LayerType::Conv3d) continue;
    const int k3 = l.kernel * l.kernel * l.kernel;
    const double std_w = gain * std::sqrt(2.0 / (static_cast<double>(l.in_channels) * k3));
    std::normal_distribution<double> nw(0.0, std_w);
    std::normal_distribution<double> nb(0.0, 0.1 * gain);
    ConvWeights w;
    w.kernel.resize(static_cast<std::size_t>(l.out_channels) * l.in_channels * k3);
    for (float& x : w.kernel) x = static_cast<float>(nw(rng));
    w.bias.resize(static_cast<std::size_t>(l.out_channels));
    for (float& x : w.bias) x = static_cast<float>(nb(rng));
    weights.push_back(std::move(w));
  }
  return Network(spec, std::move(weights));
}

Tensor conv3d(const Tensor& in, const LayerSpec& layer, const ConvWeights& w) {
  if (in.channels != layer.in_channels) throw DataError("conv3d: input channel mismatch");
  const int k = layer.kernel;
  const int r = k / 2;
  const int k3 = k * k * k;
  const int nx = in.dims[0], ny = in.dims[1], nz = in.dims[2];
  Tensor out(layer.out_channels, in.dims);
  parallel::for_each(static_cast<std::size_t>(layer.out_channels), [&](std::size_t o) {
    float* dst = out.channel(static_cast<int>(o));
    std::fill(dst, dst + out.plane(), w.bias[o]);
    for (int i = 0; i < in.channels; ++i) {
      const float* src = in.channel(i);
      const float* kern = w.kernel.data() + (o * static_cast<std::size_t>(in.channels) + i) * k3;
      for (int kz = 0; kz < k; ++kz)
        for (int ky = 0; ky < k; ++ky)
          for (int kx = 0; kx < k; ++kx) {
            const float wt = kern[(kz * k + ky) * k + kx];
            if (wt == 0.0f) continue;
            const int dz = kz - r, dy = ky - r, dx = kx - r;
            const int x0 = std::max(0, -dx), x1 = std::min(nx, nx - dx);
            const int y0 = std::max(0, -dy), y1 = std::min(ny, ny - dy);
            const int z0 = std::max(0, -dz), z1 = std::min(nz, nz - dz);
            for (int z = z0; z < z1; ++z)
              for (int y = y0; y < y1; ++y) {
                float* drow = dst + (static_cast<std::size_t>(z) * ny + y) * nx;
                const float* srow = src + (static_cast<std::size_t>(z + dz) * ny + (y + dy)) * nx + dx;
                for (int x = x0; x < x1; ++x) drow[x] += wt * srow[x];
              }
          }
    }
  });
  return out;
}

namespace {

// [1,2,1]/4 along one axis with zero padding, keeping even indices.
Tensor blur_axis(const Tensor& in, int axis) {
  Index3 od = in.dims;
  od[axis] = (in.dims[axis] + 1) / 2;
  Tensor out(in.channels, od);
  const int n = in.dims[axis];
  const std::array<std::size_t, 3> is{1, static_cast<std::size_t>(in.dims[0]),
                                      static_cast<std::size_t>(in.dims[0]) * in.dims[1]};
  const std::array<std::size_t, 3> os{1, static_cast<std::size_t>(od[0]), static_cast<std::size_t>(od[0]) * od[1]};
  const std::size_t planes = static_cast<std::size_t>(in.channels) * od[2];
  parallel::for_each(planes, [&](std::size_t cz) {
    const int c = static_cast<int>(cz / od[2]);
    const int z = static_cast<int>(cz % od[2]);
    const float* src = in.channel(c);
    float* dst = out.channel(c);
    for (int y = 0; y < od[1]; ++y)
      for (int x = 0; x < od[0]; ++x) {
        std::array<int, 3> o{x, y, z};
        float* d = dst + o[0] * os[0] + o[1] * os[1] + o[2] * os[2];
        std::array<int, 3> i = o;
        const int centre = 2 * o[axis];
        i[axis] = centre;
        const std::size_t base = i[0] * is[0] + i[1] * is[1] + i[2] * is[2];
        float s = 0.5f * src[base];
        if (centre - 1 >= 0) s += 0.25f * src[base - is[axis]];
        if (centre + 1 < n) s += 0.25f * src[base + is[axis]];
        *d = s;
      }
  });
  return out;
}

}  // namespace

Tensor blurpool(const Tensor& input) {
  for (int a = 0; a < 3; ++a)
    if (input.dims[a] < 2) throw DataError("blurpool needs at least 2 samples per axis");
  return blur_axis(blur_axis(blur_axis(input, 0), 1), 2);
}

void leaky_relu_inplace(Tensor& t, float slope) {
  for (float& v : t.data) v = v >= 0.0f ? v : slope * v;
}

Tensor leaky_relu(Tensor t, float slope) {
  leaky_relu_inplace(t, slope);
  return t;
}

void norm_clip_inplace(Tensor& t) {
  const std::size_t plane = t.plane();
  for (std::size_t p = 0; p < plane; ++p) {
    double sq = 0.0;
    for (int c = 0; c < t.channels; ++c) {
      const double v = t.channel(c)[p];
      sq += v * v;
    }
    const double norm = std::sqrt(sq);
    if (norm > 1.0) {
      const float inv = static_cast<float>(1.0 / norm);
      for (int c = 0; c < t.channels; ++c) t.channel(c)[p] *= inv;
    }
  }
}

Tensor norm_clip(Tensor t) {
  norm_clip_inplace(t);
  return t;
}

Tensor Network::forward(Tensor x) const {
  std::vector<Tensor> skips;
  std::size_t k = 0;
  for (const auto& l : spec_.layers) {
    switch (l.type) {
      case LayerType::Conv3d: x = conv3d(x, l, weights_[k++]); break;
      case LayerType::LeakyRelu: leaky_relu_inplace(x, l.slope); break;
      case LayerType::BlurPool: x = blurpool(x); break;
      case LayerType::ResidualBegin: skips.push_back(x); break;
      case LayerType::ResidualEnd: {
        const Tensor& s = skips.back();
        if (s.data.size() != x.data.size()) throw DataError("residual shape mismatch");
        for (std::size_t i = 0; i < x.data.size(); ++i) x.data[i] += s.data[i];
        skips.pop_back();
        break;
      }
      case LayerType::NormClip: norm_clip_inplace(x); break;
    }
  }
  return x;
}

FeatureMap Network::infer(const Volume& v) const {
  const Index3& d = v.dims();
  if (d[0] < 16 || d[1] < 16 || d[2] < 16) throw DataError("infer needs at least 16 voxels per axis");
  Tensor in(1, d);
  std::copy(v.data().begin(), v.data().end(), in.data.begin());
  const Tensor out = forward(std::move(in));
  const std::size_t cells = out.plane();
  const auto channels = static_cast<std::size_t>(out.channels);
  std::vector<float> values(cells * channels);
  for (std::size_t c = 0; c < channels; ++c) {
    const float* src = out.channel(static_cast<int>(c));
    for (std::size_t p = 0; p < cells; ++p) values[p * channels + c] = src[p];
  }
  return FeatureMap(v.geometry(), spec_.stride(), out.dims, out.channels, std::move(values));
}

}  // namespace disa
