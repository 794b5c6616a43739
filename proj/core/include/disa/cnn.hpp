#pragma once

#include "disa/features.hpp"
#include "disa/volume.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace disa {

/// Planar multi-channel grid: channel-major, then z, y, x (x fastest).
struct Tensor {
  int channels = 0;
  Index3 dims{0, 0, 0};
  std::vector<float> data;

  Tensor() = default;
  Tensor(int c, Index3 d, float fill = 0.0f) : channels(c), dims(d), data(static_cast<std::size_t>(c) * product(d), fill) {}

  std::size_t plane() const { return product(dims); }
  float* channel(int c) { return data.data() + static_cast<std::size_t>(c) * plane(); }
  const float* channel(int c) const { return data.data() + static_cast<std::size_t>(c) * plane(); }
  float& at(int c, int x, int y, int z) {
    return channel(c)[(static_cast<std::size_t>(z) * dims[1] + y) * dims[0] + x];
  }
  float at(int c, int x, int y, int z) const {
    return channel(c)[(static_cast<std::size_t>(z) * dims[1] + y) * dims[0] + x];
  }
};

enum class LayerType { Conv3d, LeakyRelu, BlurPool, ResidualBegin, ResidualEnd, NormClip };

std::string_view to_string(LayerType type);
LayerType parse_layer_type(std::string_view text);

struct LayerSpec {
  LayerType type = LayerType::Conv3d;
  int in_channels = 0;   // conv only
  int out_channels = 0;  // conv only
  int kernel = 3;        // conv only: 1 or 3
  float slope = 0.01f;   // leaky_relu only

  std::size_t parameter_count() const;

  static LayerSpec conv(int in, int out, int kernel = 3) { return {LayerType::Conv3d, in, out, kernel, 0.0f}; }
  static LayerSpec leaky_relu(float slope = 0.01f) { return {LayerType::LeakyRelu, 0, 0, 0, slope}; }
  static LayerSpec blurpool() { return {LayerType::BlurPool, 0, 0, 0, 0.0f}; }
  static LayerSpec residual_begin() { return {LayerType::ResidualBegin, 0, 0, 0, 0.0f}; }
  static LayerSpec residual_end() { return {LayerType::ResidualEnd, 0, 0, 0, 0.0f}; }
  static LayerSpec norm_clip() { return {LayerType::NormClip, 0, 0, 0, 0.0f}; }
};

struct NetworkSpec {
  std::vector<LayerSpec> layers;

  /// conv(1->16) lrelu blurpool res(16) res(16) conv(16->24) lrelu blurpool res(24)
  /// conv(24->32) lrelu conv(32->16, 1^3) norm_clip. Ten convolutions, 91,000 parameters.
  static NetworkSpec reference();

  /// Throws DataError on broken channel chaining, unbalanced residual markers, a total
  /// striding factor other than 4 ("striding factor"), output channels != 16 or a missing
  /// terminal norm_clip.
  void validate() const;

  std::size_t parameter_count() const;
  int conv_count() const;
  int stride() const;  ///< 2^(number of blurpools)
  int input_channels() const;
  int output_channels() const;
};

struct ConvWeights {
  std::vector<float> kernel;  ///< (out, in, z, y, x)
  std::vector<float> bias;    ///< out
};

/// Validated spec plus one ConvWeights per conv layer (in layer order).
class Network {
 public:
  Network(NetworkSpec spec, std::vector<ConvWeights> weights);

  /// He-style normal init scaled by `gain`; biases drawn with std 0.1 * gain. Deterministic in seed.
  static Network random(const NetworkSpec& spec, std::uint64_t seed, float gain = 1.0f);

  const NetworkSpec& spec() const { return spec_; }
  const std::vector<ConvWeights>& weights() const { return weights_; }
  std::size_t parameter_count() const { return spec_.parameter_count(); }

  Tensor forward(Tensor input) const;

  /// Single forward pass on a normalized volume; dims >= 16 per axis.
  FeatureMap infer(const Volume& v) const;

 private:
  NetworkSpec spec_;
  std::vector<ConvWeights> weights_;
};

/// Zero-padded "same" cross-correlation, stride 1.
Tensor conv3d(const Tensor& input, const LayerSpec& layer, const ConvWeights& w);

/// [1,2,1]/4 blur per axis with zero padding, then every second sample from index 0.
Tensor blurpool(const Tensor& input);

void leaky_relu_inplace(Tensor& t, float slope);
Tensor leaky_relu(Tensor t, float slope = 0.01f);

/// v <- v / max(1, |v|) per cell, across channels.
void norm_clip_inplace(Tensor& t);
Tensor norm_clip(Tensor t);

/// "DISAW1": magic[8] | u32 header length | JSON {"layers": [...]} |
/// per conv: f32 kernel (out, in, z, y, x) then f32 bias.
void save_weights(const Network& net, const std::filesystem::path& path);
Network load_weights(const std::filesystem::path& path);

std::string spec_to_json(const NetworkSpec& spec);
NetworkSpec spec_from_json(const std::string& json);

}  // namespace disa
