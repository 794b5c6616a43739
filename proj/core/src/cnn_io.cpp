#include "disa/cnn.hpp"

#include "binary.hpp"

#include <nlohmann/json.hpp>

namespace disa {

namespace {
const std::string kWeightsMagic = detail::magic("DISAW1");
}

std::string spec_to_json(const NetworkSpec& spec) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : spec.layers) {
    nlohmann::json j{{"type", std::string(to_string(l.type))}};
    if (l.type == LayerType::Conv3d) {
      j["in_channels"] = l.in_channels;
      j["out_channels"] = l.out_channels;
      j["kernel"] = l.kernel;
    } else if (l.type == LayerType::LeakyRelu) {
      j["slope"] = l.slope;
    }
    layers.push_back(std::move(j));
  }
  return nlohmann::json{{"format", "DISAW1"}, {"layers", layers}}.dump();
}

NetworkSpec spec_from_json(const std::string& text) {
  NetworkSpec spec;
  try {
    const auto j = nlohmann::json::parse(text);
    for (const auto& lj : j.at("layers")) {
      LayerSpec l;
      l.type = parse_layer_type(lj.at("type").get<std::string>());
      l.in_channels = l.out_channels = l.kernel = 0;
      l.slope = 0.0f;
      if (l.type == LayerType::Conv3d) {
        l.in_channels = lj.at("in_channels").get<int>();
        l.out_channels = lj.at("out_channels").get<int>();
        l.kernel = lj.at("kernel").get<int>();
      } else if (l.type == LayerType::LeakyRelu) {
        l.slope = lj.at("slope").get<float>();
      }
      spec.layers.push_back(l);
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("DISAW1: malformed architecture header: ") + e.what());
  }
  spec.validate();
  return spec;
}

void save_weights(const Network& net, const std::filesystem::path& path) {
  const std::string header = spec_to_json(net.spec());
  detail::ByteWriter w;
  w.put_bytes(kWeightsMagic);
  w.put(static_cast<std::uint32_t>(header.size()));
  w.put_bytes(header);
  for (const auto& cw : net.weights()) {
    w.put_array(std::span<const float>(cw.kernel));
    w.put_array(std::span<const float>(cw.bias));
  }
  detail::write_file(path, w.bytes());
}

Network load_weights(const std::filesystem::path& path) {
  const std::vector<char> bytes = detail::read_file(path);
  detail::ByteReader r(bytes);
  if (r.get_string(8) != kWeightsMagic) throw DataError("not a DISAW1 file: bad magic");
  const auto header_len = r.get<std::uint32_t>();
  NetworkSpec spec = spec_from_json(r.get_string(header_len));
  std::vector<ConvWeights> weights;
  for (const auto& l : spec.layers) {
    if (l.type != LayerType::Conv3d) continue;
    ConvWeights cw;
    cw.kernel.resize(l.parameter_count() - static_cast<std::size_t>(l.out_channels));
    cw.bias.resize(static_cast<std::size_t>(l.out_channels));
    r.get_array(std::span<float>(cw.kernel));
    r.get_array(std::span<float>(cw.bias));
    weights.push_back(std::move(cw));
  }
  if (r.remaining() != 0) throw DataError("DISAW1: weight shape mismatch (trailing bytes)");
  return Network(std::move(spec), std::move(weights));
}

}  // namespace disa
