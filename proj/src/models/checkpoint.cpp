#include "models/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "core/error.hpp"

namespace ddnet::models {
namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'D', 'D', 'N', 'C'};

json layer_to_json(const nn::LayerSpec& l) {
  json j;
  j["kind"] = nn::layer_kind_name(l.kind);
  j["name"] = l.name;
  switch (l.kind) {
    case nn::LayerKind::conv2d:
      j["out_channels"] = l.out_channels;
      j["kernel"] = l.kernel;
      j["stride"] = l.stride;
      j["pad_before"] = l.padding.before;
      j["pad_after"] = l.padding.after;
      break;
    case nn::LayerKind::maxpool2d:
      j["kernel"] = l.kernel;
      j["stride"] = l.stride;
      break;
    case nn::LayerKind::dense:
      j["units"] = l.units;
      break;
    case nn::LayerKind::dropout:
      j["rate"] = l.rate;
      break;
    case nn::LayerKind::batchnorm:
      j["momentum"] = l.momentum;
      j["epsilon"] = l.epsilon;
      break;
    default:
      break;
  }
  return j;
}

nn::LayerSpec layer_from_json(const json& j) {
  nn::LayerSpec l;
  l.kind = nn::layer_kind_from_name(j.at("kind").get<std::string>());
  l.name = j.at("name").get<std::string>();
  switch (l.kind) {
    case nn::LayerKind::conv2d:
      l.out_channels = j.at("out_channels").get<std::size_t>();
      l.kernel = j.at("kernel").get<std::size_t>();
      l.stride = j.at("stride").get<std::size_t>();
      l.padding = {j.at("pad_before").get<std::size_t>(), j.at("pad_after").get<std::size_t>()};
      break;
    case nn::LayerKind::maxpool2d:
      l.kernel = j.at("kernel").get<std::size_t>();
      l.stride = j.at("stride").get<std::size_t>();
      break;
    case nn::LayerKind::dense:
      l.units = j.at("units").get<std::size_t>();
      break;
    case nn::LayerKind::dropout:
      l.rate = j.at("rate").get<double>();
      break;
    case nn::LayerKind::batchnorm:
      l.momentum = j.at("momentum").get<double>();
      l.epsilon = j.at("epsilon").get<double>();
      break;
    default:
      break;
  }
  return l;
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return std::uint32_t{p[0]} | (std::uint32_t{p[1]} << 8) | (std::uint32_t{p[2]} << 16) |
         (std::uint32_t{p[3]} << 24);
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Model& model) {
  json header;
  header["arch_id"] = arch_name(model.spec.arch);
  header["input_shape"] = model.spec.input_shape;
  header["num_classes"] = model.spec.num_classes;
  header["layers"] = json::array();
  for (const auto& l : model.spec.layers) header["layers"].push_back(layer_to_json(l));
  header["params"] = json::array();
  for (const auto& p : model.params) {
    header["params"].push_back({{"name", p.name}, {"shape", p.value.shape()}, {"trainable", p.trainable}});
  }
  const std::string text = header.dump();

  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  out.push_back(kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& p : model.params) {
    for (double v : p.value.data()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  return out;
}

Model decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    fail(Errc::bad_magic, "not a checkpoint (expected magic 'DDNC')");
  }
  if (bytes.size() < 9) fail(Errc::truncated_payload, "checkpoint preamble is truncated");
  if (bytes[4] != kCheckpointVersion) {
    fail(Errc::version_mismatch, "checkpoint version " + std::to_string(bytes[4]) +
                                     ", this build reads version " +
                                     std::to_string(kCheckpointVersion));
  }
  const std::size_t header_len = get_u32(bytes.data() + 5);
  if (bytes.size() - 9 < header_len) fail(Errc::truncated_payload, "checkpoint header is truncated");

  Model model;
  std::vector<std::pair<std::string, nn::Shape>> declared;
  std::vector<bool> trainable;
  try {
    const auto header = json::parse(bytes.begin() + 9, bytes.begin() + 9 + static_cast<std::ptrdiff_t>(header_len));
    model.spec.arch = arch_from_name(header.at("arch_id").get<std::string>());
    model.spec.input_shape = header.at("input_shape").get<nn::Shape>();
    model.spec.num_classes = header.at("num_classes").get<std::size_t>();
    for (const auto& l : header.at("layers")) model.spec.layers.push_back(layer_from_json(l));
    for (const auto& p : header.at("params")) {
      declared.emplace_back(p.at("name").get<std::string>(), p.at("shape").get<nn::Shape>());
      trainable.push_back(p.at("trainable").get<bool>());
    }
  } catch (const json::exception& e) {
    fail(Errc::header_mismatch, std::string("checkpoint header: ") + e.what());
  } catch (const Error& e) {
    fail(Errc::header_mismatch, std::string("checkpoint header: ") + e.what());
  }

  std::vector<std::pair<std::string, nn::Shape>> expected;
  try {
    validate_spec(model.spec);
    expected = nn::param_shapes(model.spec.layers, model.spec.input_shape);
  } catch (const Error& e) {
    fail(Errc::header_mismatch, std::string("checkpoint layer list is invalid: ") + e.what());
  }
  if (expected != declared) {
    fail(Errc::header_mismatch, "checkpoint parameter shapes disagree with its layer list");
  }

  std::size_t values = 0;
  for (const auto& [name, shape] : declared) values += nn::shape_size(shape);
  const std::size_t payload = bytes.size() - 9 - header_len;
  if (payload < values * 4) {
    fail(Errc::truncated_payload, "checkpoint payload has " + std::to_string(payload) +
                                      " bytes, expected " + std::to_string(values * 4));
  }
  if (payload > values * 4) fail(Errc::header_mismatch, "checkpoint has trailing bytes");

  const std::uint8_t* p = bytes.data() + 9 + header_len;
  for (std::size_t i = 0; i < declared.size(); ++i) {
    nn::Tensor t(declared[i].second);
    for (double& v : t.data()) {
      v = static_cast<double>(std::bit_cast<float>(get_u32(p)));
      p += 4;
    }
    if (!t.all_finite()) fail(Errc::numeric, "checkpoint tensor '" + declared[i].first + "' is not finite");
    model.params.push_back({declared[i].first, std::move(t), trainable[i]});
  }
  return model;
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(model);
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(Errc::io, "cannot write checkpoint '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(Errc::io, "failed writing checkpoint '" + path.string() + "'");
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::io, "cannot open checkpoint '" + path.string() + "'");
  const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return decode_checkpoint(bytes);
}

}  // namespace ddnet::models
