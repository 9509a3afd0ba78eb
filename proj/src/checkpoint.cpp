#include "nkcme/error.hpp"
#include "nkcme/net.hpp"

#include <json.hpp>

#include <bit>
#include <cstring>
#include <fstream>

namespace nkcme::net {

namespace {

std::string head_name(HeadKind k) {
  switch (k) {
    case HeadKind::linear: return "linear";
    case HeadKind::relu: return "relu";
    case HeadKind::softmax_per_group: return "softmax_per_group";
  }
  return "linear";
}

HeadKind parse_head(const std::string& s) {
  if (s == "linear") return HeadKind::linear;
  if (s == "relu") return HeadKind::relu;
  if (s == "softmax_per_group") return HeadKind::softmax_per_group;
  throw IoError("unknown head mode in checkpoint header: " + s);
}

void write_le_double(std::ostream& os, double d) {
  auto bits = std::bit_cast<std::uint64_t>(d);
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xffu);
  os.write(reinterpret_cast<const char*>(buf), 8);
}

double read_le_double(std::istream& is) {
  unsigned char buf[8];
  is.read(reinterpret_cast<char*>(buf), 8);
  if (!is) throw IoError("checkpoint parameter file is truncated");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

}  // namespace

void save_checkpoint(const Mlp& net, const std::string& bin_path, const std::string& json_path) {
  std::ofstream bin(bin_path, std::ios::binary | std::ios::trunc);
  if (!bin) throw IoError("cannot open " + bin_path + " for writing");
  for (const auto& layer : net.layers()) {
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i) write_le_double(bin, layer.weight.data()[i]);
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) write_le_double(bin, layer.bias[i]);
  }
  if (!bin) throw IoError("failed writing " + bin_path);

  nlohmann::ordered_json header;
  header["format"] = "nkcme-mlp";
  header["dtype"] = "float64";
  header["byte_order"] = "little";
  header["weight_order"] = "column_major";
  header["layer_sizes"] = net.layer_sizes();
  header["head"] = head_name(net.head().kind);
  header["group_size"] = net.head().group_size;
  header["spectral_norm_layers"] = net.spectral_norm_layers();
  header["seed"] = net.seed();
  header["parameter_count"] = net.parameter_count();
  std::ofstream js(json_path, std::ios::trunc);
  if (!js) throw IoError("cannot open " + json_path + " for writing");
  js << header.dump(2) << '\n';
  if (!js) throw IoError("failed writing " + json_path);
}

Mlp load_checkpoint(const std::string& bin_path, const std::string& json_path) {
  std::ifstream js(json_path);
  if (!js) throw IoError("cannot open checkpoint header " + json_path);
  nlohmann::json header;
  try {
    js >> header;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed checkpoint header " + json_path + ": " + e.what());
  }
  Head head{parse_head(header.at("head").get<std::string>()), header.value("group_size", 0)};
  Mlp net(header.at("layer_sizes").get<std::vector<int>>(), head, header.value("seed", std::uint64_t{0}),
          header.value("spectral_norm_layers", std::vector<int>{}));
  if (header.value("parameter_count", net.parameter_count()) != net.parameter_count())
    throw IoError("checkpoint parameter count does not match its layer sizes");

  std::ifstream bin(bin_path, std::ios::binary);
  if (!bin) throw IoError("cannot open checkpoint parameters " + bin_path);
  for (auto& layer : net.layers()) {
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i) layer.weight.data()[i] = read_le_double(bin);
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias[i] = read_le_double(bin);
  }
  if (bin.peek() != std::char_traits<char>::eof()) throw IoError("checkpoint parameter file has trailing data");
  return net;
}

}  // namespace nkcme::net
