#include "mhnet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace mhnet {

using json = nlohmann::ordered_json;

namespace {

constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

int decode_char(char c) {
  if (c >= 'A' && c <= 'Z') return c - 'A';
  if (c >= 'a' && c <= 'z') return c - 'a' + 26;
  if (c >= '0' && c <= '9') return c - '0' + 52;
  if (c == '+') return 62;
  if (c == '/') return 63;
  return -1;
}

std::vector<std::uint8_t> pack_floats(const std::vector<double>& values) {
  std::vector<std::uint8_t> bytes(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(values[i]));
    for (int b = 0; b < 4; ++b) bytes[i * 4 + b] = static_cast<std::uint8_t>(bits >> (8 * b));
  }
  return bytes;
}

std::vector<double> unpack_floats(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() % 4 != 0) throw Error("checkpoint: weight payload is not a whole number of floats");
  std::vector<double> out(bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(bytes[i * 4 + b]) << (8 * b);
    out[i] = static_cast<double>(std::bit_cast<float>(bits));
  }
  return out;
}

}  // namespace

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += kAlphabet[(v >> 6) & 63];
    out += kAlphabet[v & 63];
  }
  if (i + 1 == bytes.size()) {
    const std::uint32_t v = bytes[i] << 16;
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += "==";
  } else if (i + 2 == bytes.size()) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8);
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += kAlphabet[(v >> 6) & 63];
    out += '=';
  }
  return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) throw Error("base64: length is not a multiple of 4");
  std::vector<std::uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    int v[4];
    int pad = 0;
    for (int k = 0; k < 4; ++k) {
      const char c = text[i + k];
      if (c == '=' && i + 4 == text.size() && k >= 2) {
        v[k] = 0;
        ++pad;
      } else {
        if (pad) throw Error("base64: data after padding");
        v[k] = decode_char(c);
        if (v[k] < 0) throw Error("base64: invalid character");
      }
    }
    const std::uint32_t word = (v[0] << 18) | (v[1] << 12) | (v[2] << 6) | v[3];
    out.push_back(static_cast<std::uint8_t>(word >> 16));
    if (pad < 2) out.push_back(static_cast<std::uint8_t>(word >> 8));
    if (pad < 1) out.push_back(static_cast<std::uint8_t>(word));
  }
  return out;
}

json checkpoint_to_json(const Checkpoint& ckpt) {
  json j;
  j["format_version"] = ckpt.format_version;
  j["kind"] = ckpt.kind;
  j["config"] = ckpt.config;
  json weights = json::object();
  for (const auto& [name, t] : ckpt.params) {
    json w;
    w["rows"] = t.rows;
    w["cols"] = t.cols;
    w["data"] = base64_encode(pack_floats(t.data));
    weights[name] = std::move(w);
  }
  j["weights"] = std::move(weights);
  j["rng_seed"] = ckpt.rng_seed;
  j["step"] = ckpt.step;
  return j;
}

Checkpoint checkpoint_from_json(const json& j) {
  Checkpoint c;
  c.format_version = j.at("format_version").get<int>();
  if (c.format_version != kCheckpointFormatVersion) {
    throw Error("checkpoint: unsupported format_version " + std::to_string(c.format_version));
  }
  c.kind = j.at("kind").get<std::string>();
  c.config = j.at("config");
  for (const auto& [name, w] : j.at("weights").items()) {
    auto& t = c.params.add(name, w.at("rows").get<std::size_t>(), w.at("cols").get<std::size_t>());
    auto values = unpack_floats(base64_decode(w.at("data").get<std::string>()));
    if (values.size() != t.size()) throw Error("checkpoint: weight " + name + " has the wrong size");
    t.data = std::move(values);
  }
  c.rng_seed = j.at("rng_seed").get<std::uint64_t>();
  c.step = j.at("step").get<long long>();
  return c;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint " + path);
  out << checkpoint_to_json(ckpt).dump() << '\n';
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open checkpoint " + path);
  try {
    return checkpoint_from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw Error(path + ": " + e.what());
  }
}

json to_json(const DepressionModelConfig& c) {
  return {{"embed_dim", c.embed_dim},         {"conv_window", c.conv_window},
          {"filters", c.filters},             {"merge_window", c.merge_window},
          {"merge_stride", c.merge_stride},   {"merge_filters", c.merge_filters},
          {"dense", c.dense},                 {"dropout", c.dropout},
          {"classes", c.classes}};
}

DepressionModelConfig depression_config_from_json(const json& j) {
  DepressionModelConfig c;
  c.embed_dim = j.at("embed_dim").get<std::size_t>();
  c.conv_window = j.at("conv_window").get<std::size_t>();
  c.filters = j.at("filters").get<std::size_t>();
  c.merge_window = j.at("merge_window").get<std::size_t>();
  c.merge_stride = j.at("merge_stride").get<std::size_t>();
  c.merge_filters = j.at("merge_filters").get<std::size_t>();
  c.dense = j.at("dense").get<std::vector<std::size_t>>();
  c.dropout = j.at("dropout").get<double>();
  c.classes = j.at("classes").get<std::size_t>();
  c.validate();
  return c;
}

json to_json(const RiskModelConfig& c) {
  return {{"variant", std::string(to_string(c.variant))},
          {"sentence_dim", c.sentence_dim},
          {"conv_window", c.conv_window},
          {"filters", c.filters},
          {"pool_len", c.pool_len},
          {"dense", c.dense},
          {"dropout", c.dropout},
          {"margin", c.margin},
          {"max_sentences", c.max_sentences},
          {"metric_dim", c.metric_dim}};
}

RiskModelConfig risk_config_from_json(const json& j) {
  RiskModelConfig c;
  c.variant = parse_risk_variant(j.at("variant").get<std::string>());
  c.sentence_dim = j.at("sentence_dim").get<std::size_t>();
  c.conv_window = j.at("conv_window").get<std::size_t>();
  c.filters = j.at("filters").get<std::size_t>();
  c.pool_len = j.at("pool_len").get<std::size_t>();
  c.dense = j.at("dense").get<std::vector<std::size_t>>();
  c.dropout = j.at("dropout").get<double>();
  c.margin = j.at("margin").get<double>();
  c.max_sentences = j.at("max_sentences").get<std::size_t>();
  c.metric_dim = j.at("metric_dim").get<std::size_t>();
  c.validate();
  return c;
}

}  // namespace mhnet
