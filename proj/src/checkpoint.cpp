#include "conmil/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include <json.hpp>

namespace conmil {
namespace mil {

namespace {

constexpr char kMagic[] = "CONMIL1";
constexpr std::size_t kMagicLen = 7;
constexpr int kVersion = 1;

void write_u64_le(std::ostream& os, std::uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(buf), 8);
}

std::uint64_t read_u64_le(std::istream& is) {
  unsigned char buf[8];
  is.read(reinterpret_cast<char*>(buf), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return v;
}

void write_f32_le(std::ostream& os, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  unsigned char buf[4];
  for (int i = 0; i < 4; ++i) buf[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(buf), 4);
}

float read_f32_le(std::istream& is) {
  unsigned char buf[4];
  is.read(reinterpret_cast<char*>(buf), 4);
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(buf[i]) << (8 * i);
  float f;
  std::memcpy(&f, &bits, 4);
  return f;
}

}  // namespace

void save_checkpoint(const MilModel& model, const std::filesystem::path& path) {
  const ModelConfig& cfg = model.config();
  nlohmann::json header;
  header["version"] = kVersion;
  header["config"] = {{"num_classes", cfg.num_classes},
                      {"embed_dim", cfg.embed_dim},
                      {"input_channels", cfg.input_channels},
                      {"hidden_channels", cfg.hidden_channels},
                      {"kernel_width", cfg.kernel_width},
                      {"pooling", to_string(cfg.pooling)},
                      {"pos_encoding", to_string(cfg.pos_encoding)}};
  header["seed"] = cfg.seed;
  header["epoch"] = model.epoch;

  nlohmann::json tensors = nlohmann::json::object();
  std::uint64_t offset = 0;
  for (const auto& [name, node] : model.params()) {
    tensors[name] = {{"shape", node->value.shape()},
                     {"offset", offset},
                     {"count", node->value.size()}};
    offset += 4 * node->value.size();
  }
  header["tensors"] = tensors;

  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
  os.write(kMagic, kMagicLen);
  const std::string header_str = header.dump();
  write_u64_le(os, header_str.size());
  os.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  for (const auto& [name, node] : model.params())
    for (double v : node->value.data()) write_f32_le(os, static_cast<float>(v));
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

MilModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path.string());
  char magic[kMagicLen];
  is.read(magic, kMagicLen);
  if (!is || std::memcmp(magic, kMagic, kMagicLen) != 0)
    throw CheckpointError("not a model checkpoint: " + path.string());
  const std::uint64_t header_len = read_u64_le(is);
  std::string header_str(header_len, '\0');
  is.read(header_str.data(), static_cast<std::streamsize>(header_len));
  if (!is) throw CheckpointError("truncated checkpoint header: " + path.string());

  nlohmann::json header = nlohmann::json::parse(header_str, nullptr, false);
  if (header.is_discarded()) throw CheckpointError("malformed checkpoint header");
  if (!header.contains("version") || header["version"].get<int>() != kVersion)
    throw CheckpointError("unsupported checkpoint version in " + path.string());

  ModelConfig cfg;
  const auto& jc = header.at("config");
  cfg.num_classes = jc.at("num_classes").get<std::size_t>();
  cfg.embed_dim = jc.at("embed_dim").get<std::size_t>();
  cfg.input_channels = jc.at("input_channels").get<std::size_t>();
  cfg.hidden_channels = jc.at("hidden_channels").get<std::size_t>();
  cfg.kernel_width = jc.at("kernel_width").get<std::size_t>();
  cfg.pooling = pooling_from_string(jc.at("pooling").get<std::string>());
  cfg.pos_encoding = pos_encoding_from_string(jc.at("pos_encoding").get<std::string>());
  cfg.seed = header.at("seed").get<std::uint64_t>();

  MilModel model(cfg);
  model.epoch = header.at("epoch").get<std::size_t>();

  const std::streampos blob_start = is.tellg();
  for (const auto& [name, meta] : header.at("tensors").items()) {
    const auto shape = meta.at("shape").get<std::vector<std::size_t>>();
    const auto count = meta.at("count").get<std::uint64_t>();
    const auto offset = meta.at("offset").get<std::uint64_t>();
    is.seekg(blob_start + static_cast<std::streamoff>(offset));
    NdArray v(shape);
    if (v.size() != count) throw CheckpointError("tensor size mismatch for " + name);
    for (std::size_t i = 0; i < count; ++i) v[i] = static_cast<double>(read_f32_le(is));
    if (!is) throw CheckpointError("truncated tensor data for " + name);
    model.set_param_value(name, v);
  }
  model.mark_trained();
  return model;
}

}  // namespace mil
}  // namespace conmil
