#include "urs/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <json.hpp>

#include "urs/io.hpp"

namespace urs {

namespace {

constexpr char kMagic[8] = {'U', 'R', 'S', 'C', 'K', 'P', 'T', '\0'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(const std::string& in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return v;
}

nlohmann::json config_json(const PolicyConfig& c) {
  return {{"d", c.d},           {"layers", c.layers},       {"hyper_hidden", c.hyper_hidden},
          {"ff_hidden", c.ff_hidden}, {"use_xi", c.use_xi}, {"use_context", c.use_context},
          {"prior_in", c.prior_in},   {"prior_rel", c.prior_rel}, {"lambda_slots", kSignatureSize}};
}

}  // namespace

std::string checkpoint_bytes(const PolicyParams<float>& params, const std::string& meta_json) {
  nlohmann::json header;
  header["version"] = kCheckpointVersion;
  header["config"] = config_json(params.config());
  header["meta"] = nlohmann::json::parse(meta_json);
  nlohmann::json manifest = nlohmann::json::array();
  std::size_t offset = 0;
  for (std::size_t i = 0; i < params.count(); ++i) {
    const auto& t = params[i];
    manifest.push_back({{"name", params.name(i)}, {"shape", {t.rows, t.cols}}, {"dtype", "f32"}, {"offset", offset}});
    offset += t.size() * 4;
  }
  header["tensors"] = manifest;
  const std::string head = header.dump();

  std::string out(kMagic, sizeof kMagic);
  put_u32(out, static_cast<std::uint32_t>(head.size()));
  out += head;
  out.reserve(out.size() + offset);
  for (const auto& t : params.tensors())
    for (float f : t.data) put_u32(out, std::bit_cast<std::uint32_t>(f));
  return out;
}

PolicyParams<float> checkpoint_from_bytes(const std::string& bytes, std::string* meta_json) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kMagic, 8) != 0) throw CheckpointError("not a checkpoint file");
  const std::uint32_t hlen = get_u32(bytes, 8);
  if (bytes.size() < 12 + static_cast<std::size_t>(hlen)) throw CheckpointError("truncated checkpoint header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(12, hlen));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("malformed checkpoint header: ") + e.what());
  }
  if (header.value("version", -1) != kCheckpointVersion)
    throw CheckpointError("unsupported checkpoint version " + header.value("version", nlohmann::json(-1)).dump());
  const auto& c = header.at("config");
  if (c.value("lambda_slots", 0) != kSignatureSize)
    throw CheckpointError("checkpoint was built for a different problem representation width");
  PolicyConfig cfg;
  cfg.d = c.at("d");
  cfg.layers = c.at("layers");
  cfg.hyper_hidden = c.at("hyper_hidden");
  cfg.ff_hidden = c.at("ff_hidden");
  cfg.use_xi = c.at("use_xi");
  cfg.use_context = c.at("use_context");
  cfg.prior_in = c.at("prior_in");
  cfg.prior_rel = c.at("prior_rel");
  PolicyParams<float> params(cfg);

  const std::size_t base = 12 + hlen;
  const auto& manifest = header.at("tensors");
  if (manifest.size() != params.count()) throw CheckpointError("checkpoint tensor count does not match its config");
  for (const auto& entry : manifest) {
    const std::string name = entry.at("name");
    Mat<float>& t = params.at(name);
    if (entry.at("dtype") != "f32") throw CheckpointError("unsupported dtype for " + name);
    if (entry.at("shape")[0] != t.rows || entry.at("shape")[1] != t.cols)
      throw CheckpointError("shape mismatch for " + name);
    const std::size_t off = base + entry.at("offset").get<std::size_t>();
    if (off + t.size() * 4 > bytes.size()) throw CheckpointError("truncated payload for " + name);
    for (std::size_t k = 0; k < t.size(); ++k) t.data[k] = std::bit_cast<float>(get_u32(bytes, off + 4 * k));
  }
  if (meta_json) *meta_json = header.value("meta", nlohmann::json::object()).dump();
  return params;
}

void save_checkpoint(const std::filesystem::path& path, const PolicyParams<float>& params, const std::string& meta) {
  write_text_atomic(path, checkpoint_bytes(params, meta));
}

PolicyParams<float> load_checkpoint(const std::filesystem::path& path, std::string* meta_json) {
  return checkpoint_from_bytes(read_text(path), meta_json);
}

}  // namespace urs
