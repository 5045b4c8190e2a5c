#include "ptlab/checkpoint.hpp"

#include <bit>
#include <fstream>

#include <json.hpp>

namespace ptlab {

static_assert(std::endian::native == std::endian::little, "checkpoint blobs are little-endian");

using nlohmann::json;

namespace {

json config_json(const ModelConfig& c) {
  return json{{"vocab_size", c.vocab_size}, {"context_size", c.context_size}, {"d_embed", c.d_embed},
              {"d_ffn", c.d_ffn},           {"n_layer", c.n_layer},           {"n_head", c.n_head},
              {"activation", c.activation}};
}

ModelConfig config_from(const json& j) {
  ModelConfig c;
  c.vocab_size = j.at("vocab_size").get<int64_t>();
  c.context_size = j.at("context_size").get<int64_t>();
  c.d_embed = j.at("d_embed").get<int64_t>();
  c.d_ffn = j.at("d_ffn").get<int64_t>();
  c.n_layer = j.at("n_layer").get<int>();
  c.n_head = j.at("n_head").get<int>();
  c.activation = j.value("activation", "gelu");
  c.validate();
  return c;
}

}  // namespace

std::string model_config_to_json(const ModelConfig& config) { return config_json(config).dump(2); }

ModelConfig model_config_from_json(const std::string& json_text) { return config_from(json::parse(json_text)); }

void save_checkpoint(const std::filesystem::path& dir, const ModelParams& params, const CheckpointMeta& meta) {
  std::filesystem::create_directories(dir);
  json manifest;
  manifest["config"] = config_json(params.config);
  manifest["dtype"] = "f32le";
  manifest["tokens_seen"] = meta.tokens_seen;
  manifest["step"] = meta.step;
  manifest["seed"] = meta.seed;
  json plist = json::array();
  uint64_t offset = 0;
  for (const auto& [name, t] : params.named) {
    plist.push_back({{"name", name}, {"shape", t.shape}, {"offset", offset}});
    offset += static_cast<uint64_t>(t.numel()) * sizeof(float);
  }
  manifest["params"] = std::move(plist);

  {
    std::ofstream out(dir / "params.bin", std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("checkpoint: cannot write " + (dir / "params.bin").string());
    for (const auto& [name, t] : params.named)
      out.write(reinterpret_cast<const char*>(t.data.data()), static_cast<std::streamsize>(t.data.size() * sizeof(float)));
    if (!out) throw std::runtime_error("checkpoint: write failed for " + (dir / "params.bin").string());
  }
  {
    std::ofstream out(dir / "manifest.json", std::ios::trunc);
    if (!out) throw std::runtime_error("checkpoint: cannot write " + (dir / "manifest.json").string());
    out << manifest.dump(2) << "\n";
  }
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream mf(dir / "manifest.json");
  if (!mf) throw std::runtime_error("checkpoint: cannot read " + (dir / "manifest.json").string());
  json manifest = json::parse(mf);

  LoadedCheckpoint lc;
  lc.params.config = config_from(manifest.at("config"));
  lc.meta.tokens_seen = manifest.at("tokens_seen").get<uint64_t>();
  lc.meta.step = manifest.at("step").get<int64_t>();
  lc.meta.seed = manifest.at("seed").get<uint64_t>();

  std::ifstream blob(dir / "params.bin", std::ios::binary);
  if (!blob) throw std::runtime_error("checkpoint: cannot read " + (dir / "params.bin").string());

  for (const auto& pj : manifest.at("params")) {
    const std::string name = pj.at("name").get<std::string>();
    const std::vector<int64_t> shape = pj.at("shape").get<std::vector<int64_t>>();
    const uint64_t offset = pj.at("offset").get<uint64_t>();
    TensorF t(shape);
    blob.seekg(static_cast<std::streamoff>(offset));
    blob.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(t.data.size() * sizeof(float)));
    if (!blob)
      throw std::runtime_error("checkpoint: truncated params.bin reading " + name + " in " + dir.string());
    lc.params.named.emplace_back(name, std::move(t));
  }
  return lc;
}

}  // namespace ptlab
