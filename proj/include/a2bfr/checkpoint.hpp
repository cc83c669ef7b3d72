#pragma once

#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "a2bfr/attr_encoder.hpp"
#include "a2bfr/common.hpp"
#include "a2bfr/nn.hpp"
#include "a2bfr/velocity_model.hpp"

namespace a2bfr {

using json = nlohmann::json;

// Checkpoint container: magic, little-endian JSON-length + JSON metadata,
// then named float64 arrays. Keys: "kind" (attr_encoder / velocity_model /
// trainer_state), "version", "config", optional "extra".
constexpr char kCkptMagic[8] = {'A', '2', 'B', 'F', 'R', 'C', 'K', '1'};

struct Checkpoint {
  json meta;
  std::map<std::string, std::vector<Scalar>> tensors;
};

namespace detail {

inline void write_u32(std::ofstream& out, uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

inline uint32_t read_u32(std::ifstream& in) {
  uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

}  // namespace detail

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail_runtime("save_checkpoint: cannot open " + path.string());
  out.write(kCkptMagic, sizeof(kCkptMagic));
  std::string header = ck.meta.dump();
  detail::write_u32(out, static_cast<uint32_t>(header.size()));
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  detail::write_u32(out, static_cast<uint32_t>(ck.tensors.size()));
  for (const auto& [name, data] : ck.tensors) {
    detail::write_u32(out, static_cast<uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    uint64_t n = data.size();
    out.write(reinterpret_cast<const char*>(&n), sizeof(n));
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(n * sizeof(Scalar)));
  }
  if (!out) fail_runtime("save_checkpoint: write failed for " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail_runtime("load_checkpoint: cannot open " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCkptMagic, sizeof(magic)) != 0)
    fail_runtime("load_checkpoint: bad magic in " + path.string());
  uint32_t header_len = detail::read_u32(in);
  std::string header(header_len, '\0');
  in.read(header.data(), header_len);
  Checkpoint ck;
  ck.meta = json::parse(header);
  uint32_t count = detail::read_u32(in);
  for (uint32_t i = 0; i < count; ++i) {
    uint32_t name_len = detail::read_u32(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    uint64_t n = 0;
    in.read(reinterpret_cast<char*>(&n), sizeof(n));
    std::vector<Scalar> data(n);
    in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(n * sizeof(Scalar)));
    ck.tensors.emplace(std::move(name), std::move(data));
  }
  if (!in) fail_runtime("load_checkpoint: truncated file " + path.string());
  return ck;
}

// --------------------------------------------------------------------------
// Encoder / velocity model adapters.
// --------------------------------------------------------------------------

inline json encoder_config_json(const EncoderConfig& c) {
  return json{{"input_size", c.input_size}, {"in_channels", c.in_channels},
              {"base_channels", c.base_channels}, {"attr_count", c.attr_count},
              {"id_dims", c.id_dims}};
}

inline EncoderConfig encoder_config_from_json(const json& j) {
  EncoderConfig c;
  c.input_size = j.at("input_size").get<int>();
  c.in_channels = j.at("in_channels").get<int>();
  c.base_channels = j.at("base_channels").get<int>();
  c.attr_count = j.at("attr_count").get<int>();
  c.id_dims = j.at("id_dims").get<int>();
  return c;
}

inline json velocity_config_json(const VelocityConfig& c) {
  return json{{"size", c.size},           {"in_channels", c.in_channels},
              {"attr_count", c.attr_count}, {"base_channels", c.base_channels},
              {"cond_dims", c.cond_dims},  {"time_feats", c.time_feats},
              {"levels", c.levels},        {"double_conv", c.double_conv}};
}

inline VelocityConfig velocity_config_from_json(const json& j) {
  VelocityConfig c;
  c.size = j.at("size").get<int>();
  c.in_channels = j.at("in_channels").get<int>();
  c.attr_count = j.at("attr_count").get<int>();
  c.base_channels = j.at("base_channels").get<int>();
  c.cond_dims = j.at("cond_dims").get<int>();
  c.time_feats = j.at("time_feats").get<int>();
  c.levels = j.at("levels").get<int>();
  c.double_conv = j.at("double_conv").get<bool>();
  return c;
}

inline void save_encoder(const std::filesystem::path& path, AttrEncoder& enc) {
  Checkpoint ck;
  ck.meta = json{{"kind", "attr_encoder"},
                 {"version", 1},
                 {"config", encoder_config_json(enc.config())},
                 {"extra", json{{"percep_scale", enc.percep_scale}, {"trained", enc.trained}}}};
  for (auto* p : enc.params()) ck.tensors[p->name] = p->value;
  save_checkpoint(path, ck);
}

inline AttrEncoder load_encoder(const std::filesystem::path& path) {
  Checkpoint ck = load_checkpoint(path);
  require_runtime(ck.meta.value("kind", "") == "attr_encoder",
                  "load_encoder: " + path.string() + " is not an attr_encoder checkpoint");
  AttrEncoder enc(encoder_config_from_json(ck.meta.at("config")), /*seed=*/0);
  for (auto* p : enc.params()) {
    auto it = ck.tensors.find(p->name);
    require_runtime(it != ck.tensors.end(), "load_encoder: missing tensor " + p->name);
    require_runtime(it->second.size() == p->value.size(),
                    "load_encoder: shape mismatch for " + p->name);
    p->value = it->second;
  }
  if (ck.meta.contains("extra")) {
    const auto& extra = ck.meta["extra"];
    if (extra.contains("percep_scale")) enc.percep_scale = extra["percep_scale"].get<Scalar>();
    enc.trained = extra.value("trained", false);
  }
  return enc;
}

inline void save_velocity_model(const std::filesystem::path& path, VelocityModel& model,
                                const json& extra = json::object()) {
  Checkpoint ck;
  ck.meta = json{{"kind", "velocity_model"},
                 {"version", 1},
                 {"config", velocity_config_json(model.config())},
                 {"extra", extra}};
  for (auto* p : model.params()) ck.tensors[p->name] = p->value;
  save_checkpoint(path, ck);
}

inline VelocityModel load_velocity_model(const std::filesystem::path& path,
                                         json* extra_out = nullptr) {
  Checkpoint ck = load_checkpoint(path);
  require_runtime(ck.meta.value("kind", "") == "velocity_model",
                  "load_velocity_model: " + path.string() + " is not a velocity_model checkpoint");
  VelocityModel model(velocity_config_from_json(ck.meta.at("config")), /*seed=*/0);
  for (auto* p : model.params()) {
    auto it = ck.tensors.find(p->name);
    require_runtime(it != ck.tensors.end(), "load_velocity_model: missing tensor " + p->name);
    require_runtime(it->second.size() == p->value.size(),
                    "load_velocity_model: shape mismatch for " + p->name);
    p->value = it->second;
  }
  if (extra_out && ck.meta.contains("extra")) *extra_out = ck.meta["extra"];
  return model;
}

}  // namespace a2bfr
