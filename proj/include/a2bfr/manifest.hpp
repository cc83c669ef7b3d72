#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "a2bfr/common.hpp"

namespace a2bfr {

using json = nlohmann::json;

// One JSONL manifest line describing a source/target pair on disk. tar_png is
// empty for unpaired (source-only) manifests.
struct RecordMeta {
  int64_t id = 0;
  std::string src_png;
  std::string tar_png;
  std::vector<Scalar> src_attrs;
  std::vector<Scalar> tar_attrs;
  int edited_index = -1;
  std::vector<Scalar> identity;
  uint64_t seed = 0;
  json extra;  // qc_scores and similar optional fields

  bool paired() const { return !tar_png.empty(); }

  json to_json() const {
    json j{{"id", id},
           {"src_png", src_png},
           {"tar_png", tar_png},
           {"src_attrs", src_attrs},
           {"tar_attrs", tar_attrs},
           {"edited_index", edited_index},
           {"identity", identity},
           {"seed", seed}};
    if (!extra.is_null()) {
      for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
    }
    return j;
  }

  static RecordMeta from_json(const json& j) {
    RecordMeta m;
    m.id = j.at("id").get<int64_t>();
    m.src_png = j.at("src_png").get<std::string>();
    m.tar_png = j.value("tar_png", std::string());
    m.src_attrs = j.at("src_attrs").get<std::vector<Scalar>>();
    if (j.contains("tar_attrs")) m.tar_attrs = j.at("tar_attrs").get<std::vector<Scalar>>();
    m.edited_index = j.value("edited_index", -1);
    if (j.contains("identity")) m.identity = j.at("identity").get<std::vector<Scalar>>();
    m.seed = j.value("seed", uint64_t{0});
    for (auto it = j.begin(); it != j.end(); ++it) {
      static const char* known[] = {"id",           "src_png",  "tar_png", "src_attrs",
                                    "tar_attrs",    "edited_index", "identity", "seed"};
      bool is_known = false;
      for (const char* k : known) is_known |= (it.key() == k);
      if (!is_known) m.extra[it.key()] = it.value();
    }
    return m;
  }
};

struct Manifest {
  std::filesystem::path base_dir;  // directory holding the PNGs
  std::vector<RecordMeta> records;

  size_t size() const { return records.size(); }
  bool fully_paired() const {
    for (const auto& r : records)
      if (!r.paired()) return false;
    return !records.empty();
  }
};

inline void save_manifest(const std::filesystem::path& path, const Manifest& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail_runtime("save_manifest: cannot open " + path.string());
  for (const auto& r : m.records) out << r.to_json().dump() << "\n";
  if (!out) fail_runtime("save_manifest: write failed for " + path.string());
}

inline Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail_runtime("load_manifest: cannot open " + path.string());
  Manifest m;
  m.base_dir = path.parent_path();
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded())
      fail_runtime("load_manifest: bad JSON at " + path.string() + ":" + std::to_string(line_no));
    m.records.push_back(RecordMeta::from_json(j));
  }
  return m;
}

}  // namespace a2bfr
