#include "edgetel/model_store.hpp"

#include <fstream>
#include <sstream>

#include "edgetel/error.hpp"
#include "edgetel/sha256.hpp"
#include "json_util.hpp"

namespace edgetel {

namespace fs = std::filesystem;
using detail::json;

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw StorageError(p.string(), "cannot open");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& data) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << data;
  if (!out) throw StorageError(p.string(), "write failed");
}

bool safe_id(const std::string& id) {
  if (id.empty() || id.front() == '.') return false;
  for (char c : id) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                    c == '_' || c == '-' || c == '.';
    if (!ok) return false;
  }
  return true;
}

}  // namespace

ModelStore::ModelStore(fs::path root) : root_(std::move(root)) {
  const fs::path mpath = root_ / "manifest.json";
  json j;
  try {
    j = detail::parse_json(read_file(mpath));
  } catch (const ParseError& e) {
    throw ConfigError(mpath.string(), e.what());
  }
  if (!j.is_object()) throw ConfigError(mpath.string(), "expected an object");
  for (const auto& [id, entry] : j.items()) {
    if (!safe_id(id)) throw ConfigError(mpath.string(), "bad model id '" + id + "'");
    try {
      detail::check_keys(entry, id, {"digest", "size"});
      ManifestEntry e{detail::get_string(entry, id, "digest"), detail::get_u64(entry, id, "size")};
      if (!is_sha256_hex(e.digest)) throw ConfigError(id + ".digest", "not a sha256 hex digest");
      manifest_.emplace(id, std::move(e));
    } catch (const SchemaError& e) {
      throw ConfigError(e.field(), e.what());
    } catch (const ValidationError& e) {
      throw ConfigError(e.field(), e.what());
    }
  }
}

std::optional<std::string> ModelStore::digest(const std::string& model_id) const {
  auto it = manifest_.find(model_id);
  if (it == manifest_.end()) return std::nullopt;
  return it->second.digest;
}

std::optional<ModelBlob> ModelStore::get(const std::string& model_id) const {
  auto it = manifest_.find(model_id);
  if (it == manifest_.end()) return std::nullopt;
  ModelBlob b{read_file(root_ / (model_id + ".bin")), it->second.digest};
  if (truncate_.load()) b.blob.resize(b.blob.size() / 2);
  return b;
}

void ModelStore::write(const fs::path& root, const std::vector<ModelProfile>& profiles) {
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw StorageError(root.string(), ec.message());
  json manifest = json::object();
  for (const ModelProfile& p : profiles) {
    if (!safe_id(p.model_id)) throw ConfigError("model_id", "bad model id '" + p.model_id + "'");
    const std::string blob = synthetic_model_blob(p.model_id, p.artifact_size_bytes);
    write_file(root / (p.model_id + ".bin"), blob);
    manifest[p.model_id] = {{"digest", sha256_hex(blob)}, {"size", blob.size()}};
  }
  write_file(root / "manifest.json", manifest.dump(2) + "\n");
}

}  // namespace edgetel
