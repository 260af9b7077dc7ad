#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "edgetel/http.hpp"
#include "edgetel/platform.hpp"

namespace edgetel {

struct ManifestEntry {
  std::string digest;
  std::uint64_t size = 0;

  bool operator==(const ManifestEntry&) const = default;
};

// Directory holding <model_id>.bin blobs and manifest.json
// ({"<model_id>": {"digest": ..., "size": ...}}).
class ModelStore {
 public:
  // Throws StorageError when the manifest is missing or unreadable,
  // ConfigError when it is malformed.
  explicit ModelStore(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }
  const std::map<std::string, ManifestEntry>& manifest() const { return manifest_; }
  std::optional<std::string> digest(const std::string& model_id) const;

  // Blob plus manifest digest; nullopt for ids outside the manifest.
  std::optional<ModelBlob> get(const std::string& model_id) const;

  // Fault shim: serves every blob with its second half cut off.
  void set_truncate_blobs(bool on) { truncate_.store(on); }

  // Writes blobs and a matching manifest for the given profiles.
  static void write(const std::filesystem::path& root, const std::vector<ModelProfile>& profiles);

 private:
  std::filesystem::path root_;
  std::map<std::string, ManifestEntry> manifest_;
  std::atomic<bool> truncate_{false};
};

}  // namespace edgetel
