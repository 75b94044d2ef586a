#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "config_json.hpp"

namespace sparsedet::cli {

// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

// Path of `target` as seen from the directory holding `artifact`, so that
// artifacts keep pointing at their manifest when a run directory is moved.
std::string relative_reference(const std::filesystem::path& target, const std::filesystem::path& artifact);

class Manifest {
 public:
  Manifest(std::string command, std::filesystem::path path);

  const std::filesystem::path& path() const { return path_; }
  // Reference to this manifest for an artifact written at `artifact`.
  std::string reference_from(const std::filesystem::path& artifact) const;

  void set_config(Json config) { config_ = std::move(config); }
  void add_seed(std::uint64_t seed) { seeds_.push_back(seed); }
  void add_input(const std::filesystem::path& path, const std::string& role);
  void add_output(const std::filesystem::path& path, const std::string& role);

  // Writes the manifest (the only file carrying a timestamp).
  void write() const;

 private:
  std::string command_;
  std::filesystem::path path_;
  Json config_;
  std::vector<std::uint64_t> seeds_;
  Json inputs_ = Json::array();
  Json outputs_ = Json::array();
};

std::string tool_version();

}  // namespace sparsedet::cli
