#include "manifest.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <ctime>
#include <fstream>
#include <memory>

#include "io_util.hpp"
#include "sparsedet/errors.hpp"

namespace sparsedet::cli {

std::string tool_version() { return SPARSEDET_VERSION; }

std::string sha256_file(const std::filesystem::path& path) {
  const std::string bytes = io::read_file(path);
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1) {
    throw FormatError("sha256 failed for " + path.string());
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xF]);
  }
  return out;
}

std::string relative_reference(const std::filesystem::path& target, const std::filesystem::path& artifact) {
  const auto t = std::filesystem::absolute(target).lexically_normal();
  const auto dir = std::filesystem::absolute(artifact).lexically_normal().parent_path();
  const auto rel = t.lexically_relative(dir);
  return rel.empty() ? t.generic_string() : rel.generic_string();
}

Manifest::Manifest(std::string command, std::filesystem::path path)
    : command_(std::move(command)), path_(std::move(path)) {}

std::string Manifest::reference_from(const std::filesystem::path& artifact) const {
  return relative_reference(path_, artifact);
}

void Manifest::add_input(const std::filesystem::path& path, const std::string& role) {
  inputs_.push_back({{"role", role}, {"path", path.generic_string()}, {"sha256", sha256_file(path)}});
}

void Manifest::add_output(const std::filesystem::path& path, const std::string& role) {
  outputs_.push_back({{"role", role}, {"path", path.generic_string()}, {"sha256", sha256_file(path)}});
}

void Manifest::write() const {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm utc{};
  gmtime_r(&now, &utc);
  char stamp[32];
  std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%SZ", &utc);

  const Json j{{"tool", "sparsedet"},   {"version", tool_version()}, {"command", command_},
               {"config", config_},      {"seeds", seeds_},           {"inputs", inputs_},
               {"outputs", outputs_},    {"created_utc", stamp}};
  io::write_file(path_, j.dump(2) + "\n");
}

}  // namespace sparsedet::cli
