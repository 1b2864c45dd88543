#include <openssl/evp.h>

#include <array>
#include <fstream>
#include <json.hpp>
#include <memory>

#include "netflow/cli.hpp"
#include "netflow/io.hpp"

namespace netflow::cli {

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string() + " for hashing");
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw Error("SHA-256 init failed");
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    const auto got = in.gcount();
    if (got > 0 && EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(got)) != 1)
      throw Error("SHA-256 update failed");
  }
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (EVP_DigestFinal_ex(ctx.get(), digest.data(), &len) != 1) throw Error("SHA-256 final failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 15]);
  }
  return out;
}

void write_manifest(const std::filesystem::path& dir, const RunConfig& config, std::span<const std::string> files,
                    int exit_code, const std::string& message) {
  nlohmann::ordered_json j;
  j["command"] = config.command;
  j["status"] = exit_code == kOk ? "ok" : "failed";
  j["exit_code"] = exit_code;
  if (!message.empty()) j["message"] = message;
  j["seed"] = config.seed;
  auto& list = j["files"] = nlohmann::ordered_json::array();
  for (const auto& name : files) {
    const auto path = dir / name;
    nlohmann::ordered_json entry;
    entry["path"] = name;
    std::error_code ec;
    if (std::filesystem::exists(path, ec)) {
      entry["sha256"] = sha256_file(path);
      entry["bytes"] = std::filesystem::file_size(path);
    } else {
      entry["missing"] = true;
    }
    list.push_back(entry);
  }
  std::ofstream out(dir / "manifest.json");
  if (!out) throw Error("cannot write manifest in " + dir.string());
  out << j.dump(2) << '\n';
}

}  // namespace netflow::cli
