#include "manifest.hpp"

#include <cstdio>
#include <fstream>
#include <memory>
#include <vector>

#include <openssl/evp.h>

#include "fsl/error.hpp"

#ifndef FSL_VERSION
#define FSL_VERSION "unknown"
#endif

namespace fslrun {

namespace {

// Not CRC32: the binary formats end with their own CRC, which makes the CRC of
// any intact file the same constant.
std::string sha256_of_file(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw fsl::IoError("cannot open " + file.string());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) {
    throw fsl::Error("sha256 unavailable");
  }
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), digest, &len);
  std::string hex;
  char byte[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(byte, sizeof byte, "%02x", digest[i]);
    hex += byte;
  }
  return hex;
}

nlohmann::ordered_json file_entry(const std::filesystem::path& file) {
  return {{"path", file.string()},
          {"bytes", std::filesystem::file_size(file)},
          {"sha256", sha256_of_file(file)}};
}

}  // namespace

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

Manifest::Manifest(std::filesystem::path path, std::string_view command, const RunConfig& config)
    : path_(std::move(path)), start_(std::chrono::steady_clock::now()) {
  doc_["manifest_version"] = kManifestVersion;
  doc_["tool"] = "fsl";
  doc_["version"] = FSL_VERSION;
  doc_["command"] = command;
  doc_["status"] = "running";
  doc_["config"] = serialize_config(config);
  doc_["seeds"] = nlohmann::ordered_json::object();
  doc_["seeds"]["master"] = config.seed;
  doc_["inputs"] = nlohmann::ordered_json::array();
  doc_["outputs"] = nlohmann::ordered_json::array();
  doc_["timings"] = nlohmann::ordered_json::object();
  doc_["details"] = nlohmann::ordered_json::object();
}

void Manifest::seed(std::string_view label, std::uint64_t value) {
  doc_["seeds"][std::string(label)] = value;
}

void Manifest::input(const std::filesystem::path& file) { doc_["inputs"].push_back(file_entry(file)); }

void Manifest::output(const std::filesystem::path& file) {
  doc_["outputs"].push_back(file_entry(file));
}

void Manifest::timing(std::string_view label, double seconds) {
  doc_["timings"][std::string(label)] = seconds;
}

void Manifest::begin() { write(); }

void Manifest::finish() {
  doc_["status"] = "ok";
  doc_["timings"]["total"] = seconds_since(start_);
  write();
}

void Manifest::fail(std::string_view message) {
  doc_["status"] = "failed";
  doc_["error"] = message;
  doc_["timings"]["total"] = seconds_since(start_);
  write();
}

void Manifest::write() const {
  std::ofstream out(path_, std::ios::binary | std::ios::trunc);
  if (!out) throw fsl::IoError("cannot write manifest " + path_.string());
  out << doc_.dump(2) << '\n';
  if (!out) throw fsl::IoError("failed writing manifest " + path_.string());
}

}  // namespace fslrun
