#include "run_record.hpp"

#include <openssl/evp.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <memory>

#include "mmsift/version.hpp"

namespace mmsift::cli {

using nlohmann::json;

std::optional<std::string> sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) return std::nullopt;
  std::array<char, 1 << 16> buf;
  while (in) {
    in.read(buf.data(), buf.size());
    if (in.gcount() > 0 && EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount())) != 1)
      return std::nullopt;
  }
  if (in.bad()) return std::nullopt;
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest;
  unsigned int len = 0;
  if (EVP_DigestFinal_ex(ctx.get(), digest.data(), &len) != 1) return std::nullopt;
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) {
    char b[3];
    std::snprintf(b, sizeof b, "%02x", digest[i]);
    hex += b;
  }
  return hex;
}

std::string run_record_json(const RunRecord& r) {
  json inputs = json::array();
  for (const auto& p : r.inputs) {
    const auto digest = sha256_file(p);
    inputs.push_back({{"path", p.string()}, {"sha256", digest ? json(*digest) : json(nullptr)}});
  }
  json outputs = json::array();
  for (const auto& p : r.outputs) outputs.push_back(p.string());

  json config;
  try {
    config = json::parse(r.config_json);
  } catch (const json::parse_error&) {
    config = r.config_json;
  }

  const json doc = {
      {"tool", "mmsift"},
      {"version", kVersion},
      {"command", r.command},
      {"argv", r.argv},
      {"jobs", r.jobs},
      {"status", r.ok ? "ok" : "failed"},
      {"failed_stage", r.ok ? json(nullptr) : json(r.stage)},
      {"error", r.error_kind ? json{{"kind", to_string(*r.error_kind)}, {"message", r.error_message}} : json(nullptr)},
      {"exit_code", r.exit_code},
      {"config", std::move(config)},
      {"inputs", std::move(inputs)},
      {"outputs", std::move(outputs)},
  };
  return doc.dump(2) + "\n";
}

void write_run_record(const RunRecord& record, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out << run_record_json(record);
  if (!out) fail(ErrorKind::Io, "failed writing " + path.string());
}

}  // namespace mmsift::cli
