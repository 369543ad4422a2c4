#pragma once

#include <json.hpp>

#include <Eigen/Core>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "eq/channels.hpp"
#include "eq/errors.hpp"
#include "eq/version.hpp"

static_assert(std::endian::native == std::endian::little,
              "file formats are little-endian; add byte swapping for this host");

namespace eq::detail {

/// Round-trip decimal formatting for CSV output.
inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline void write_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

inline std::uint64_t read_u64(std::istream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw UsageError("unexpected end of file");
  return v;
}

inline void write_json_block(std::ostream& out, const nlohmann::ordered_json& j) {
  const std::string s = j.dump();
  write_u64(out, s.size());
  out.write(s.data(), std::streamsize(s.size()));
}

inline nlohmann::ordered_json read_json_block(std::istream& in) {
  const std::uint64_t n = read_u64(in);
  if (n > (1ull << 30)) throw UsageError("corrupt header length");
  std::string s(n, '\0');
  in.read(s.data(), std::streamsize(n));
  if (!in) throw UsageError("unexpected end of file in header");
  return nlohmann::ordered_json::parse(s);
}

inline void write_f32_array(std::ostream& out, const Eigen::ArrayXd& a) {
  write_u64(out, std::uint64_t(a.size()));
  std::vector<float> buf(size_t(a.size()));
  for (Eigen::Index i = 0; i < a.size(); ++i) buf[size_t(i)] = float(a[i]);
  out.write(reinterpret_cast<const char*>(buf.data()),
            std::streamsize(buf.size() * sizeof(float)));
}

inline Eigen::ArrayXd read_f32_array(std::istream& in) {
  const std::uint64_t n = read_u64(in);
  std::vector<float> buf(n);
  in.read(reinterpret_cast<char*>(buf.data()),
          std::streamsize(n * sizeof(float)));
  if (!in) throw UsageError("unexpected end of file in array");
  Eigen::ArrayXd a(Eigen::Index(n));
  for (std::uint64_t i = 0; i < n; ++i) a[Eigen::Index(i)] = buf[i];
  return a;
}

inline void write_f64_array(std::ostream& out, const Eigen::ArrayXd& a) {
  write_u64(out, std::uint64_t(a.size()));
  out.write(reinterpret_cast<const char*>(a.data()),
            std::streamsize(a.size() * Eigen::Index(sizeof(double))));
}

inline Eigen::ArrayXd read_f64_array(std::istream& in) {
  const std::uint64_t n = read_u64(in);
  Eigen::ArrayXd a(Eigen::Index(n));
  in.read(reinterpret_cast<char*>(a.data()),
          std::streamsize(n * sizeof(double)));
  if (!in) throw UsageError("unexpected end of file in array");
  return a;
}

inline nlohmann::ordered_json channel_to_json(const ChannelConfig& cfg) {
  nlohmann::ordered_json j;
  if (std::holds_alternative<ProakisBConfig>(cfg)) {
    const auto& c = std::get<ProakisBConfig>(cfg);
    j["type"] = "proakis_b";
    j["snr_db"] = c.snr_db;
    j["n_os"] = c.n_os;
    j["rc_rolloff"] = c.rc_rolloff;
    j["rc_span"] = c.rc_span;
    j["taps"] = {0.407, 0.815, 0.407};
  } else {
    const auto& c = std::get<ImddSurrogateConfig>(cfg);
    j["type"] = "imdd_surrogate";
    j["dispersion_ps_per_nm"] = c.dispersion_ps_per_nm;
    j["symbol_rate_hz"] = c.symbol_rate_hz;
    j["rrc_rolloff"] = c.rrc_rolloff;
    j["rrc_span"] = c.rrc_span;
    j["snr_db"] = c.snr_db;
    j["n_os"] = c.n_os;
    j["bias"] = c.bias;
    j["wavelength_nm"] = c.wavelength_nm;
  }
  return j;
}

/// FNV-1a over the canonical JSON dump; used as the provenance config hash.
inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

}  // namespace eq::detail
