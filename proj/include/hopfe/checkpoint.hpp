#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hopfe/errors.hpp"
#include "hopfe/model.hpp"

// Binary checkpoint:
//   "HOPFE1\n"
//   one-line JSON header {"k", "H", "counts": {"entities", "relations"}, "variant", "matching"}
//   "\n"
//   little-endian float64 tables: entity points, entity phases, relation
//   quaternions, relation phase offsets.
namespace hopfe {

inline constexpr std::string_view kCheckpointMagic = "HOPFE1\n";

struct Checkpoint {
  ModelConfig config;
  ModelParams params;
};

namespace detail {

inline void write_doubles(std::ostream& out, const std::vector<double>& values) {
  std::vector<char> bytes(values.size() * 8);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto bits = std::bit_cast<std::uint64_t>(values[i]);
    for (int b = 0; b < 8; ++b) bytes[8 * i + b] = static_cast<char>((bits >> (8 * b)) & 0xffu);
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline void read_doubles(std::istream& in, std::vector<double>& values, const std::string& source) {
  std::vector<unsigned char> bytes(values.size() * 8);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) {
    throw ParseError(source, 0, "truncated parameter tables");
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[8 * i + b]) << (8 * b);
    values[i] = std::bit_cast<double>(bits);
  }
}

}  // namespace detail

inline void write_checkpoint(std::ostream& out, const ModelConfig& cfg, const ModelParams& params) {
  const nlohmann::json header = {
      {"k", params.dim()},
      {"H", params.heads()},
      {"counts", {{"entities", params.num_entities()}, {"relations", params.num_relations()}}},
      {"variant", to_string(cfg.variant)},
      {"matching", to_string(cfg.matching)},
  };
  out << kCheckpointMagic << header.dump() << '\n';
  params.tables.for_each_table([&](const std::vector<double>& t) { detail::write_doubles(out, t); });
  if (!out) throw IoError("failed writing checkpoint");
}

inline void save_checkpoint(const std::filesystem::path& path, const ModelConfig& cfg, const ModelParams& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_checkpoint(out, cfg, params);
}

// Restores the parameters and the scoring config (dim, heads, variant,
// matching). Margin and temperature are training settings and keep defaults.
inline Checkpoint read_checkpoint(std::istream& in, const std::string& source = "checkpoint") {
  std::string magic(kCheckpointMagic.size(), '\0');
  in.read(magic.data(), static_cast<std::streamsize>(magic.size()));
  if (magic != kCheckpointMagic) throw ParseError(source, 0, "bad magic, not a HOPFE1 checkpoint");
  std::string line;
  if (!std::getline(in, line)) throw ParseError(source, 2, "missing header");
  Checkpoint ck;
  try {
    const nlohmann::json header = nlohmann::json::parse(line);
    ck.config.dim = header.at("k").get<std::size_t>();
    ck.config.heads = header.at("H").get<std::size_t>();
    ck.config.variant = parse_variant(header.at("variant").get<std::string>());
    if (header.contains("matching")) ck.config.matching = parse_matching(header.at("matching").get<std::string>());
    const auto& counts = header.at("counts");
    ck.params = ModelParams(counts.at("entities").get<std::size_t>(), counts.at("relations").get<std::size_t>(),
                            ck.config.dim, ck.config.heads);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(source, 2, std::string("bad header: ") + e.what());
  } catch (const InvalidConfig& e) {
    throw ParseError(source, 2, e.what());
  }
  ck.config.validate();
  ck.params.tables.for_each_table([&](std::vector<double>& t) { detail::read_doubles(in, t, source); });
  if (in.peek() != std::char_traits<char>::eof()) throw ParseError(source, 0, "trailing bytes after tables");
  return ck;
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  return read_checkpoint(in, path.string());
}

}  // namespace hopfe
