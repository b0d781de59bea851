#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lifefuse/errors.hpp"
#include "lifefuse/neural/layers.hpp"

namespace lifefuse::nn {

// Checkpoint layout: one JSON line describing every parameter block
// (name, kind, shape, byte offset into the data section), a newline,
// then the blocks as raw little-endian float32 in row-major order.

namespace detail {

inline void write_f32_le(std::ostream& out, float v) {
  const auto bits = std::bit_cast<std::uint32_t>(v);
  const char bytes[4] = {static_cast<char>(bits & 0xff), static_cast<char>((bits >> 8) & 0xff),
                         static_cast<char>((bits >> 16) & 0xff),
                         static_cast<char>((bits >> 24) & 0xff)};
  out.write(bytes, 4);
}

inline float read_f32_le(std::istream& in) {
  unsigned char bytes[4];
  in.read(reinterpret_cast<char*>(bytes), 4);
  if (!in) throw ParseError("checkpoint: truncated data section");
  const std::uint32_t bits = static_cast<std::uint32_t>(bytes[0]) |
                             (static_cast<std::uint32_t>(bytes[1]) << 8) |
                             (static_cast<std::uint32_t>(bytes[2]) << 16) |
                             (static_cast<std::uint32_t>(bytes[3]) << 24);
  return std::bit_cast<float>(bits);
}

}  // namespace detail

inline void save_checkpoint(const std::vector<Param*>& params,
                            const std::filesystem::path& path) {
  nlohmann::json header;
  header["format"] = "lifefuse-checkpoint";
  header["version"] = 1;
  auto& blocks = header["params"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const Param* p : params) {
    blocks.push_back({{"name", p->name},
                      {"kind", p->kind},
                      {"rows", p->value.rows()},
                      {"cols", p->value.cols()},
                      {"offset", offset}});
    offset += static_cast<std::uint64_t>(p->value.size()) * 4;
  }

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot open " + path.string() + " for writing");
  out << header.dump() << '\n';
  for (const Param* p : params) {
    for (Eigen::Index r = 0; r < p->value.rows(); ++r) {
      for (Eigen::Index c = 0; c < p->value.cols(); ++c) {
        detail::write_f32_le(out, static_cast<float>(p->value(r, c)));
      }
    }
  }
  if (!out) throw std::runtime_error("checkpoint: write to " + path.string() + " failed");
}

inline void load_checkpoint(const std::vector<Param*>& params,
                            const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path.string());
  std::string header_line;
  if (!std::getline(in, header_line)) throw ParseError("checkpoint: missing header line");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_line);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("checkpoint: malformed header: ") + e.what());
  }
  if (header.value("format", "") != std::string("lifefuse-checkpoint")) {
    throw ParseError("checkpoint: unrecognized format tag");
  }
  const auto& blocks = header.at("params");
  if (blocks.size() != params.size()) {
    throw std::invalid_argument("checkpoint: file holds " + std::to_string(blocks.size()) +
                                " parameter blocks, network has " +
                                std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& block = blocks[i];
    Param* p = params[i];
    if (block.at("name").get<std::string>() != p->name ||
        block.at("kind").get<std::string>() != p->kind) {
      throw std::invalid_argument("checkpoint: block " + std::to_string(i) + " is " +
                                  block.at("name").get<std::string>() + "/" +
                                  block.at("kind").get<std::string>() + ", network expects " +
                                  p->name + "/" + p->kind);
    }
    if (block.at("rows").get<Eigen::Index>() != p->value.rows() ||
        block.at("cols").get<Eigen::Index>() != p->value.cols()) {
      throw std::invalid_argument("checkpoint: shape mismatch in block " + p->name);
    }
    for (Eigen::Index r = 0; r < p->value.rows(); ++r) {
      for (Eigen::Index c = 0; c < p->value.cols(); ++c) {
        p->value(r, c) = static_cast<double>(detail::read_f32_le(in));
      }
    }
  }
}

}  // namespace lifefuse::nn
