#pragma once

#include "mash/model.hpp"

#include <string>

namespace mash {

/// On-disk layout, all integers 64-bit little-endian:
///   "MASHV1\n"
///   entry count
///   per entry: name length, UTF-8 name, rank, dims[rank], payload offset
///   payloads: row-major little-endian doubles, in entry order
///   checksum: sum of payload bytes mod 2^64
/// Offsets count from the start of the file. The model configuration is the
/// first entry, "__config__", a rank-1 tensor of numeric fields.
struct Checkpoint {
  ModelConfig config;
  ModelParams params;
};

std::string encode_checkpoint(const ModelConfig& cfg, const ModelParams& params);
Checkpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const std::string& path, const ModelConfig& cfg, const ModelParams& params);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace mash
