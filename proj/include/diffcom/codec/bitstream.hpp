// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "diffcom/codec/arith.hpp"

namespace diffcom::codec {

struct BadStreamError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ".dcp" container, little-endian throughout:
//   magic "DCP1" | u8 version | u16 n_sparse | u16 feat_dim | u16 hyper_dim
//   | u8 preserved_size | u8 coord_bits | 3xf32 center | f32 scale
//   | u16 ddim_steps | u64 sampler_seed | i16 q_max
//   | u32 len_z | u32 len_coords | u32 len_y
//   | payload_z | payload_coords | payload_y | u32 crc32(payloads)
struct Bitstream {
  uint8_t version = 1;
  uint16_t n_sparse = 0;
  uint16_t feat_dim = 0;
  uint16_t hyper_dim = 0;
  uint8_t preserved_size = 1;
  uint8_t coord_bits = 16;
  std::array<float, 3> center = {0.0f, 0.0f, 0.0f};
  float scale = 1.0f;
  uint16_t ddim_steps = 0;
  uint64_t sampler_seed = 0;
  int16_t q_max = 0;
  std::vector<uint8_t> payload_z;
  std::vector<uint8_t> payload_coords;
  std::vector<uint8_t> payload_y;

  size_t header_bytes() const { return 53; }  // fixed-layout fields + lengths
  size_t payload_bytes() const {
    return payload_z.size() + payload_coords.size() + payload_y.size();
  }
  size_t total_bytes() const { return header_bytes() + payload_bytes() + 4; }
};

std::vector<uint8_t> pack_bitstream(const Bitstream& bs);
Bitstream unpack_bitstream(const std::vector<uint8_t>& bytes);

void write_bitstream_file(const std::string& path, const Bitstream& bs);
Bitstream read_bitstream_file(const std::string& path);

}  // namespace diffcom::codec
