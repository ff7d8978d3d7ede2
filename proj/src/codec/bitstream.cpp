// SPDX-License-Identifier: Apache-2.0

#include "diffcom/codec/bitstream.hpp"

#include <cstring>
#include <fstream>

namespace diffcom::codec {

namespace {

void put_u8(std::vector<uint8_t>& b, uint8_t v) { b.push_back(v); }
void put_u16(std::vector<uint8_t>& b, uint16_t v) {
  b.push_back(static_cast<uint8_t>(v & 0xff));
  b.push_back(static_cast<uint8_t>(v >> 8));
}
void put_u32(std::vector<uint8_t>& b, uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
}
void put_u64(std::vector<uint8_t>& b, uint64_t v) {
  for (int i = 0; i < 8; ++i) b.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
}
void put_f32(std::vector<uint8_t>& b, float f) {
  uint32_t u;
  std::memcpy(&u, &f, 4);
  put_u32(b, u);
}

struct Cursor {
  const uint8_t* p;
  size_t n;
  size_t pos = 0;
  void need(size_t k) const {
    if (pos + k > n) throw BadStreamError("bitstream: truncated");
  }
  uint8_t u8() {
    need(1);
    return p[pos++];
  }
  uint16_t u16() {
    need(2);
    uint16_t v = static_cast<uint16_t>(p[pos]) | (static_cast<uint16_t>(p[pos + 1]) << 8);
    pos += 2;
    return v;
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | p[pos + static_cast<size_t>(i)];
    pos += 4;
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | p[pos + static_cast<size_t>(i)];
    pos += 8;
    return v;
  }
  float f32() {
    const uint32_t u = u32();
    float f;
    std::memcpy(&f, &u, 4);
    return f;
  }
  std::vector<uint8_t> blob(size_t k) {
    need(k);
    std::vector<uint8_t> out(p + pos, p + pos + k);
    pos += k;
    return out;
  }
};

}  // namespace

std::vector<uint8_t> pack_bitstream(const Bitstream& bs) {
  std::vector<uint8_t> out;
  out.reserve(bs.total_bytes());
  out.push_back('D');
  out.push_back('C');
  out.push_back('P');
  out.push_back('1');
  put_u8(out, bs.version);
  put_u16(out, bs.n_sparse);
  put_u16(out, bs.feat_dim);
  put_u16(out, bs.hyper_dim);
  put_u8(out, bs.preserved_size);
  put_u8(out, bs.coord_bits);
  for (float c : bs.center) put_f32(out, c);
  put_f32(out, bs.scale);
  put_u16(out, bs.ddim_steps);
  put_u64(out, bs.sampler_seed);
  put_u16(out, static_cast<uint16_t>(bs.q_max));
  put_u32(out, static_cast<uint32_t>(bs.payload_z.size()));
  put_u32(out, static_cast<uint32_t>(bs.payload_coords.size()));
  put_u32(out, static_cast<uint32_t>(bs.payload_y.size()));
  uint32_t crc = 0;
  for (const auto* payload : {&bs.payload_z, &bs.payload_coords, &bs.payload_y}) {
    out.insert(out.end(), payload->begin(), payload->end());
    crc = crc32(payload->data(), payload->size(), crc);
  }
  put_u32(out, crc);
  return out;
}

Bitstream unpack_bitstream(const std::vector<uint8_t>& bytes) {
  Cursor c{bytes.data(), bytes.size()};
  c.need(4);
  if (std::memcmp(bytes.data(), "DCP1", 4) != 0)
    throw BadStreamError("bitstream: bad magic");
  c.pos = 4;
  Bitstream bs;
  bs.version = c.u8();
  if (bs.version != 1) throw BadStreamError("bitstream: unsupported version");
  bs.n_sparse = c.u16();
  bs.feat_dim = c.u16();
  bs.hyper_dim = c.u16();
  bs.preserved_size = c.u8();
  bs.coord_bits = c.u8();
  for (int i = 0; i < 3; ++i) bs.center[static_cast<size_t>(i)] = c.f32();
  bs.scale = c.f32();
  bs.ddim_steps = c.u16();
  bs.sampler_seed = c.u64();
  bs.q_max = static_cast<int16_t>(c.u16());
  const uint32_t len_z = c.u32();
  const uint32_t len_coords = c.u32();
  const uint32_t len_y = c.u32();
  bs.payload_z = c.blob(len_z);
  bs.payload_coords = c.blob(len_coords);
  bs.payload_y = c.blob(len_y);
  const uint32_t stored = c.u32();
  uint32_t crc = 0;
  for (const auto* payload : {&bs.payload_z, &bs.payload_coords, &bs.payload_y})
    crc = crc32(payload->data(), payload->size(), crc);
  if (crc != stored) throw BadStreamError("bitstream: payload checksum mismatch");
  return bs;
}

void write_bitstream_file(const std::string& path, const Bitstream& bs) {
  const std::vector<uint8_t> bytes = pack_bitstream(bs);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw BadStreamError(path + ": cannot open for write");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

Bitstream read_bitstream_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw BadStreamError(path + ": cannot open");
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  return unpack_bitstream(bytes);
}

}  // namespace diffcom::codec
