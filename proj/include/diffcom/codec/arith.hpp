// SPDX-License-Identifier: Apache-2.0
//
// Integer binary arithmetic coder (32-bit registers, bit renormalization,
// pending-bit carry resolution). Totals are capped at 1 << 16 so the
// quotient keeps >= 14 bits of precision; measured overhead stays within
// the 32-bit trailer + 0.1% budget. Everything here is integer math, so
// streams are identical across platforms.

#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace diffcom::codec {

inline constexpr int kFreqPrecision = 16;
inline constexpr uint32_t kFreqTotal = 1u << kFreqPrecision;

struct CorruptStreamError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Integer cumulative-frequency table over a contiguous symbol support
// [offset, offset + size). Frequencies are >= 1 and sum to kFreqTotal.
class CdfTable {
 public:
  CdfTable() = default;

  // pmf entries may be unnormalized; they are floored and renormalized to
  // integer frequencies with a largest-remainder allocation that keeps
  // freq order consistent with pmf order.
  static CdfTable from_pmf(const std::vector<double>& pmf, int64_t offset);

  int64_t offset() const { return offset_; }
  int64_t size() const { return static_cast<int64_t>(cum_.size()) - 1; }
  uint32_t cum(int64_t sym_index) const { return cum_[static_cast<size_t>(sym_index)]; }
  uint32_t freq(int64_t sym_index) const {
    return cum_[static_cast<size_t>(sym_index) + 1] - cum_[static_cast<size_t>(sym_index)];
  }
  // Index such that cum(i) <= target < cum(i+1).
  int64_t find(uint32_t target) const;

  bool contains(int64_t symbol) const {
    return symbol >= offset_ && symbol < offset_ + size();
  }

 private:
  int64_t offset_ = 0;
  std::vector<uint32_t> cum_;  // size + 1 entries, cum_[0] = 0, back = kFreqTotal
};

class BitWriter {
 public:
  void put(int bit);
  const std::vector<uint8_t>& bytes();  // flushes the partial byte with zeros

 private:
  std::vector<uint8_t> buf_;
  uint8_t cur_ = 0;
  int nbits_ = 0;
  bool flushed_ = false;
};

class BitReader {
 public:
  explicit BitReader(const uint8_t* data, size_t size) : data_(data), size_(size) {}
  int get();  // reads 0 past the end

 private:
  const uint8_t* data_;
  size_t size_;
  size_t pos_ = 0;
  int bit_ = 0;
};

class ArithmeticEncoder {
 public:
  void encode(uint32_t cum, uint32_t freq, uint32_t total);
  std::vector<uint8_t> finish();

 private:
  void emit(int bit);
  uint32_t low_ = 0;
  uint32_t high_ = 0xffffffffu;
  int64_t pending_ = 0;
  BitWriter out_;
};

class ArithmeticDecoder {
 public:
  ArithmeticDecoder(const uint8_t* data, size_t size);
  // Returns a value in [0, total) locating the next symbol in its table.
  uint32_t decode_target(uint32_t total);
  void consume(uint32_t cum, uint32_t freq, uint32_t total);

 private:
  uint32_t low_ = 0;
  uint32_t high_ = 0xffffffffu;
  uint32_t code_ = 0;
  BitReader in_;
};

// Provider hands the table for position i; the decoder must observe the
// same sequence (tables may depend on previously decoded symbols only).
using CdfProvider = std::function<const CdfTable&(size_t index)>;

// Lossless symbol-stream coding. The payload ends with a 16-bit checksum
// of the symbol values; ac_decode verifies it and throws
// CorruptStreamError on mismatch (catches table drift between encoder and
// decoder). An empty stream encodes to an empty payload.
std::vector<uint8_t> ac_encode(const std::vector<int64_t>& symbols,
                               const CdfProvider& tables);
std::vector<int64_t> ac_decode(const std::vector<uint8_t>& bytes,
                               const CdfProvider& tables, size_t count);

// CRC-32 (IEEE 802.3, reflected), used by the bitstream container.
uint32_t crc32(const uint8_t* data, size_t size, uint32_t seed = 0);

}  // namespace diffcom::codec
