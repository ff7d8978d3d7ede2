// SPDX-License-Identifier: Apache-2.0

#include "diffcom/codec/arith.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

namespace diffcom::codec {

CdfTable CdfTable::from_pmf(const std::vector<double>& pmf, int64_t offset) {
  const size_t n = pmf.size();
  if (n == 0) throw std::invalid_argument("CdfTable: empty pmf");
  if (n >= kFreqTotal) throw std::invalid_argument("CdfTable: support too large");
  double total = 0.0;
  for (double p : pmf) {
    if (!(p >= 0.0)) throw std::invalid_argument("CdfTable: negative or NaN pmf");
    total += p;
  }
  if (total <= 0.0) throw std::invalid_argument("CdfTable: zero-mass pmf");

  // One unit is reserved per symbol up front, the remaining budget is
  // split proportionally with floors, and leftovers go to the largest
  // fractional remainders. floor() is monotone, and equal floors imply
  // the larger pmf also has the larger remainder, so pmf order is
  // preserved in the resulting frequencies.
  const double budget = static_cast<double>(kFreqTotal - n);
  std::vector<double> target(n);
  std::vector<uint32_t> freq(n);
  int64_t assigned = 0;
  for (size_t i = 0; i < n; ++i) {
    target[i] = pmf[i] / total * budget;
    freq[i] = 1 + static_cast<uint32_t>(std::floor(target[i]));
    assigned += freq[i];
  }
  int64_t leftover = static_cast<int64_t>(kFreqTotal) - assigned;
  if (leftover < 0) throw std::runtime_error("CdfTable: allocation overflow");
  if (leftover > 0) {
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
      const double fa = target[a] - std::floor(target[a]);
      const double fb = target[b] - std::floor(target[b]);
      if (fa != fb) return fa > fb;
      if (pmf[a] != pmf[b]) return pmf[a] > pmf[b];
      return a < b;
    });
    for (size_t k = 0; leftover > 0; ++k, --leftover) freq[order[k % n]] += 1;
  }

  CdfTable t;
  t.offset_ = offset;
  t.cum_.resize(n + 1);
  t.cum_[0] = 0;
  for (size_t i = 0; i < n; ++i) t.cum_[i + 1] = t.cum_[i] + freq[i];
  if (t.cum_.back() != kFreqTotal) throw std::runtime_error("CdfTable: bad total");
  return t;
}

int64_t CdfTable::find(uint32_t target) const {
  // cum_ is strictly increasing; binary search for the containing slot.
  int64_t lo = 0, hi = size() - 1;
  while (lo < hi) {
    const int64_t mid = (lo + hi + 1) / 2;
    if (cum_[static_cast<size_t>(mid)] <= target)
      lo = mid;
    else
      hi = mid - 1;
  }
  return lo;
}

void BitWriter::put(int bit) {
  cur_ = static_cast<uint8_t>((cur_ << 1) | (bit & 1));
  if (++nbits_ == 8) {
    buf_.push_back(cur_);
    cur_ = 0;
    nbits_ = 0;
  }
}

const std::vector<uint8_t>& BitWriter::bytes() {
  if (!flushed_) {
    if (nbits_ > 0) {
      cur_ = static_cast<uint8_t>(cur_ << (8 - nbits_));
      buf_.push_back(cur_);
      nbits_ = 0;
    }
    flushed_ = true;
  }
  return buf_;
}

int BitReader::get() {
  if (pos_ >= size_) return 0;
  const int b = (data_[pos_] >> (7 - bit_)) & 1;
  if (++bit_ == 8) {
    bit_ = 0;
    ++pos_;
  }
  return b;
}

void ArithmeticEncoder::emit(int bit) {
  out_.put(bit);
  while (pending_ > 0) {
    out_.put(bit ^ 1);
    --pending_;
  }
}

void ArithmeticEncoder::encode(uint32_t cum, uint32_t freq, uint32_t total) {
  const uint64_t span = static_cast<uint64_t>(high_) - low_ + 1;
  high_ = low_ + static_cast<uint32_t>(span * (cum + freq) / total) - 1;
  low_ = low_ + static_cast<uint32_t>(span * cum / total);
  for (;;) {
    if (high_ < 0x80000000u) {
      emit(0);
    } else if (low_ >= 0x80000000u) {
      emit(1);
      low_ -= 0x80000000u;
      high_ -= 0x80000000u;
    } else if (low_ >= 0x40000000u && high_ < 0xc0000000u) {
      ++pending_;
      low_ -= 0x40000000u;
      high_ -= 0x40000000u;
    } else {
      break;
    }
    low_ <<= 1;
    high_ = (high_ << 1) | 1;
  }
}

std::vector<uint8_t> ArithmeticEncoder::finish() {
  ++pending_;
  emit(low_ >= 0x40000000u ? 1 : 0);
  return out_.bytes();
}

ArithmeticDecoder::ArithmeticDecoder(const uint8_t* data, size_t size)
    : in_(data, size) {
  for (int i = 0; i < 32; ++i) code_ = (code_ << 1) | static_cast<uint32_t>(in_.get());
}

uint32_t ArithmeticDecoder::decode_target(uint32_t total) {
  const uint64_t span = static_cast<uint64_t>(high_) - low_ + 1;
  const uint64_t off = static_cast<uint64_t>(code_) - low_;
  uint64_t t = ((off + 1) * total - 1) / span;
  if (t >= total) t = total - 1;
  return static_cast<uint32_t>(t);
}

void ArithmeticDecoder::consume(uint32_t cum, uint32_t freq, uint32_t total) {
  const uint64_t span = static_cast<uint64_t>(high_) - low_ + 1;
  high_ = low_ + static_cast<uint32_t>(span * (cum + freq) / total) - 1;
  low_ = low_ + static_cast<uint32_t>(span * cum / total);
  for (;;) {
    if (high_ < 0x80000000u) {
      // nothing
    } else if (low_ >= 0x80000000u) {
      low_ -= 0x80000000u;
      high_ -= 0x80000000u;
      code_ -= 0x80000000u;
    } else if (low_ >= 0x40000000u && high_ < 0xc0000000u) {
      low_ -= 0x40000000u;
      high_ -= 0x40000000u;
      code_ -= 0x40000000u;
    } else {
      break;
    }
    low_ <<= 1;
    high_ = (high_ << 1) | 1;
    code_ = (code_ << 1) | static_cast<uint32_t>(in_.get());
  }
}

namespace {

uint16_t symbol_checksum(const std::vector<int64_t>& symbols) {
  uint32_t crc = 0;
  for (int64_t s : symbols) {
    uint8_t b[8];
    uint64_t u = static_cast<uint64_t>(s);
    for (int i = 0; i < 8; ++i) b[i] = static_cast<uint8_t>((u >> (8 * i)) & 0xff);
    crc = crc32(b, 8, crc);
  }
  return static_cast<uint16_t>(crc & 0xffff);
}

}  // namespace

std::vector<uint8_t> ac_encode(const std::vector<int64_t>& symbols,
                               const CdfProvider& tables) {
  if (symbols.empty()) return {};
  ArithmeticEncoder enc;
  for (size_t i = 0; i < symbols.size(); ++i) {
    const CdfTable& t = tables(i);
    if (!t.contains(symbols[i]))
      throw std::invalid_argument("ac_encode: symbol outside table support");
    const int64_t idx = symbols[i] - t.offset();
    enc.encode(t.cum(idx), t.freq(idx), kFreqTotal);
  }
  std::vector<uint8_t> out = enc.finish();
  const uint16_t cs = symbol_checksum(symbols);
  out.push_back(static_cast<uint8_t>(cs & 0xff));
  out.push_back(static_cast<uint8_t>(cs >> 8));
  return out;
}

std::vector<int64_t> ac_decode(const std::vector<uint8_t>& bytes,
                               const CdfProvider& tables, size_t count) {
  if (count == 0) {
    if (!bytes.empty()) throw CorruptStreamError("ac_decode: nonempty payload for empty stream");
    return {};
  }
  if (bytes.size() < 2) throw CorruptStreamError("ac_decode: payload too short");
  ArithmeticDecoder dec(bytes.data(), bytes.size() - 2);
  std::vector<int64_t> symbols(count);
  for (size_t i = 0; i < count; ++i) {
    const CdfTable& t = tables(i);
    const uint32_t target = dec.decode_target(kFreqTotal);
    const int64_t idx = t.find(target);
    dec.consume(t.cum(idx), t.freq(idx), kFreqTotal);
    symbols[i] = t.offset() + idx;
  }
  const uint16_t expect = static_cast<uint16_t>(bytes[bytes.size() - 2]) |
                          (static_cast<uint16_t>(bytes[bytes.size() - 1]) << 8);
  if (symbol_checksum(symbols) != expect)
    throw CorruptStreamError("ac_decode: symbol checksum mismatch (wrong tables or corrupt data)");
  return symbols;
}

uint32_t crc32(const uint8_t* data, size_t size, uint32_t seed) {
  static const auto table = [] {
    std::array<uint32_t, 256> t{};
    for (uint32_t i = 0; i < 256; ++i) {
      uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  uint32_t c = seed ^ 0xffffffffu;
  for (size_t i = 0; i < size; ++i) c = table[(c ^ data[i]) & 0xff] ^ (c >> 8);
  return c ^ 0xffffffffu;
}

}  // namespace diffcom::codec
