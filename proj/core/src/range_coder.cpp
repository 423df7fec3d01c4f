#include "slpcc/range_coder.hpp"

#include <zlib.h>

#include <algorithm>
#include <cassert>

namespace slpcc {

namespace {

constexpr uint64_t kTop = uint64_t{1} << 56;  // settled-byte threshold
constexpr uint64_t kBot = uint64_t{1} << 48;  // minimum working range

uint32_t crc32_of(std::span<const uint8_t> bytes) {
  return uint32_t(::crc32(::crc32(0u, nullptr, 0), bytes.data(), uInt(bytes.size())));
}

}  // namespace

void RangeEncoder::normalize() {
  // Emit while the top byte is settled; if the range gets small while
  // straddling a top-byte boundary, truncate it to the boundary instead of
  // carrying (Subbotin's carry-less scheme).
  while ((low_ ^ (low_ + range_)) < kTop ||
         (range_ < kBot && ((range_ = (0 - low_) & (kBot - 1)), true))) {
    buf_.push_back(uint8_t(low_ >> 56));
    low_ <<= 8;
    range_ <<= 8;
  }
}

void RangeEncoder::encode(uint32_t cum, uint32_t freq) {
  assert(freq >= 1 && cum + freq <= Pmf::kTotal);
  range_ >>= 16;
  low_ += cum * range_;
  range_ *= freq;
  normalize();
}

void RangeEncoder::encode_symbol(const Pmf& pmf, int32_t v) {
  if (pmf.in_support(v)) {
    encode(pmf.cum(v), pmf.freq(v));
    return;
  }
  if (pmf.escape_freq() == 0)
    throw std::invalid_argument("range coder: value out of support and pmf has no escape");
  encode(pmf.escape_cum(), pmf.escape_freq());
  // Flat 32-bit payload, one uniform byte at a time.
  uint32_t u = uint32_t(v);
  for (int shift = 24; shift >= 0; shift -= 8) {
    uint32_t b = (u >> shift) & 0xFF;
    encode(b << 8, 256);
  }
}

std::vector<uint8_t> RangeEncoder::finish() {
  // range >= 2^48 after normalization, so [low, low+range) contains a
  // multiple of 2^48; two bytes pin it and the decoder's implicit zero
  // padding supplies the rest.
  uint64_t t = ((low_ + (kBot - 1)) >> 48) << 48;
  buf_.push_back(uint8_t(t >> 56));
  buf_.push_back(uint8_t(t >> 48));
  uint32_t crc = crc32_of(buf_);
  for (int i = 0; i < 4; ++i) buf_.push_back(uint8_t(crc >> (8 * i)));
  return std::move(buf_);
}

RangeDecoder::RangeDecoder(std::span<const uint8_t> stream) {
  if (stream.size() < 6) throw DecodeError("range coder: stream shorter than flush + checksum");
  payload_ = stream.first(stream.size() - 4);
  uint32_t stored = 0;
  for (int i = 0; i < 4; ++i) stored |= uint32_t(stream[stream.size() - 4 + size_t(i)]) << (8 * i);
  if (stored != crc32_of(payload_)) throw DecodeError("range coder: checksum mismatch");
  for (int i = 0; i < 8; ++i) code_ = (code_ << 8) | next_byte();
}

void RangeDecoder::normalize() {
  while ((low_ ^ (low_ + range_)) < kTop ||
         (range_ < kBot && ((range_ = (0 - low_) & (kBot - 1)), true))) {
    code_ = (code_ << 8) | next_byte();
    low_ <<= 8;
    range_ <<= 8;
  }
}

uint32_t RangeDecoder::peek() {
  range_ >>= 16;
  uint64_t dv = (code_ - low_) / range_;
  return uint32_t(std::min<uint64_t>(dv, Pmf::kTotal - 1));
}

void RangeDecoder::consume(uint32_t cum, uint32_t freq) {
  low_ += cum * range_;
  range_ *= freq;
  normalize();
}

int32_t RangeDecoder::decode_symbol(const Pmf& pmf) {
  uint32_t dv = peek();
  bool escape = false;
  int32_t v = pmf.symbol_at(dv, &escape);
  if (!escape) {
    consume(pmf.cum(v), pmf.freq(v));
    return v;
  }
  consume(pmf.escape_cum(), pmf.escape_freq());
  uint32_t u = 0;
  for (int i = 0; i < 4; ++i) {
    uint32_t b = peek() >> 8;
    consume(b << 8, 256);
    u = (u << 8) | b;
  }
  return int32_t(u);
}

std::vector<uint8_t> range_encode(std::span<const int32_t> symbols, std::span<const Pmf> pmfs) {
  if (symbols.size() != pmfs.size())
    throw std::invalid_argument("range_encode: one pmf per symbol required");
  RangeEncoder enc;
  for (size_t i = 0; i < symbols.size(); ++i) enc.encode_symbol(pmfs[i], symbols[i]);
  return enc.finish();
}

std::vector<int32_t> range_decode(std::span<const uint8_t> stream, std::span<const Pmf> pmfs) {
  RangeDecoder dec(stream);
  std::vector<int32_t> out(pmfs.size());
  for (size_t i = 0; i < pmfs.size(); ++i) out[i] = dec.decode_symbol(pmfs[i]);
  return out;
}

}  // namespace slpcc
