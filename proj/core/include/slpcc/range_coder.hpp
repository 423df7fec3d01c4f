#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "slpcc/pmf.hpp"

namespace slpcc {

struct DecodeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Byte-oriented range coder: 64-bit state, 16-bit total frequency, carry-less
// renormalization (the range is truncated at a straddle instead of carrying),
// CRC-32 of the payload appended on flush. The bit-exact layout is documented
// in docs/bitstream.md.
class RangeEncoder {
public:
  // Frequency slice [cum, cum + freq) out of a 2^16 total.
  void encode(uint32_t cum, uint32_t freq);

  // Value against a pmf; out-of-support values cost the escape symbol plus a
  // 4-byte flat payload. Throws std::invalid_argument if the pmf has no
  // escape mass and v is out of support.
  void encode_symbol(const Pmf& pmf, int32_t v);

  // Flushes the state (2 bytes; the decoder zero-pads the rest) and appends
  // the CRC-32 (4 bytes, little endian). The encoder is spent afterwards.
  std::vector<uint8_t> finish();

  size_t byte_count() const { return buf_.size(); }

private:
  void normalize();

  uint64_t low_ = 0;
  uint64_t range_ = ~uint64_t{0};
  std::vector<uint8_t> buf_;
};

class RangeDecoder {
public:
  // Verifies the trailing CRC-32 eagerly; throws DecodeError on mismatch or
  // if the stream is shorter than flush + checksum.
  explicit RangeDecoder(std::span<const uint8_t> stream);

  // Cumulative offset of the next symbol in [0, 2^16).
  uint32_t peek();
  // Consumes the symbol previously peeked, given its frequency slice.
  void consume(uint32_t cum, uint32_t freq);

  int32_t decode_symbol(const Pmf& pmf);

private:
  void normalize();
  uint8_t next_byte() { return pos_ < payload_.size() ? payload_[pos_++] : 0; }

  std::span<const uint8_t> payload_;
  size_t pos_ = 0;
  uint64_t low_ = 0;
  uint64_t range_ = ~uint64_t{0};
  uint64_t code_ = 0;
};

// Whole-stream conveniences; the pmf sequence must match between the two.
std::vector<uint8_t> range_encode(std::span<const int32_t> symbols, std::span<const Pmf> pmfs);
std::vector<int32_t> range_decode(std::span<const uint8_t> stream, std::span<const Pmf> pmfs);

}  // namespace slpcc
