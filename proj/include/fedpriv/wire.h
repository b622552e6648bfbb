// Copyright 2026 The fedpriv Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// What crosses the simulated network: parameter payloads (fp32 or NF4),
// their framing, and the byte ledger of every transmission.

#ifndef FEDPRIV_WIRE_H_
#define FEDPRIV_WIRE_H_

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "fedpriv/model.h"

namespace fedpriv {

// ---------------------------------------------------------------- NF4 codec

inline constexpr std::size_t kNf4BlockSize = 64;

// The 16 NF4 levels, ascending, as float32. They are the normalised standard
// normal quantiles of the QLoRA construction (offset 0.9677083: 8 positive
// levels from linspace(offset, 0.5, 9), 7 negative ones from
// linspace(offset, 0.5, 8), plus 0, divided by the largest).
const std::array<float, 16>& nf4_codebook();

// Largest gap between consecutive codebook levels, halved.
double nf4_max_half_gap();

struct Nf4Block {
  float scale = 0.0f;               // absmax of the block, rounded up to float
  std::vector<std::uint8_t> codes;  // one 4-bit index per value
};

// Blockwise quantisation: code = nearest level to v / scale, ties to the
// lower index. An all-zero block has scale 0 and every code at level 0.0.
// Throws EncodeError on non-finite input.
std::vector<Nf4Block> nf4_quantize(std::span<const double> values,
                                   std::size_t block = kNf4BlockSize);
std::vector<double> nf4_dequantize(std::span<const Nf4Block> blocks);

// ------------------------------------------------------------ cost model

enum class Encoding : std::uint8_t { kFp32 = 0, kNf4 = 1 };

std::string to_string(Encoding e);
Encoding parse_encoding(const std::string& name);

// Exact rational bits per parameter.
struct BitWidth {
  std::uint64_t num = 32;
  std::uint64_t den = 1;
};

inline constexpr BitWidth kFp32Bits{32, 1};
// 4 bits per code plus one 32-bit scale per 64 values: 4 + 32/64 = 288/64.
inline constexpr BitWidth kNf4Bits{4 * kNf4BlockSize + 32, kNf4BlockSize};

BitWidth bits_for(Encoding e);

// ceil((lora_params + base_params) * bits / 8), exact integer arithmetic.
std::uint64_t message_bytes(std::uint64_t lora_params, std::uint64_t base_params, BitWidth bits);

enum class GbUnit { kDecimal, kBinary };

double to_gigabytes(std::uint64_t bytes, GbUnit unit = GbUnit::kDecimal);
// "13.7 MB", "1.92 MB", "40.0 GB": decimal (or binary) prefixes rounded to
// `sig_figs` significant figures.
std::string human_bytes(std::uint64_t bytes, int sig_figs = 3, GbUnit unit = GbUnit::kDecimal);

// Rounds to `sig_figs` significant figures.
double round_sig(double value, int sig_figs);

// ---------------------------------------------------------------- framing

enum class Direction : std::uint8_t { kDown = 0, kUp = 1 };

std::string to_string(Direction d);

struct NamedTensor {
  std::string name;
  Matrix values;

  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

struct WireMessage {
  std::uint32_t round = 0;
  Direction direction = Direction::kDown;
  Encoding encoding = Encoding::kFp32;
  std::vector<NamedTensor> tensors;
};

// Byte layout, little-endian:
//   header (16 B): "FPUM", u16 version(=1), u8 direction, u8 encoding,
//                  u32 round, u32 tensor_count
//   name table:    per tensor u16 name_len, name bytes, u32 rows, u32 cols
//   payload:       all tensors concatenated in table order, row-major;
//                  fp32: one f32 per value;
//                  nf4:  per 64-value block an f32 scale followed by
//                        ceil(n/2) code bytes, low nibble first.
std::vector<std::uint8_t> encode_message(const WireMessage& message);
// Values come back as the dequantised doubles. Throws DecodeError.
WireMessage decode_message(std::span<const std::uint8_t> bytes);

// Payload size of `n` values in the layout above.
std::uint64_t payload_bytes(std::uint64_t n, Encoding e);

// What the receiver sees after a trip through the codec.
Params wire_roundtrip(const Params& p, Encoding e);

// ----------------------------------------------------------------- ledger

inline constexpr int kServer = -1;

struct LedgerEntry {
  std::uint32_t round = 0;
  Direction direction = Direction::kDown;
  int sender = kServer;
  int receiver = kServer;
  std::uint64_t params = 0;
  Encoding encoding = Encoding::kFp32;
  std::uint64_t bytes = 0;

  friend bool operator==(const LedgerEntry&, const LedgerEntry&) = default;
};

// Append-only record of transmissions made during training. The initial
// model broadcast is not a training transmission and is never logged.
class CommLedger {
 public:
  // Logs one message of `params` values; bytes follow message_bytes().
  const LedgerEntry& record(std::uint32_t round, Direction direction, int sender, int receiver,
                            std::uint64_t params, Encoding encoding);

  const std::vector<LedgerEntry>& entries() const { return entries_; }
  std::uint64_t total_bytes() const;
  std::uint64_t bytes_in_round(std::uint32_t round) const;
  double total_gigabytes(GbUnit unit = GbUnit::kDecimal) const;

  // round,direction,sender,receiver,bytes
  void write_csv(std::ostream& out) const;
  std::string summary_json(GbUnit unit = GbUnit::kDecimal) const;

  friend bool operator==(const CommLedger&, const CommLedger&) = default;

 private:
  std::vector<LedgerEntry> entries_;
};

std::string endpoint_name(int id);

}  // namespace fedpriv

#endif  // FEDPRIV_WIRE_H_
