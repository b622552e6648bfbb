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

#include "fedpriv/wire.h"

#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

#include "byte_io.h"
#include "fedpriv/errors.h"
#include "json.hpp"

namespace fedpriv {
namespace {

constexpr char kMessageMagic[] = "FPUM";
constexpr std::uint16_t kMessageVersion = 1;
constexpr std::uint8_t kZeroCode = 7;

float round_up_to_float(double v) {
  float f = static_cast<float>(v);
  if (static_cast<double>(f) < v) f = std::nextafter(f, std::numeric_limits<float>::infinity());
  return f;
}

std::uint8_t nearest_code(double x) {
  const auto& book = nf4_codebook();
  std::uint8_t best = 0;
  double best_dist = std::numeric_limits<double>::infinity();
  for (std::uint8_t i = 0; i < book.size(); ++i) {
    const double d = std::abs(x - static_cast<double>(book[i]));
    if (d < best_dist) {
      best_dist = d;
      best = i;
    }
  }
  return best;
}

std::uint64_t ceil_div(std::uint64_t a, std::uint64_t b) { return a / b + (a % b != 0); }

}  // namespace

const std::array<float, 16>& nf4_codebook() {
  static constexpr std::array<float, 16> kBook = {
      -1.0f,
      -0.6961928009986877f,
      -0.5250730514526367f,
      -0.39491748809814453f,
      -0.28444138169288635f,
      -0.18477343022823334f,
      -0.09105003625154495f,
      0.0f,
      0.07958029955625534f,
      0.16093020141124725f,
      0.24611230194568634f,
      0.33791524171829224f,
      0.44070982933044434f,
      0.5626170039176941f,
      0.7229568362236023f,
      1.0f,
  };
  return kBook;
}

double nf4_max_half_gap() {
  const auto& book = nf4_codebook();
  double gap = 0.0;
  for (std::size_t i = 1; i < book.size(); ++i) {
    gap = std::max(gap, static_cast<double>(book[i]) - static_cast<double>(book[i - 1]));
  }
  return gap / 2.0;
}

std::vector<Nf4Block> nf4_quantize(std::span<const double> values, std::size_t block) {
  if (block == 0) throw EncodeError("nf4 block size must be positive");
  std::vector<Nf4Block> out;
  out.reserve(ceil_div(values.size(), block));
  for (std::size_t start = 0; start < values.size(); start += block) {
    const std::size_t n = std::min(block, values.size() - start);
    const auto chunk = values.subspan(start, n);
    double absmax = 0.0;
    for (double v : chunk) {
      if (!std::isfinite(v)) throw EncodeError("nf4: non-finite value at index " +
                                               std::to_string(start + (&v - chunk.data())));
      absmax = std::max(absmax, std::abs(v));
    }
    if (absmax > std::numeric_limits<float>::max()) throw EncodeError("nf4: value exceeds float range");
    Nf4Block b;
    b.scale = round_up_to_float(absmax);
    b.codes.resize(n, kZeroCode);
    if (b.scale > 0.0f) {
      const double s = b.scale;
      for (std::size_t i = 0; i < n; ++i) b.codes[i] = nearest_code(chunk[i] / s);
    }
    out.push_back(std::move(b));
  }
  return out;
}

std::vector<double> nf4_dequantize(std::span<const Nf4Block> blocks) {
  const auto& book = nf4_codebook();
  std::vector<double> out;
  for (const Nf4Block& b : blocks) {
    for (std::uint8_t c : b.codes) {
      if (c >= book.size()) throw DecodeError("nf4 code out of range");
      out.push_back(static_cast<double>(book[c]) * static_cast<double>(b.scale));
    }
  }
  return out;
}

std::string to_string(Encoding e) { return e == Encoding::kNf4 ? "nf4" : "fp32"; }

Encoding parse_encoding(const std::string& name) {
  if (name == "fp32") return Encoding::kFp32;
  if (name == "nf4") return Encoding::kNf4;
  throw ConfigError("unknown encoding '" + name + "' (expected fp32 or nf4)");
}

BitWidth bits_for(Encoding e) { return e == Encoding::kNf4 ? kNf4Bits : kFp32Bits; }

std::uint64_t message_bytes(std::uint64_t lora_params, std::uint64_t base_params, BitWidth bits) {
  if (bits.den == 0) throw ConfigError("bit width with zero denominator");
  const unsigned __int128 bit_count =
      static_cast<unsigned __int128>(lora_params + base_params) * bits.num;
  const unsigned __int128 denom = static_cast<unsigned __int128>(bits.den) * 8;
  return static_cast<std::uint64_t>(bit_count / denom + (bit_count % denom != 0));
}

double to_gigabytes(std::uint64_t bytes, GbUnit unit) {
  return static_cast<double>(bytes) / (unit == GbUnit::kDecimal ? 1e9 : 1073741824.0);
}

double round_sig(double value, int sig_figs) {
  if (value == 0.0 || !std::isfinite(value)) return value;
  const int exponent = static_cast<int>(std::floor(std::log10(std::abs(value))));
  const double factor = std::pow(10.0, sig_figs - 1 - exponent);
  return std::round(value * factor) / factor;
}

std::string human_bytes(std::uint64_t bytes, int sig_figs, GbUnit unit) {
  const double base = unit == GbUnit::kDecimal ? 1000.0 : 1024.0;
  static const char* kDecimalNames[] = {"B", "kB", "MB", "GB", "TB"};
  static const char* kBinaryNames[] = {"B", "KiB", "MiB", "GiB", "TiB"};
  double v = static_cast<double>(bytes);
  int idx = 0;
  while (v >= base && idx < 4) {
    v /= base;
    ++idx;
  }
  if (idx == 0) return std::to_string(bytes) + " B";
  v = round_sig(v, sig_figs);
  const int exponent = v == 0.0 ? 0 : static_cast<int>(std::floor(std::log10(v)));
  const int decimals = std::max(0, sig_figs - 1 - exponent);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f %s", decimals, v,
                unit == GbUnit::kDecimal ? kDecimalNames[idx] : kBinaryNames[idx]);
  return buf;
}

std::string to_string(Direction d) { return d == Direction::kUp ? "up" : "down"; }

std::uint64_t payload_bytes(std::uint64_t n, Encoding e) {
  if (e == Encoding::kFp32) return 4 * n;
  return 4 * ceil_div(n, kNf4BlockSize) + ceil_div(n, 2);
}

std::vector<std::uint8_t> encode_message(const WireMessage& message) {
  internal::ByteWriter w;
  w.put_bytes(std::string_view(kMessageMagic, 4));
  w.put_uint<std::uint16_t>(kMessageVersion);
  w.put_u8(static_cast<std::uint8_t>(message.direction));
  w.put_u8(static_cast<std::uint8_t>(message.encoding));
  w.put_uint<std::uint32_t>(message.round);
  w.put_uint<std::uint32_t>(static_cast<std::uint32_t>(message.tensors.size()));
  std::vector<double> all;
  for (const NamedTensor& t : message.tensors) {
    if (t.name.size() > 0xffff) throw EncodeError("tensor name too long");
    w.put_uint<std::uint16_t>(static_cast<std::uint16_t>(t.name.size()));
    w.put_bytes(t.name);
    w.put_uint<std::uint32_t>(static_cast<std::uint32_t>(t.values.rows()));
    w.put_uint<std::uint32_t>(static_cast<std::uint32_t>(t.values.cols()));
    all.insert(all.end(), t.values.data().begin(), t.values.data().end());
  }
  if (message.encoding == Encoding::kFp32) {
    for (double v : all) {
      if (!std::isfinite(v) || std::abs(v) > std::numeric_limits<float>::max()) {
        throw EncodeError("fp32: value not representable");
      }
      w.put_f32(static_cast<float>(v));
    }
  } else {
    for (const Nf4Block& b : nf4_quantize(all)) {
      w.put_f32(b.scale);
      for (std::size_t i = 0; i < b.codes.size(); i += 2) {
        const std::uint8_t hi = i + 1 < b.codes.size() ? b.codes[i + 1] : 0;
        w.put_u8(static_cast<std::uint8_t>(b.codes[i] | (hi << 4)));
      }
    }
  }
  return std::move(w.bytes());
}

WireMessage decode_message(std::span<const std::uint8_t> bytes) {
  internal::ByteReader<DecodeError> r(bytes.data(), bytes.size());
  if (r.get_bytes(4) != std::string_view(kMessageMagic, 4)) throw DecodeError("bad message magic");
  if (r.get_uint<std::uint16_t>() != kMessageVersion) throw DecodeError("unsupported message version");
  WireMessage m;
  const std::uint8_t dir = r.get_u8();
  const std::uint8_t enc = r.get_u8();
  if (dir > 1) throw DecodeError("bad direction byte");
  if (enc > 1) throw DecodeError("bad encoding byte");
  m.direction = static_cast<Direction>(dir);
  m.encoding = static_cast<Encoding>(enc);
  m.round = r.get_uint<std::uint32_t>();
  const auto count = r.get_uint<std::uint32_t>();
  std::uint64_t total = 0;
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = r.get_bytes(r.get_uint<std::uint16_t>());
    const auto rows = r.get_uint<std::uint32_t>();
    const auto cols = r.get_uint<std::uint32_t>();
    if (static_cast<std::uint64_t>(rows) * cols > r.remaining() * 2) {
      throw DecodeError("tensor larger than the message");
    }
    t.values = Matrix(rows, cols);
    total += static_cast<std::uint64_t>(rows) * cols;
    m.tensors.push_back(std::move(t));
  }
  if (r.remaining() != payload_bytes(total, m.encoding)) {
    throw DecodeError("payload size mismatch: " + std::to_string(r.remaining()) + " bytes for " +
                      std::to_string(total) + " values");
  }
  std::vector<double> all;
  all.reserve(total);
  if (m.encoding == Encoding::kFp32) {
    for (std::uint64_t i = 0; i < total; ++i) all.push_back(r.get_f32());
  } else {
    std::vector<Nf4Block> blocks;
    for (std::uint64_t start = 0; start < total; start += kNf4BlockSize) {
      const std::size_t n = static_cast<std::size_t>(std::min<std::uint64_t>(kNf4BlockSize, total - start));
      Nf4Block b;
      b.scale = r.get_f32();
      b.codes.resize(n);
      for (std::size_t i = 0; i < n; i += 2) {
        const std::uint8_t byte = r.get_u8();
        b.codes[i] = byte & 0x0f;
        if (i + 1 < n) b.codes[i + 1] = byte >> 4;
      }
      blocks.push_back(std::move(b));
    }
    all = nf4_dequantize(blocks);
  }
  std::size_t pos = 0;
  for (NamedTensor& t : m.tensors) {
    for (double& v : t.values.data()) v = all[pos++];
  }
  return m;
}

Params wire_roundtrip(const Params& p, Encoding e) {
  Params out = p;
  if (e == Encoding::kFp32) {
    for (Matrix& m : out) {
      for (double& v : m.data()) {
        if (!std::isfinite(v) || std::abs(v) > std::numeric_limits<float>::max()) {
          throw EncodeError("fp32: value not representable");
        }
        v = static_cast<double>(static_cast<float>(v));
      }
    }
    return out;
  }
  const auto flat = flatten(p);
  const auto blocks = nf4_quantize(flat);
  unflatten(nf4_dequantize(blocks), out);
  return out;
}

const LedgerEntry& CommLedger::record(std::uint32_t round, Direction direction, int sender,
                                      int receiver, std::uint64_t params, Encoding encoding) {
  LedgerEntry e;
  e.round = round;
  e.direction = direction;
  e.sender = sender;
  e.receiver = receiver;
  e.params = params;
  e.encoding = encoding;
  e.bytes = message_bytes(0, params, bits_for(encoding));
  entries_.push_back(e);
  return entries_.back();
}

std::uint64_t CommLedger::total_bytes() const {
  std::uint64_t total = 0;
  for (const auto& e : entries_) total += e.bytes;
  return total;
}

std::uint64_t CommLedger::bytes_in_round(std::uint32_t round) const {
  std::uint64_t total = 0;
  for (const auto& e : entries_) {
    if (e.round == round) total += e.bytes;
  }
  return total;
}

double CommLedger::total_gigabytes(GbUnit unit) const { return to_gigabytes(total_bytes(), unit); }

std::string endpoint_name(int id) {
  return id == kServer ? "server" : "client" + std::to_string(id);
}

void CommLedger::write_csv(std::ostream& out) const {
  out << "round,direction,sender,receiver,bytes\n";
  for (const auto& e : entries_) {
    out << e.round << ',' << to_string(e.direction) << ',' << endpoint_name(e.sender) << ','
        << endpoint_name(e.receiver) << ',' << e.bytes << '\n';
  }
}

std::string CommLedger::summary_json(GbUnit unit) const {
  nlohmann::json j;
  j["messages"] = entries_.size();
  j["total_bytes"] = total_bytes();
  j["total_gb"] = total_gigabytes(unit);
  j["gb_unit"] = unit == GbUnit::kDecimal ? "decimal" : "binary";
  std::uint64_t up = 0;
  std::uint64_t down = 0;
  for (const auto& e : entries_) (e.direction == Direction::kUp ? up : down) += e.bytes;
  j["up_bytes"] = up;
  j["down_bytes"] = down;
  return j.dump(2);
}

}  // namespace fedpriv
