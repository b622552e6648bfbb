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

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include <boost/math/distributions/normal.hpp>

#include "fedpriv/errors.h"
#include "gtest/gtest.h"

namespace fedpriv {
namespace {

// Independent construction of the NF4 levels from normal quantiles.
std::vector<double> quantile_codebook() {
  const boost::math::normal_distribution<double> normal;
  const double offset = 0.9677083;
  auto linspace = [](double a, double b, int n) {
    std::vector<double> v(n);
    for (int i = 0; i < n; ++i) v[i] = a + (b - a) * i / (n - 1);
    return v;
  };
  std::vector<double> levels;
  const auto pos = linspace(offset, 0.5, 9);
  for (int i = 0; i < 8; ++i) levels.push_back(boost::math::quantile(normal, pos[i]));
  const auto neg = linspace(offset, 0.5, 8);
  for (int i = 0; i < 7; ++i) levels.push_back(-boost::math::quantile(normal, neg[i]));
  levels.push_back(0.0);
  std::sort(levels.begin(), levels.end());
  const double top = levels.back();
  for (double& v : levels) v /= top;
  return levels;
}

TEST(Nf4Test, CodebookShape) {
  const auto& book = nf4_codebook();
  EXPECT_EQ(book.front(), -1.0f);
  EXPECT_EQ(book.back(), 1.0f);
  EXPECT_EQ(std::count(book.begin(), book.end(), 0.0f), 1);
  EXPECT_TRUE(std::is_sorted(book.begin(), book.end()));
  EXPECT_EQ(std::set<float>(book.begin(), book.end()).size(), 16u);
}

TEST(Nf4Test, CodebookMatchesQuantileProcedure) {
  const auto expected = quantile_codebook();
  const auto& book = nf4_codebook();
  // The frozen table went through float32 arithmetic when it was first
  // generated; a few float ulps of slack covers that.
  for (std::size_t i = 0; i < 16; ++i) {
    EXPECT_NEAR(book[i], expected[i], 2.5e-7) << "level " << i;
  }
}

TEST(Nf4Test, CodebookQuantizesToItself) {
  const auto& book = nf4_codebook();
  const std::vector<double> values(book.begin(), book.end());
  const auto blocks = nf4_quantize(values);
  ASSERT_EQ(blocks.size(), 1u);
  EXPECT_EQ(blocks[0].scale, 1.0f);
  for (std::uint8_t i = 0; i < 16; ++i) EXPECT_EQ(blocks[0].codes[i], i);
  EXPECT_EQ(nf4_dequantize(blocks), values);
}

TEST(Nf4Test, ZerosAndOnGridValuesRoundTripExactly) {
  const std::vector<double> zeros(130, 0.0);
  const auto zb = nf4_quantize(zeros);
  ASSERT_EQ(zb.size(), 3u);
  EXPECT_EQ(zb[0].scale, 0.0f);
  EXPECT_EQ(nf4_dequantize(zb), zeros);

  RngStream rng(3);
  const auto& book = nf4_codebook();
  std::vector<double> on_grid;
  for (int b = 0; b < 5; ++b) {
    const float scale = static_cast<float>(0.01 + rng.uniform() * 10);
    for (std::size_t i = 0; i < kNf4BlockSize; ++i) {
      const std::size_t level = i == 0 ? 15 : (i == 1 ? 0 : rng.below(16));
      on_grid.push_back(static_cast<double>(book[level]) * static_cast<double>(scale));
    }
  }
  EXPECT_EQ(nf4_dequantize(nf4_quantize(on_grid)), on_grid);
}

TEST(Nf4Test, TiesGoToLowerIndex) {
  const auto& book = nf4_codebook();
  const double mid = (static_cast<double>(book[7]) + static_cast<double>(book[8])) / 2;
  const std::vector<double> v = {1.0, mid, -mid};
  const auto blocks = nf4_quantize(v);
  EXPECT_EQ(blocks[0].codes[1], 7);
  const double neg_mid = (static_cast<double>(book[6]) + static_cast<double>(book[7])) / 2;
  EXPECT_EQ(nf4_quantize(std::vector<double>{1.0, neg_mid})[0].codes[1], 6);
}

TEST(Nf4Test, GaussianErrorWithinCodebookBound) {
  RngStream rng(4);
  std::vector<double> v(10000);
  for (double& x : v) x = rng.normal();
  const auto blocks = nf4_quantize(v);
  const auto back = nf4_dequantize(blocks);
  double err2 = 0, bound2 = 0, energy = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double scale = blocks[i / kNf4BlockSize].scale;
    const double bound = scale * nf4_max_half_gap();
    EXPECT_LE(std::abs(back[i] - v[i]), bound * (1 + 1e-12));
    EXPECT_LE(std::abs(back[i]), scale);
    err2 += (back[i] - v[i]) * (back[i] - v[i]);
    bound2 += bound * bound;
    energy += v[i] * v[i];
  }
  EXPECT_LT(err2 / energy, bound2 / energy);
  // Quantize -> dequantize -> quantize keeps the codes.
  const auto again = nf4_quantize(back);
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    EXPECT_EQ(again[b].codes, blocks[b].codes);
    EXPECT_EQ(again[b].scale, blocks[b].scale);
  }
}

TEST(Nf4Test, NonFiniteInputRejected) {
  const std::vector<double> v = {1.0, std::numeric_limits<double>::quiet_NaN()};
  EXPECT_THROW(nf4_quantize(v), EncodeError);
  const std::vector<double> w = {std::numeric_limits<double>::infinity()};
  EXPECT_THROW(nf4_quantize(w), EncodeError);
}

TEST(CostModelTest, TableThreeMessageSizes) {
  EXPECT_EQ(kNf4Bits.num * 2, kNf4Bits.den * 9);  // 4.5 bits
  const std::uint64_t lora = 663552;
  const std::uint64_t base = 2750000;
  const auto full = message_bytes(lora, base, kFp32Bits);
  const auto quant = message_bytes(lora, base, kNf4Bits);
  EXPECT_EQ(full, 13654208u);
  EXPECT_EQ(quant, 1920123u);  // ceil(3413552 * 4.5 / 8)
  EXPECT_EQ(human_bytes(full), "13.7 MB");
  EXPECT_EQ(human_bytes(quant), "1.92 MB");
  EXPECT_EQ(human_bytes(full * 2 * 7 * 2, 2), "380 MB");
  EXPECT_EQ(human_bytes(full * 1 * 2 * 2, 2), "55 MB");
  EXPECT_EQ(human_bytes(quant * 1 * 2 * 2, 2), "7.7 MB");
  const auto baseline = message_bytes(0, 250000000, kFp32Bits);
  EXPECT_EQ(baseline, 1000000000u);
  EXPECT_EQ(human_bytes(baseline * 2 * 10 * 2), "40.0 GB");
  EXPECT_NEAR(to_gigabytes(baseline, GbUnit::kBinary), 0.9313225746, 1e-9);
}

TEST(CostModelTest, CeilAtByteBoundary) {
  EXPECT_EQ(message_bytes(0, 0, kFp32Bits), 0u);
  EXPECT_EQ(message_bytes(0, 1, kNf4Bits), 1u);   // 4.5 bits -> 1 byte
  EXPECT_EQ(message_bytes(0, 2, kNf4Bits), 2u);   // 9 bits -> 2 bytes
  EXPECT_EQ(message_bytes(0, 64, kNf4Bits), 36u);
  EXPECT_EQ(message_bytes(1, 1, BitWidth{3, 1}), 1u);
  EXPECT_EQ(message_bytes(0, 3, BitWidth{3, 1}), 2u);
  // Framed NF4 payload agrees with the cost model on whole blocks.
  for (std::uint64_t n : {64u, 128u, 6400u}) {
    EXPECT_EQ(payload_bytes(n, Encoding::kNf4), message_bytes(0, n, kNf4Bits));
  }
}

TEST(CostModelTest, RoundSig) {
  EXPECT_DOUBLE_EQ(round_sig(13.654208, 3), 13.7);
  EXPECT_DOUBLE_EQ(round_sig(382.317824, 2), 380.0);
  EXPECT_DOUBLE_EQ(round_sig(0.0, 3), 0.0);
}

WireMessage sample_message(Encoding e) {
  RngStream rng(5);
  WireMessage m;
  m.round = 7;
  m.direction = Direction::kUp;
  m.encoding = e;
  for (auto [name, r, c] : {std::tuple{"fc0.weight", 3, 5}, std::tuple{"fc1.lora_a", 70, 1}}) {
    NamedTensor t{name, Matrix(r, c)};
    for (double& v : t.values.data()) v = static_cast<double>(static_cast<float>(rng.normal()));
    m.tensors.push_back(std::move(t));
  }
  return m;
}

TEST(FramingTest, Fp32RoundTripIsBitExact) {
  const WireMessage m = sample_message(Encoding::kFp32);
  const auto bytes = encode_message(m);
  // Header, name table, payload.
  const std::size_t names = (2 + 10 + 8) + (2 + 10 + 8);
  EXPECT_EQ(bytes.size(), 16 + names + 4 * (15 + 70));
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "FPUM");
  EXPECT_EQ(bytes[4], 1);   // version, little-endian
  EXPECT_EQ(bytes[6], 1);   // up
  EXPECT_EQ(bytes[7], 0);   // fp32
  EXPECT_EQ(bytes[8], 7);   // round
  EXPECT_EQ(bytes[12], 2);  // tensors
  const WireMessage back = decode_message(bytes);
  EXPECT_EQ(back.tensors, m.tensors);
  EXPECT_EQ(back.round, 7u);
  EXPECT_EQ(back.direction, Direction::kUp);
  EXPECT_EQ(encode_message(back), bytes);
}

TEST(FramingTest, Nf4MatchesCodecRoundTrip) {
  const WireMessage m = sample_message(Encoding::kNf4);
  const auto bytes = encode_message(m);
  EXPECT_EQ(bytes.size(), 16 + 40 + payload_bytes(85, Encoding::kNf4));
  const WireMessage back = decode_message(bytes);
  Params p;
  for (const auto& t : m.tensors) p.push_back(t.values);
  const Params expected = wire_roundtrip(p, Encoding::kNf4);
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_EQ(back.tensors[i].values, expected[i]);
  EXPECT_EQ(encode_message(back), bytes);
}

TEST(FramingTest, CorruptInputRejected) {
  auto bytes = encode_message(sample_message(Encoding::kNf4));
  auto truncated = bytes;
  truncated.pop_back();
  EXPECT_THROW(decode_message(truncated), DecodeError);
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(decode_message(bad), DecodeError);
  bad = bytes;
  bad[7] = 9;
  EXPECT_THROW(decode_message(bad), DecodeError);
}

TEST(FramingTest, Fp32RoundTripCastsThroughFloat) {
  const Params p = {Matrix(1, 2, {0.1, 1.0 / 3.0})};
  const Params q = wire_roundtrip(p, Encoding::kFp32);
  EXPECT_EQ(q[0](0, 0), static_cast<double>(0.1f));
  EXPECT_EQ(wire_roundtrip(q, Encoding::kFp32), q);
  const Params huge = {Matrix(1, 1, 1e300)};
  EXPECT_THROW(wire_roundtrip(huge, Encoding::kFp32), EncodeError);
}

TEST(LedgerTest, TotalsAndCsv) {
  CommLedger ledger;
  EXPECT_EQ(ledger.total_bytes(), 0u);
  for (std::uint32_t r = 1; r <= 2; ++r) {
    for (int k : {3, 5}) {
      ledger.record(r, Direction::kDown, kServer, k, 100, Encoding::kFp32);
      ledger.record(r, Direction::kUp, k, kServer, 128, Encoding::kNf4);
    }
  }
  EXPECT_EQ(ledger.entries().size(), 8u);  // K x 2 per round
  EXPECT_EQ(ledger.bytes_in_round(1), 2 * 400u + 2 * 72u);
  EXPECT_EQ(ledger.total_bytes(), 2 * (2 * 400u + 2 * 72u));
  std::ostringstream csv;
  ledger.write_csv(csv);
  const std::string s = csv.str();
  EXPECT_EQ(s.substr(0, s.find('\n')), "round,direction,sender,receiver,bytes");
  EXPECT_NE(s.find("1,down,server,client3,400\n"), std::string::npos);
  EXPECT_NE(s.find("2,up,client5,server,72\n"), std::string::npos);
  EXPECT_NE(ledger.summary_json().find("\"total_bytes\": 1888"), std::string::npos);
}

}  // namespace
}  // namespace fedpriv
