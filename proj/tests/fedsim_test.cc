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

#include "fedpriv/fedsim.h"

#include <cmath>
#include <set>
#include <sstream>

#include "fedpriv/errors.h"
#include "gtest/gtest.h"

namespace fedpriv {
namespace {

SyntheticConfig small_config() {
  SyntheticConfig c;
  c.n_clients = 4;
  c.providers_per_client = {3, 5, 2, 4};
  c.records_per_provider_min = 2;
  c.records_per_provider_max = 6;
  c.feature_dim = 5;
  c.n_classes = 4;
  c.validation_seen_providers = 3;
  c.validation_unseen_providers = 2;
  c.validation_records_per_provider = 3;
  c.seed = 123;
  return c;
}

std::string to_jsonl(const FederatedDataset& ds) {
  std::ostringstream out;
  write_jsonl(ds, out);
  return out.str();
}

TEST(FedsimTest, DocVqaProviderCounts) {
  SyntheticConfig c;
  c.providers_per_client.assign(kDocVqaProviderCounts.begin(), kDocVqaProviderCounts.end());
  c.records_per_provider_min = c.records_per_provider_max = 1;
  c.feature_dim = 2;
  const FederatedDataset ds = generate_synthetic(c);
  ASSERT_EQ(ds.clients.size(), 10u);
  for (std::size_t k = 0; k < 10; ++k) {
    EXPECT_EQ(static_cast<int>(ds.clients[k].groups.size()), kDocVqaProviderCounts[k]);
  }
  EXPECT_EQ(min_group_count(ds), 400u);
  FederatedDataset fewer = ds;
  fewer.clients[0].groups.pop_back();
  EXPECT_EQ(min_group_count(fewer), 399u);
}

TEST(FedsimTest, SingleProviderClient) {
  SyntheticConfig c;
  c.n_clients = 1;
  c.providers_per_client = {1};
  EXPECT_EQ(min_group_count(generate_synthetic(c)), 1u);
}

TEST(FedsimTest, PartitionAndInvariants) {
  const FederatedDataset ds = generate_synthetic(small_config());
  EXPECT_NO_THROW(ds.validate());
  std::set<std::int64_t> train_ids;
  for (const auto& client : ds.clients) {
    for (const auto& g : client.groups) {
      EXPECT_TRUE(train_ids.insert(g.provider_id).second);
      EXPECT_GE(g.records.size(), 2u);
      EXPECT_LE(g.records.size(), 6u);
      for (const auto& r : g.records) {
        EXPECT_EQ(r.answer, ds.vocabulary[r.answer_id]);
        for (double v : r.features) EXPECT_TRUE(std::isfinite(v));
      }
    }
  }
  ASSERT_EQ(ds.validation.size(), 5u);
  for (int i = 0; i < 3; ++i) EXPECT_TRUE(train_ids.count(ds.validation[i].provider_id));
  for (int i = 3; i < 5; ++i) EXPECT_FALSE(train_ids.count(ds.validation[i].provider_id));
  EXPECT_EQ(ds.validation_records().size(), 15u);
  EXPECT_EQ(std::set<std::string>(ds.vocabulary.begin(), ds.vocabulary.end()).size(), 4u);
}

TEST(FedsimTest, DeterministicByteIdentical) {
  const auto a = to_jsonl(generate_synthetic(small_config()));
  const auto b = to_jsonl(generate_synthetic(small_config()));
  EXPECT_EQ(a, b);
  SyntheticConfig other = small_config();
  other.seed = 124;
  EXPECT_NE(a, to_jsonl(generate_synthetic(other)));
}

TEST(FedsimTest, JsonlRoundTripIsExact) {
  const FederatedDataset ds = generate_synthetic(small_config());
  std::istringstream in(to_jsonl(ds));
  EXPECT_EQ(read_jsonl(in), ds);
}

TEST(FedsimTest, MalformedJsonlReportsLine) {
  std::istringstream in(
      "{\"split\":\"train\",\"client_id\":0,\"provider_id\":0,\"answer_id\":0,"
      "\"answer\":\"a\",\"features\":[1]}\n{not json}\n");
  try {
    read_jsonl(in);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

TEST(FedsimTest, ZeroProvidersRejected) {
  SyntheticConfig c = small_config();
  c.providers_per_client = {3, 0, 2, 4};
  EXPECT_THROW(generate_synthetic(c), ConfigError);
}

// With heterogeneity 0 every provider draws from the same distribution:
// a Welch test on per-feature means of two disjoint provider halves must not
// reject at a Bonferroni-corrected level.
TEST(FedsimTest, ZeroHeterogeneityProvidersAreExchangeable) {
  SyntheticConfig c;
  c.n_clients = 2;
  c.providers_per_client = {40};
  c.records_per_provider_min = c.records_per_provider_max = 50;
  c.feature_dim = 6;
  c.heterogeneity = 0.0;
  c.seed = 3;
  const FederatedDataset ds = generate_synthetic(c);
  for (int j = 0; j < c.feature_dim; ++j) {
    double s[2] = {0, 0}, s2[2] = {0, 0}, n[2] = {0, 0};
    for (int k = 0; k < 2; ++k) {
      for (const auto& g : ds.clients[k].groups) {
        for (const auto& r : g.records) {
          s[k] += r.features[j];
          s2[k] += r.features[j] * r.features[j];
          n[k] += 1;
        }
      }
    }
    const double m0 = s[0] / n[0], m1 = s[1] / n[1];
    const double v0 = s2[0] / n[0] - m0 * m0, v1 = s2[1] / n[1] - m1 * m1;
    const double t = (m0 - m1) / std::sqrt(v0 / n[0] + v1 / n[1]);
    EXPECT_LT(std::abs(t), 3.5) << "feature " << j;
  }

  // Contrast: strong heterogeneity spreads provider means far apart.
  c.heterogeneity = 1.0;
  const FederatedDataset het = generate_synthetic(c);
  double spread = 0;
  for (const auto& g : het.clients[0].groups) {
    double m = 0;
    for (const auto& r : g.records) m += r.features[0];
    m /= g.records.size();
    spread += m * m;
  }
  EXPECT_GT(spread / het.clients[0].groups.size(), 0.5);
}

}  // namespace
}  // namespace fedpriv
