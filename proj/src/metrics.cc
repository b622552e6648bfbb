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

#include "fedpriv/metrics.h"

#include <algorithm>
#include <cctype>

#include "fedpriv/errors.h"

namespace fedpriv {

std::size_t levenshtein(std::string_view a, std::string_view b) {
  if (a.size() < b.size()) std::swap(a, b);
  std::vector<std::size_t> prev(b.size() + 1);
  std::vector<std::size_t> curr(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    curr[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t substitute = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      curr[j] = std::min({prev[j] + 1, curr[j - 1] + 1, substitute});
    }
    std::swap(prev, curr);
  }
  return prev[b.size()];
}

std::string normalize_answer(std::string_view s) {
  const auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

double anls(std::string_view prediction, std::span<const std::string> golds,
            const AnlsOptions& options) {
  if (golds.empty()) throw ConfigError("anls: at least one gold answer is required");
  const std::string pred =
      options.normalize ? normalize_answer(prediction) : std::string(prediction);
  double best = 0.0;
  for (const std::string& raw : golds) {
    const std::string gold = options.normalize ? normalize_answer(raw) : raw;
    const std::size_t longest = std::max(pred.size(), gold.size());
    const double nl = longest == 0 ? 0.0
                                   : static_cast<double>(levenshtein(pred, gold)) /
                                         static_cast<double>(longest);
    const double score = nl < options.threshold ? 1.0 - nl : 0.0;
    best = std::max(best, score);
  }
  return best;
}

EvalResult evaluate_answers(std::span<const std::string> predictions,
                            std::span<const std::vector<std::string>> golds,
                            const AnlsOptions& options) {
  if (predictions.size() != golds.size()) {
    throw ConfigError("evaluate_answers: predictions and golds differ in length");
  }
  EvalResult result;
  result.n = predictions.size();
  if (result.n == 0) return result;
  double exact = 0.0;
  double anls_sum = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const std::string pred = options.normalize ? normalize_answer(predictions[i])
                                               : predictions[i];
    const bool hit = std::any_of(golds[i].begin(), golds[i].end(), [&](const std::string& g) {
      return (options.normalize ? normalize_answer(g) : g) == pred;
    });
    exact += hit ? 1.0 : 0.0;
    anls_sum += anls(predictions[i], golds[i], options);
  }
  result.accuracy = exact / static_cast<double>(result.n);
  result.anls = anls_sum / static_cast<double>(result.n);
  return result;
}

}  // namespace fedpriv
