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

#ifndef FEDPRIV_METRICS_H_
#define FEDPRIV_METRICS_H_

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fedpriv {

// Unit-cost insert/delete/substitute distance over bytes.
std::size_t levenshtein(std::string_view a, std::string_view b);

struct AnlsOptions {
  double threshold = 0.5;
  // Lowercase (ASCII) and trim surrounding whitespace before comparing.
  bool normalize = true;
};

std::string normalize_answer(std::string_view s);

// Max over golds of 1 - NL(pred, gold), NL = levenshtein / max length. A gold
// whose NL reaches the threshold scores 0. Two empty strings score 1.
double anls(std::string_view prediction, std::span<const std::string> golds,
            const AnlsOptions& options = {});

struct EvalResult {
  double accuracy = 0.0;
  double anls = 0.0;
  std::size_t n = 0;
};

// Dataset-level accuracy (exact match after normalisation) and mean ANLS.
// `golds[i]` holds the accepted answers for question i.
EvalResult evaluate_answers(std::span<const std::string> predictions,
                            std::span<const std::vector<std::string>> golds,
                            const AnlsOptions& options = {});

}  // namespace fedpriv

#endif  // FEDPRIV_METRICS_H_
