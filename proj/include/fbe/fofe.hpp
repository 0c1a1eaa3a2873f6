#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "fbe/errors.hpp"

namespace fbe {

/// Default max-norm tolerance used when comparing encodings for equality.
inline constexpr double kEncodingTolerance = 1e-9;

struct FofeConfig {
  std::size_t alphabet_size = 1;
  double forgetting_factor = 0.5;

  void validate() const {
    if (alphabet_size < 1) throw InputError("FOFE alphabet size must be at least 1");
    if (!(forgetting_factor > 0.0 && forgetting_factor < 1.0))
      throw InputError("forgetting factor must lie strictly between 0 and 1, got " +
                       std::to_string(forgetting_factor));
  }
};

using FofeVector = std::vector<double>;

/// Largest absolute componentwise difference. Sizes must agree.
inline double max_norm_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw InputError("max-norm distance: vector sizes differ");
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

/// V_0 = 0, V_t = rho * V_{t-1} + onehot(w_t); returns V_T.
inline FofeVector fofe_encode(const FofeConfig& config, std::span<const std::size_t> sequence) {
  config.validate();
  FofeVector v(config.alphabet_size, 0.0);
  for (std::size_t t = 0; t < sequence.size(); ++t) {
    if (sequence[t] >= config.alphabet_size)
      throw InputError("symbol " + std::to_string(sequence[t]) + " at position " +
                       std::to_string(t) + " is outside alphabet of size " +
                       std::to_string(config.alphabet_size));
    for (auto& x : v) x *= config.forgetting_factor;
    v[sequence[t]] += 1.0;
  }
  return v;
}

struct DecodeOptions {
  std::size_t max_len = 8;
  double tolerance = kEncodingTolerance;
  /// Upper bound on the number of sequences the search may visit.
  std::size_t budget = 50'000'000;
};

inline constexpr std::size_t kMaxDecodeLength = 12;

/// Exhaustively enumerates every sequence of length <= max_len and returns those whose
/// encoding lies within `tolerance` (max-norm) of `target`, in lexicographic order.
inline std::vector<std::vector<std::size_t>> fofe_decode_bruteforce(
    const FofeConfig& config, std::span<const double> target, const DecodeOptions& options = {}) {
  config.validate();
  if (target.size() != config.alphabet_size)
    throw InputError("decode target has length " + std::to_string(target.size()) +
                     ", expected " + std::to_string(config.alphabet_size));
  if (options.max_len > kMaxDecodeLength)
    throw InputError("decode max_len " + std::to_string(options.max_len) + " exceeds " +
                     std::to_string(kMaxDecodeLength));
  if (!(options.tolerance > 0.0)) throw InputError("decode tolerance must be positive");

  // Total = sum_{i=0}^{max_len} K^i, computed with saturation against the budget.
  std::size_t total = 0;
  std::size_t layer = 1;
  for (std::size_t len = 0; len <= options.max_len; ++len) {
    total += layer;
    if (total > options.budget)
      throw ResourceError("decode search space exceeds budget of " +
                          std::to_string(options.budget) + " sequences");
    if (len < options.max_len) {
      if (layer > options.budget / config.alphabet_size + 1)
        throw ResourceError("decode search space exceeds budget of " +
                            std::to_string(options.budget) + " sequences");
      layer *= config.alphabet_size;
    }
  }

  const std::size_t k = config.alphabet_size;
  const double rho = config.forgetting_factor;
  std::vector<std::vector<std::size_t>> matches;
  std::vector<std::size_t> prefix;
  // encodings[d] holds the encoding of the current prefix of length d.
  std::vector<FofeVector> encodings(options.max_len + 1, FofeVector(k, 0.0));

  auto visit = [&](auto&& self, std::size_t depth) -> void {
    if (max_norm_distance(encodings[depth], target) <= options.tolerance) matches.push_back(prefix);
    if (depth == options.max_len) return;
    for (std::size_t w = 0; w < k; ++w) {
      auto& next = encodings[depth + 1];
      for (std::size_t i = 0; i < k; ++i) next[i] = rho * encodings[depth][i];
      next[w] += 1.0;
      prefix.push_back(w);
      self(self, depth + 1);
      prefix.pop_back();
    }
  };
  visit(visit, 0);
  return matches;
}

}  // namespace fbe
