#pragma once

// Joint feature map Phi(q, pi) = sum_k c[k] * x_{pi[k]} built from per-document
// feature vectors x and a decreasing position decay c. With a linear weight w,
// <w, Phi(q, pi)> = sum_k c[k] * g[pi[k]] where g = X w, which any decreasing
// c maximizes by sorting g in descending order.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dorm/error.hpp"
#include "dorm/matrix.hpp"
#include "dorm/measures.hpp"
#include "dorm/ranking.hpp"

namespace dorm {

enum class DecayKind { kPower, kLog, kLogLog };

struct DecayScheme {
  DecayKind kind = DecayKind::kPower;
  double exponent = 0.5;  // power scheme only

  static DecayScheme power(double d) { return {DecayKind::kPower, d}; }
  static DecayScheme log() { return {DecayKind::kLog, 0.0}; }
  static DecayScheme loglog() { return {DecayKind::kLogLog, 0.0}; }

  friend bool operator==(const DecayScheme&, const DecayScheme&) = default;
};

// c[k] for positions i = k + 1:
//   power:  (i + 1)^-d
//   log:    1 / log(i + 2)
//   loglog: 1 / log(log(i + 2))
inline std::vector<double> decay(const DecayScheme& scheme, std::size_t l) {
  if (scheme.kind == DecayKind::kPower &&
      !(scheme.exponent > 0.0 && std::isfinite(scheme.exponent))) {
    throw DomainError("power decay exponent must be > 0");
  }
  std::vector<double> c(l);
  for (std::size_t k = 0; k < l; ++k) {
    const double i = static_cast<double>(k + 1);
    switch (scheme.kind) {
      case DecayKind::kPower: c[k] = std::pow(i + 1.0, -scheme.exponent); break;
      case DecayKind::kLog: c[k] = 1.0 / std::log(i + 2.0); break;
      case DecayKind::kLogLog: c[k] = 1.0 / std::log(std::log(i + 2.0)); break;
    }
  }
  return c;
}

// Accepts: pow:D | log | loglog
inline DecayScheme parse_decay(std::string_view text) {
  if (text == "log") return DecayScheme::log();
  if (text == "loglog") return DecayScheme::loglog();
  if (text.starts_with("pow:")) {
    const double d = detail::parse_real(text.substr(4), text);
    if (!(d > 0.0)) throw ParseError("power decay exponent must be > 0");
    return DecayScheme::power(d);
  }
  throw ParseError("unknown decay scheme '" + std::string(text) + "'");
}

inline std::string to_string(const DecayScheme& s) {
  switch (s.kind) {
    case DecayKind::kPower: return "pow:" + detail::format_real(s.exponent);
    case DecayKind::kLog: return "log";
    case DecayKind::kLogLog: return "loglog";
  }
  return "?";
}

using WeightVector = std::vector<double>;

// g[k] = <w, x_k> in sorted-label order.
inline std::vector<double> doc_scores(std::span<const double> w,
                                      const Query& q) {
  if (w.size() != q.dimension()) {
    throw DimensionError("doc_scores: weight dimension " +
                         std::to_string(w.size()) + " vs feature dimension " +
                         std::to_string(q.dimension()));
  }
  std::vector<double> g(q.size());
  for (std::size_t k = 0; k < q.size(); ++k) g[k] = dot(w, q.document(k));
  return g;
}

inline std::vector<double> joint_feature(const Query& q, const Permutation& pi,
                                         std::span<const double> c) {
  if (pi.size() != q.size() || c.size() != q.size()) {
    throw DimensionError("joint_feature: length mismatch");
  }
  std::vector<double> phi(q.dimension(), 0.0);
  for (std::size_t k = 0; k < pi.size(); ++k) {
    if (c[k] != 0.0) axpy(c[k], q.document(pi[k]), phi);
  }
  return phi;
}

// <c(pi), g> = sum_k c[k] * g[pi[k]]
inline double permuted_inner(std::span<const double> c,
                             std::span<const double> g, const Permutation& pi) {
  double s = 0.0;
  for (std::size_t k = 0; k < pi.size(); ++k) s += c[k] * g[pi[k]];
  return s;
}

// Sorts documents by descending score. Ties go to the document that came
// first in the input file, so a constant scorer reproduces file order.
inline Permutation rank_by_scores(std::span<const double> g,
                                  const Permutation& file_order) {
  std::vector<std::size_t> order(g.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    if (g[x] != g[y]) return g[x] > g[y];
    return file_order[x] < file_order[y];
  });
  return Permutation(std::move(order));
}

inline Permutation predict_ranking(std::span<const double> w, const Query& q) {
  return rank_by_scores(doc_scores(w, q), q.file_order());
}

}  // namespace dorm
