#pragma once

// Ranking measures of the form score(pi, y) = sum_k a[k] * b[pi[k]], where a
// holds per-position decay coefficients and b per-document gains computed from
// the (descending) grades y. The regret of a permutation is
// loss(pi) = score(identity) - score(pi).

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dorm/error.hpp"
#include "dorm/matrix.hpp"
#include "dorm/ranking.hpp"

namespace dorm {

enum class MeasureKind {
  kWta,
  kMrr,
  kDcg,
  kNdcg,
  kPrecision,
  kEru,
  // NDCG@n with a per-query truncation picked by mwta_truncation().
  kModifiedWta,
};

struct Measure {
  MeasureKind kind = MeasureKind::kNdcg;
  // Required for Precision@n; optional for DCG/NDCG; ignored otherwise.
  std::optional<std::size_t> truncation;
  // ERU viewing halflife (> 1) and neutral vote (>= 0).
  double halflife = 2.0;
  double neutral_vote = 0.0;
  // Base of the logarithm in the DCG discount.
  double log_base = 2.0;
  // Precision@n counts a document as correct when its grade reaches this.
  Grade relevance_threshold = 1;

  static Measure of(MeasureKind kind,
                    std::optional<std::size_t> n = std::nullopt) {
    Measure m;
    m.kind = kind;
    m.truncation = n;
    return m;
  }
  static Measure wta() { return of(MeasureKind::kWta); }
  static Measure mrr() { return of(MeasureKind::kMrr); }
  static Measure dcg(std::optional<std::size_t> n = std::nullopt) {
    return of(MeasureKind::kDcg, n);
  }
  static Measure ndcg(std::optional<std::size_t> n = std::nullopt) {
    return of(MeasureKind::kNdcg, n);
  }
  static Measure precision(std::size_t n) {
    return of(MeasureKind::kPrecision, n);
  }
  static Measure eru(double halflife, double neutral_vote) {
    Measure m = of(MeasureKind::kEru);
    m.halflife = halflife;
    m.neutral_vote = neutral_vote;
    return m;
  }
  static Measure modified_wta() { return of(MeasureKind::kModifiedWta); }

  friend bool operator==(const Measure&, const Measure&) = default;
};

inline void validate(const Measure& m) {
  if (m.truncation && *m.truncation < 1) {
    throw DomainError("measure truncation must be >= 1");
  }
  if (m.kind == MeasureKind::kPrecision && !m.truncation) {
    throw DomainError("Precision@n requires a truncation level");
  }
  if (m.kind == MeasureKind::kEru) {
    if (!(m.halflife > 1.0) || !std::isfinite(m.halflife)) {
      throw DomainError("ERU halflife must be > 1");
    }
    if (!(m.neutral_vote >= 0.0) || !std::isfinite(m.neutral_vote)) {
      throw DomainError("ERU neutral vote must be >= 0");
    }
  }
  if (!(m.log_base > 1.0)) throw DomainError("log base must be > 1");
}

namespace detail {

inline std::string format_real(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline std::size_t parse_count(std::string_view s, std::string_view whole) {
  std::size_t n = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), n);
  if (ec != std::errc() || p != s.data() + s.size() || n < 1) {
    throw ParseError("bad truncation in measure '" + std::string(whole) + "'");
  }
  return n;
}

inline double parse_real(std::string_view s, std::string_view whole) {
  std::string tmp(s);
  char* end = nullptr;
  double v = std::strtod(tmp.c_str(), &end);
  if (tmp.empty() || end != tmp.c_str() + tmp.size() || !std::isfinite(v)) {
    throw ParseError("bad number in measure '" + std::string(whole) + "'");
  }
  return v;
}

}  // namespace detail

// Accepts: wta | mrr | dcg | dcg@N | ndcg | ndcg@N | prec@N | eru:ALPHA:D | mwta
inline Measure parse_measure(std::string_view text) {
  auto at = text.find('@');
  std::string_view head = text.substr(0, at);
  std::optional<std::size_t> n;
  if (at != std::string_view::npos) {
    n = detail::parse_count(text.substr(at + 1), text);
  }
  Measure m;
  if (head == "wta" && !n) {
    m = Measure::wta();
  } else if (head == "mrr" && !n) {
    m = Measure::mrr();
  } else if (head == "dcg") {
    m = Measure::dcg(n);
  } else if (head == "ndcg") {
    m = Measure::ndcg(n);
  } else if (head == "prec" && n) {
    m = Measure::precision(*n);
  } else if (head == "mwta" && !n) {
    m = Measure::modified_wta();
  } else if (head.starts_with("eru:") && !n) {
    auto rest = head.substr(4);
    auto colon = rest.find(':');
    if (colon == std::string_view::npos) {
      throw ParseError("ERU measure must be eru:ALPHA:D, got '" +
                       std::string(text) + "'");
    }
    m = Measure::eru(detail::parse_real(rest.substr(0, colon), text),
                     detail::parse_real(rest.substr(colon + 1), text));
  } else {
    throw ParseError("unknown measure '" + std::string(text) + "'");
  }
  try {
    validate(m);
  } catch (const DomainError& e) {
    throw ParseError(e.what());
  }
  return m;
}

inline std::string to_string(const Measure& m) {
  auto suffix = [&] {
    return m.truncation ? "@" + std::to_string(*m.truncation) : std::string();
  };
  switch (m.kind) {
    case MeasureKind::kWta: return "wta";
    case MeasureKind::kMrr: return "mrr";
    case MeasureKind::kDcg: return "dcg" + suffix();
    case MeasureKind::kNdcg: return "ndcg" + suffix();
    case MeasureKind::kPrecision: return "prec" + suffix();
    case MeasureKind::kEru:
      return "eru:" + detail::format_real(m.halflife) + ":" +
             detail::format_real(m.neutral_vote);
    case MeasureKind::kModifiedWta: return "mwta";
  }
  return "?";
}

// Truncation for the modified WTA measure. With two or more grade levels among
// the top three documents the truncation is 3; otherwise it extends to the
// first position holding the next lower grade, so that at least one
// lower-ranked document is included. Constant labels give l.
inline std::size_t mwta_truncation(std::span<const Grade> y) {
  const std::size_t l = y.size();
  const std::size_t top = std::min<std::size_t>(3, l);
  for (std::size_t k = 1; k < top; ++k) {
    if (y[k] != y[0]) return top;
  }
  for (std::size_t k = top; k < l; ++k) {
    if (y[k] != y[0]) return k + 1;
  }
  return l;
}

// Replaces per-query kinds by their concrete measure on grades y.
inline Measure resolve(const Measure& m, std::span<const Grade> y) {
  if (m.kind != MeasureKind::kModifiedWta) return m;
  Measure r = Measure::ndcg(mwta_truncation(y));
  r.log_base = m.log_base;
  return r;
}

// Position decay coefficients a[0..l-1].
inline std::vector<double> decay_vector(const Measure& m, std::size_t l) {
  validate(m);
  if (m.kind == MeasureKind::kModifiedWta) {
    throw DomainError("mwta decay depends on the labels; resolve() it first");
  }
  std::vector<double> a(l, 0.0);
  const std::size_t cut =
      m.truncation ? std::min(*m.truncation, l) : l;
  const double log_scale = std::log(m.log_base);
  for (std::size_t k = 0; k < l; ++k) {
    const double i = static_cast<double>(k + 1);
    switch (m.kind) {
      case MeasureKind::kWta: a[k] = k == 0 ? 1.0 : 0.0; break;
      case MeasureKind::kMrr: a[k] = 1.0 / i; break;
      case MeasureKind::kDcg:
      case MeasureKind::kNdcg:
        a[k] = k < cut ? log_scale / std::log(i + 1.0) : 0.0;
        break;
      case MeasureKind::kPrecision:
        a[k] = k < cut ? 1.0 / static_cast<double>(*m.truncation) : 0.0;
        break;
      case MeasureKind::kEru:
        a[k] = std::exp2((1.0 - i) / (m.halflife - 1.0));
        break;
      case MeasureKind::kModifiedWta: break;
    }
  }
  return a;
}

inline double dcg_gain(Grade r) { return std::exp2(static_cast<double>(r)) - 1.0; }

// Per-document gains b for grades y (descending).
inline std::vector<double> gain_vector(const Measure& measure,
                                       std::span<const Grade> y) {
  const Measure m = resolve(measure, y);
  validate(m);
  const std::size_t l = y.size();
  std::vector<double> b(l, 0.0);
  if (l == 0) return b;
  switch (m.kind) {
    case MeasureKind::kWta:
      for (std::size_t k = 0; k < l; ++k) b[k] = y[k] == y[0] ? 1.0 : 0.0;
      break;
    case MeasureKind::kMrr:
      // Only the first top-graded document counts.
      b[0] = 1.0;
      break;
    case MeasureKind::kDcg:
      for (std::size_t k = 0; k < l; ++k) b[k] = dcg_gain(y[k]);
      break;
    case MeasureKind::kNdcg: {
      const auto a = decay_vector(m, l);
      double ideal = 0.0;
      for (std::size_t k = 0; k < l; ++k) {
        b[k] = dcg_gain(y[k]);
        ideal += a[k] * b[k];
      }
      if (!(ideal > 0.0)) {
        throw DegenerateQueryError(
            "NDCG is undefined for a query without relevant documents");
      }
      for (double& g : b) g /= ideal;
      break;
    }
    case MeasureKind::kPrecision:
      for (std::size_t k = 0; k < l; ++k) {
        b[k] = y[k] >= m.relevance_threshold ? 1.0 : 0.0;
      }
      break;
    case MeasureKind::kEru:
      for (std::size_t k = 0; k < l; ++k) {
        b[k] = std::max(static_cast<double>(y[k]) - m.neutral_vote, 0.0);
      }
      break;
    case MeasureKind::kModifiedWta: break;
  }
  return b;
}

// True when more than one document shares the top grade; MRR then only
// credits the first of them.
inline bool has_tied_top(std::span<const Grade> y) {
  return y.size() > 1 && y[1] == y[0];
}

struct ScoreVectors {
  std::vector<double> a;  // decay per position
  std::vector<double> b;  // gain per document
};

inline ScoreVectors score_vectors(const Measure& measure,
                                  std::span<const Grade> y) {
  const Measure m = resolve(measure, y);
  return {decay_vector(m, y.size()), gain_vector(m, y)};
}

inline double score(const ScoreVectors& sv, const Permutation& pi) {
  if (pi.size() != sv.b.size() || sv.a.size() != sv.b.size()) {
    throw DimensionError("score: length mismatch");
  }
  double s = 0.0;
  for (std::size_t k = 0; k < pi.size(); ++k) s += sv.a[k] * sv.b[pi[k]];
  return s;
}

inline double ideal_score(const ScoreVectors& sv) {
  return score(sv, Permutation::identity(sv.b.size()));
}

inline double loss(const ScoreVectors& sv, const Permutation& pi) {
  return ideal_score(sv) - score(sv, pi);
}

inline double score(const Measure& m, const Permutation& pi,
                    std::span<const Grade> y) {
  return score(score_vectors(m, y), pi);
}

inline double loss(const Measure& m, const Permutation& pi,
                   std::span<const Grade> y) {
  return loss(score_vectors(m, y), pi);
}

// Cost matrix C(i, j) = -a[j] * b[i] of placing document i at position j.
// With it, loss(pi) == ideal_score + position_cost_loss(C, pi).
inline Matrix position_cost(const ScoreVectors& sv) {
  const std::size_t l = sv.b.size();
  Matrix c(l, l);
  for (std::size_t i = 0; i < l; ++i) {
    for (std::size_t j = 0; j < l; ++j) c(i, j) = -sv.a[j] * sv.b[i];
  }
  return c;
}

// sum_k C(pi[k], k)
inline double position_cost_loss(const Matrix& c, const Permutation& pi) {
  if (!c.square() || c.rows() != pi.size()) {
    throw DimensionError("position_cost_loss: cost matrix is not l x l");
  }
  double s = 0.0;
  for (std::size_t k = 0; k < pi.size(); ++k) s += c(pi[k], k);
  return s;
}

}  // namespace dorm
