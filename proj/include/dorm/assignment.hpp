#pragma once

// Linear assignment: maximize sum_k C(pi[k], k) over permutations, where
// C(i, j) is the utility of placing document i at position j.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "dorm/error.hpp"
#include "dorm/matrix.hpp"
#include "dorm/ranking.hpp"

namespace dorm {

struct AssignmentResult {
  Permutation pi;  // position -> document
  double value = 0.0;
  // Optimal LP dual: row_dual[i] + col_dual[j] >= C(i, j) and
  // sum(row_dual) + sum(col_dual) == value. Empty when the solver does not
  // produce a certificate (brute force).
  std::vector<double> row_dual;
  std::vector<double> col_dual;
};

// C(i, j) = c[j] * g[i] - a[j] * b[i]
inline Matrix make_cost_matrix(std::span<const double> c,
                               std::span<const double> g,
                               std::span<const double> a,
                               std::span<const double> b) {
  const std::size_t l = g.size();
  if (c.size() != l || a.size() != l || b.size() != l) {
    throw DimensionError("make_cost_matrix: length mismatch");
  }
  Matrix m(l, l);
  for (std::size_t i = 0; i < l; ++i) {
    for (std::size_t j = 0; j < l; ++j) m(i, j) = c[j] * g[i] - a[j] * b[i];
  }
  return m;
}

inline double assignment_value(const Matrix& c, const Permutation& pi) {
  double s = 0.0;
  for (std::size_t k = 0; k < pi.size(); ++k) s += c(pi[k], k);
  return s;
}

namespace detail {

inline void require_square_finite(const Matrix& c, const char* who) {
  if (!c.square()) {
    throw DimensionError(std::string(who) + ": cost matrix must be square");
  }
  if (!c.all_finite()) {
    throw DomainError(std::string(who) + ": non-finite cost entry");
  }
}

// Shortest-augmenting-path Hungarian method on the minimization problem
// min sum_j cost(p[j], j). Potentials satisfy u[i] + v[j] <= cost(i, j) with
// equality on the matching. Returns doc-per-position.
struct MinAssignment {
  std::vector<std::size_t> doc_at;
  std::vector<double> u, v;
};

inline MinAssignment hungarian_min(const Matrix& cost) {
  const std::size_t n = cost.rows();
  constexpr double kInf = std::numeric_limits<double>::infinity();
  // 1-based with a sentinel column 0, as in the classic formulation.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), kInf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  MinAssignment out;
  out.doc_at.resize(n);
  for (std::size_t j = 1; j <= n; ++j) out.doc_at[j - 1] = p[j] - 1;
  out.u.assign(u.begin() + 1, u.end());
  out.v.assign(v.begin() + 1, v.end());
  return out;
}

// Every optimal assignment is a perfect matching on the edges that are tight
// under an optimal dual. Walk positions in order and give each one the
// smallest document that still admits a perfect tight matching on the
// remaining positions, rerouting along alternating paths.
inline void lexicographic_refine(const Matrix& c,
                                 std::span<const double> row_dual,
                                 std::span<const double> col_dual,
                                 std::vector<std::size_t>& doc_at) {
  const std::size_t n = doc_at.size();
  double scale = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) scale = std::max(scale, std::abs(c(i, j)));
  }
  const double tol = 1e-11 * scale * static_cast<double>(n + 1);
  auto tight = [&](std::size_t i, std::size_t j) {
    return row_dual[i] + col_dual[j] - c(i, j) <= tol;
  };

  std::vector<std::size_t> pos_of(n);
  for (std::size_t j = 0; j < n; ++j) pos_of[doc_at[j]] = j;

  std::vector<std::size_t> from(n);
  std::vector<char> seen(n);
  std::vector<std::size_t> queue;
  queue.reserve(n);

  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t current = doc_at[k];
    for (std::size_t d = 0; d < current; ++d) {
      const std::size_t target = pos_of[d];
      if (target <= k || !tight(d, k)) continue;
      // Search an alternating path that re-seats `current` and frees the
      // position `target` that d leaves, using positions after k only.
      std::fill(seen.begin(), seen.end(), 0);
      queue.clear();
      queue.push_back(current);
      bool found = false;
      std::size_t last_doc = 0;
      for (std::size_t head = 0; head < queue.size() && !found; ++head) {
        const std::size_t x = queue[head];
        for (std::size_t p = k + 1; p < n; ++p) {
          if (seen[p] || !tight(x, p)) continue;
          seen[p] = 1;
          from[p] = x;
          if (p == target) {
            found = true;
            last_doc = x;
            break;
          }
          queue.push_back(doc_at[p]);
        }
      }
      if (!found) continue;
      std::size_t cur_pos = target;
      std::size_t cur_doc = last_doc;
      while (true) {
        const std::size_t old = pos_of[cur_doc];
        doc_at[cur_pos] = cur_doc;
        pos_of[cur_doc] = cur_pos;
        if (cur_doc == current) break;
        cur_pos = old;
        cur_doc = from[cur_pos];
      }
      doc_at[k] = d;
      pos_of[d] = k;
      break;
    }
  }
}

}  // namespace detail

// Exact maximizer of sum_k C(pi[k], k) in O(l^3), certified by an optimal
// dual pair. Among optimal permutations the lexicographically smallest
// mapping is returned.
inline AssignmentResult solve_lap(const Matrix& c) {
  detail::require_square_finite(c, "solve_lap");
  const std::size_t n = c.rows();
  AssignmentResult r;
  if (n == 0) return r;

  Matrix neg(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) neg(i, j) = -c(i, j);
  }
  auto min = detail::hungarian_min(neg);

  r.row_dual.resize(n);
  r.col_dual.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    r.row_dual[i] = -min.u[i];
    r.col_dual[i] = -min.v[i];
  }
  detail::lexicographic_refine(c, r.row_dual, r.col_dual, min.doc_at);
  r.pi = Permutation(std::move(min.doc_at));
  r.value = assignment_value(c, r.pi);
  return r;
}

inline constexpr std::size_t kBruteForceLimit = 10;

// Exhaustive maximum over all l! permutations, visited in lexicographic order
// so the first maximizer found is the lexicographically smallest.
inline AssignmentResult brute_force_lap(const Matrix& c) {
  detail::require_square_finite(c, "brute_force_lap");
  const std::size_t n = c.rows();
  if (n > kBruteForceLimit) {
    throw DomainError("brute_force_lap: l = " + std::to_string(n) +
                      " exceeds the limit of " +
                      std::to_string(kBruteForceLimit));
  }
  std::vector<std::size_t> m(n);
  std::iota(m.begin(), m.end(), std::size_t{0});
  AssignmentResult best;
  best.value = -std::numeric_limits<double>::infinity();
  do {
    double s = 0.0;
    for (std::size_t k = 0; k < n; ++k) s += c(m[k], k);
    if (s > best.value) {
      best.value = s;
      best.pi = Permutation(m);
    }
  } while (std::next_permutation(m.begin(), m.end()));
  if (n == 0) best.value = 0.0;
  return best;
}

// Rank-one special case: with a common non-increasing position weight the
// assignment reduces to sorting g - b in descending order (ties: lower index
// first).
inline Permutation sort_decode(std::span<const double> a,
                               std::span<const double> g,
                               std::span<const double> b) {
  if (a.size() != g.size() || b.size() != g.size()) {
    throw DimensionError("sort_decode: length mismatch");
  }
  std::vector<double> key(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) key[i] = g[i] - b[i];
  std::vector<std::size_t> order(g.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return key[x] > key[y]; });
  return Permutation(std::move(order));
}

}  // namespace dorm
