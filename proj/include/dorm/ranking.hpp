#pragma once

// Queries, documents, relevance labels and permutations.
//
// Conventions: everything is 0-based in code. A Permutation maps a rank
// position k to the document placed there, so for a vector v indexed by
// document, apply_permutation(v, pi)[k] == v[pi[k]]. Inside a Query the
// documents are stored in descending-label order, which makes the identity
// permutation the ideal ranking.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dorm/error.hpp"
#include "dorm/matrix.hpp"

namespace dorm {

class Permutation {
 public:
  Permutation() = default;

  // Throws DomainError unless `mapping` is a bijection on {0..l-1}.
  explicit Permutation(std::vector<std::size_t> mapping)
      : mapping_(std::move(mapping)) {
    std::vector<char> seen(mapping_.size(), 0);
    for (std::size_t v : mapping_) {
      if (v >= mapping_.size() || seen[v]) {
        throw DomainError("Permutation: mapping is not a bijection");
      }
      seen[v] = 1;
    }
  }

  static Permutation identity(std::size_t l) {
    std::vector<std::size_t> m(l);
    std::iota(m.begin(), m.end(), std::size_t{0});
    Permutation p;
    p.mapping_ = std::move(m);
    return p;
  }

  std::size_t size() const { return mapping_.size(); }
  std::size_t operator[](std::size_t position) const {
    return mapping_[position];
  }
  const std::vector<std::size_t>& mapping() const { return mapping_; }

  bool is_identity() const {
    for (std::size_t k = 0; k < mapping_.size(); ++k) {
      if (mapping_[k] != k) return false;
    }
    return true;
  }

  Permutation inverse() const {
    std::vector<std::size_t> inv(mapping_.size());
    for (std::size_t k = 0; k < mapping_.size(); ++k) inv[mapping_[k]] = k;
    Permutation p;
    p.mapping_ = std::move(inv);
    return p;
  }

  friend bool operator==(const Permutation&, const Permutation&) = default;
  friend auto operator<=>(const Permutation&, const Permutation&) = default;

 private:
  std::vector<std::size_t> mapping_;
};

// output[k] = v[pi[k]]
template <typename T>
std::vector<T> apply_permutation(std::span<const T> v, const Permutation& pi) {
  if (v.size() != pi.size()) {
    throw DimensionError("apply_permutation: length mismatch");
  }
  std::vector<T> out(v.size());
  for (std::size_t k = 0; k < v.size(); ++k) out[k] = v[pi[k]];
  return out;
}

template <typename T>
std::vector<T> apply_permutation(const std::vector<T>& v,
                                 const Permutation& pi) {
  return apply_permutation(std::span<const T>(v), pi);
}

// (outer o inner)(k) = outer[inner[k]]
inline Permutation compose(const Permutation& outer, const Permutation& inner) {
  if (outer.size() != inner.size()) {
    throw DimensionError("compose: length mismatch");
  }
  std::vector<std::size_t> m(inner.size());
  for (std::size_t k = 0; k < m.size(); ++k) m[k] = outer[inner[k]];
  return Permutation(std::move(m));
}

using Grade = int;

// One query: its documents' feature vectors and expert grades, stored in
// descending-grade order. Immutable once built.
class Query {
 public:
  Query() = default;

  const std::string& id() const { return id_; }
  std::size_t size() const { return labels_.size(); }
  std::size_t dimension() const { return features_.cols(); }

  // Grades, descending.
  const std::vector<Grade>& labels() const { return labels_; }
  // Row k holds the features of the document at sorted position k.
  const Matrix& features() const { return features_; }
  std::span<const double> document(std::size_t k) const {
    return features_.row(k);
  }
  // file_order()[k] is the position in the input of sorted document k.
  const Permutation& file_order() const { return file_order_; }
  // Source-block id per sorted document; empty when the query carries no
  // source annotation.
  const std::vector<std::size_t>& blocks() const { return blocks_; }

  // Same query with every feature row replaced (e.g. after standardization).
  Query with_features(Matrix features) const {
    if (features.rows() != size()) {
      throw DimensionError("Query::with_features: row count mismatch");
    }
    Query q = *this;
    q.features_ = std::move(features);
    return q;
  }

  friend std::pair<Query, Permutation> sort_by_relevance(
      std::string id, std::span<const Grade> labels, const Matrix& features,
      Grade max_grade, std::vector<std::size_t> blocks);

 private:
  std::string id_;
  std::vector<Grade> labels_;
  Matrix features_;
  Permutation file_order_;
  std::vector<std::size_t> blocks_;
};

// Sorts documents by descending grade, stable on ties (earlier input
// position first). Returns the query and the permutation from input order to
// sorted order, i.e. sorted[k] = input[perm[k]]. `features` has one row per
// document in input order. `blocks`, if non-empty, gives a source-block id
// per input document.
inline std::pair<Query, Permutation> sort_by_relevance(
    std::string id, std::span<const Grade> labels, const Matrix& features,
    Grade max_grade, std::vector<std::size_t> blocks = {}) {
  const std::size_t l = labels.size();
  if (l == 0) throw DomainError("sort_by_relevance: query has no documents");
  if (features.rows() != l) {
    throw DimensionError("sort_by_relevance: " + std::to_string(l) +
                         " labels but " + std::to_string(features.rows()) +
                         " feature rows");
  }
  if (!blocks.empty() && blocks.size() != l) {
    throw DimensionError("sort_by_relevance: block list length mismatch");
  }
  for (Grade r : labels) {
    if (r < 0 || r > max_grade) {
      throw DomainError("sort_by_relevance: grade " + std::to_string(r) +
                        " outside [0, " + std::to_string(max_grade) + "]");
    }
  }
  if (!features.all_finite()) {
    throw DomainError("sort_by_relevance: non-finite feature value");
  }

  std::vector<std::size_t> order(l);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return labels[a] > labels[b];
                   });
  Permutation perm(std::move(order));

  Query q;
  q.id_ = std::move(id);
  q.labels_ = apply_permutation(labels, perm);
  q.features_ = Matrix(l, features.cols());
  for (std::size_t k = 0; k < l; ++k) {
    auto src = features.row(perm[k]);
    std::copy(src.begin(), src.end(), q.features_.row(k).begin());
  }
  q.file_order_ = perm;
  if (!blocks.empty()) q.blocks_ = apply_permutation(blocks, perm);
  return {std::move(q), perm};
}

inline Grade max_grade(std::span<const Grade> labels) {
  return labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end());
}

}  // namespace dorm
