#pragma once

// Top-n assignment under source diversity: documents are partitioned into
// source blocks and at most one document per block may occupy the top n
// positions.
//
// Solved on the block-contracted problem: for a fixed block and position the
// best document of that block is always the one to use, so the constrained
// problem is a rectangular assignment of blocks to positions with utility
// max_{i in block} C(i, j). The padded square instance goes through
// solve_lap, whose duals turn into a certificate for the LP relaxation.

#include <algorithm>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dorm/assignment.hpp"
#include "dorm/error.hpp"
#include "dorm/matrix.hpp"
#include "dorm/ranking.hpp"

namespace dorm {

class SourcePartition {
 public:
  SourcePartition() = default;

  // Blocks must be disjoint and cover {0..l-1} exactly. Each block's members
  // are kept sorted; blocks are ordered by their smallest member.
  SourcePartition(std::size_t l, std::vector<std::vector<std::size_t>> blocks)
      : block_of_(l, kUnassigned) {
    for (auto& b : blocks) {
      if (b.empty()) throw DomainError("SourcePartition: empty block");
      std::sort(b.begin(), b.end());
    }
    std::sort(blocks.begin(), blocks.end(),
              [](const auto& x, const auto& y) { return x.front() < y.front(); });
    for (std::size_t s = 0; s < blocks.size(); ++s) {
      for (std::size_t i : blocks[s]) {
        if (i >= l) throw DomainError("SourcePartition: index out of range");
        if (block_of_[i] != kUnassigned) {
          throw DomainError("SourcePartition: blocks overlap");
        }
        block_of_[i] = s;
      }
    }
    for (std::size_t v : block_of_) {
      if (v == kUnassigned) {
        throw DomainError("SourcePartition: blocks do not cover every document");
      }
    }
    blocks_ = std::move(blocks);
  }

  // Groups documents by an arbitrary per-document label.
  static SourcePartition from_labels(std::span<const std::size_t> label) {
    std::vector<std::vector<std::size_t>> blocks;
    std::vector<std::size_t> seen_labels;
    for (std::size_t i = 0; i < label.size(); ++i) {
      auto it = std::find(seen_labels.begin(), seen_labels.end(), label[i]);
      if (it == seen_labels.end()) {
        seen_labels.push_back(label[i]);
        blocks.push_back({i});
      } else {
        blocks[static_cast<std::size_t>(it - seen_labels.begin())].push_back(i);
      }
    }
    return SourcePartition(label.size(), std::move(blocks));
  }

  static SourcePartition singletons(std::size_t l) {
    std::vector<std::vector<std::size_t>> blocks(l);
    for (std::size_t i = 0; i < l; ++i) blocks[i] = {i};
    return SourcePartition(l, std::move(blocks));
  }

  std::size_t num_documents() const { return block_of_.size(); }
  std::size_t num_blocks() const { return blocks_.size(); }
  const std::vector<std::size_t>& block(std::size_t s) const {
    return blocks_[s];
  }
  std::size_t block_of(std::size_t doc) const { return block_of_[doc]; }

 private:
  static constexpr std::size_t kUnassigned =
      std::numeric_limits<std::size_t>::max();
  std::vector<std::vector<std::size_t>> blocks_;
  std::vector<std::size_t> block_of_;
};

struct RectAssignment {
  std::size_t num_documents = 0;
  // doc_at[j] is the document at position j, j < n.
  std::vector<std::size_t> doc_at;
  double value = 0.0;
  // LP dual certificate: block_dual >= 0 and
  // position_dual[j] + block_dual[block_of(i)] >= C(i, j) for all i, j, with
  // sum(position_dual) + sum(block_dual) == value.
  std::vector<double> block_dual;
  std::vector<double> position_dual;

  // The l x n 0/1 assignment matrix.
  Matrix indicator() const {
    Matrix m(num_documents, doc_at.size());
    for (std::size_t j = 0; j < doc_at.size(); ++j) m(doc_at[j], j) = 1.0;
    return m;
  }
};

inline RectAssignment solve_diverse_assignment(const Matrix& c,
                                               const SourcePartition& part) {
  const std::size_t l = c.rows();
  const std::size_t n = c.cols();
  if (part.num_documents() != l) {
    throw DimensionError("solve_diverse_assignment: partition covers " +
                         std::to_string(part.num_documents()) +
                         " documents, cost matrix has " + std::to_string(l));
  }
  if (!c.all_finite()) {
    throw DomainError("solve_diverse_assignment: non-finite cost entry");
  }
  const std::size_t blocks = part.num_blocks();
  if (n > blocks) {
    throw InfeasibleError("solve_diverse_assignment: " + std::to_string(n) +
                          " positions but only " + std::to_string(blocks) +
                          " source blocks");
  }
  RectAssignment out;
  out.num_documents = l;
  if (n == 0) return out;

  // Block-level utilities, padded with zero-utility dummy positions.
  Matrix reduced(blocks, blocks, 0.0);
  std::vector<std::size_t> best_doc(blocks * n);
  for (std::size_t s = 0; s < blocks; ++s) {
    for (std::size_t j = 0; j < n; ++j) {
      std::size_t arg = part.block(s).front();
      for (std::size_t i : part.block(s)) {
        if (c(i, j) > c(arg, j)) arg = i;
      }
      best_doc[s * n + j] = arg;
      reduced(s, j) = c(arg, j);
    }
  }
  const AssignmentResult lap = solve_lap(reduced);

  out.doc_at.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    out.doc_at[j] = best_doc[lap.pi[j] * n + j];
    out.value += c(out.doc_at[j], j);
  }

  // Shift the square duals so the block duals become non-negative: every
  // block dual is bounded below by minus the smallest dummy-column dual (or,
  // without dummies, the shift by the smallest block dual keeps the sum).
  double shift = 0.0;
  if (blocks > n) {
    shift = std::numeric_limits<double>::infinity();
    for (std::size_t j = n; j < blocks; ++j) {
      shift = std::min(shift, lap.col_dual[j]);
    }
  } else {
    shift = -*std::min_element(lap.row_dual.begin(), lap.row_dual.end());
  }
  out.block_dual.resize(blocks);
  out.position_dual.resize(n);
  for (std::size_t s = 0; s < blocks; ++s) {
    out.block_dual[s] = std::max(0.0, lap.row_dual[s] + shift);
  }
  for (std::size_t j = 0; j < n; ++j) {
    out.position_dual[j] = lap.col_dual[j] - shift;
  }

  // Feasibility of the returned selection.
  std::vector<int> used(blocks, 0);
  for (std::size_t d : out.doc_at) {
    if (++used[part.block_of(d)] > 1) {
      throw std::logic_error("solve_diverse_assignment: block used twice");
    }
  }
  return out;
}

// Test-time diversity: keep the best-scoring document of each block (lowest
// index on ties), then return the n best survivors by descending score.
inline std::vector<std::size_t> test_time_filter(std::span<const double> g,
                                                 const SourcePartition& part,
                                                 std::size_t n) {
  if (part.num_documents() != g.size()) {
    throw DimensionError("test_time_filter: partition/score length mismatch");
  }
  if (n > part.num_blocks()) {
    throw InfeasibleError("test_time_filter: " + std::to_string(n) +
                          " positions but only " +
                          std::to_string(part.num_blocks()) + " source blocks");
  }
  std::vector<std::size_t> survivors;
  survivors.reserve(part.num_blocks());
  for (std::size_t s = 0; s < part.num_blocks(); ++s) {
    std::size_t arg = part.block(s).front();
    for (std::size_t i : part.block(s)) {
      if (g[i] > g[arg]) arg = i;
    }
    survivors.push_back(arg);
  }
  std::sort(survivors.begin(), survivors.end(),
            [&](std::size_t x, std::size_t y) {
              if (g[x] != g[y]) return g[x] > g[y];
              return x < y;
            });
  survivors.resize(n);
  return survivors;
}

// Full ranking whose head is the diverse top-n and whose tail holds every
// other document by descending score (ties by `tie_order`).
inline Permutation diversified_ranking(std::span<const double> g,
                                       const SourcePartition& part,
                                       std::size_t n,
                                       const Permutation& tie_order) {
  n = std::min(n, part.num_blocks());
  std::vector<std::size_t> order = test_time_filter(g, part, n);
  std::vector<char> taken(g.size(), 0);
  for (std::size_t d : order) taken[d] = 1;
  std::vector<std::size_t> rest;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!taken[i]) rest.push_back(i);
  }
  std::sort(rest.begin(), rest.end(), [&](std::size_t x, std::size_t y) {
    if (g[x] != g[y]) return g[x] > g[y];
    return tie_order[x] < tie_order[y];
  });
  order.insert(order.end(), rest.begin(), rest.end());
  return Permutation(std::move(order));
}

inline SourcePartition partition_of(const Query& q) {
  if (q.blocks().empty()) return SourcePartition::singletons(q.size());
  return SourcePartition::from_labels(q.blocks());
}

}  // namespace dorm
