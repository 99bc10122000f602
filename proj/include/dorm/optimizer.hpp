#pragma once

// Max-margin structured training of a linear ranker by column generation.
//
// For every query i and permutation pi the margin constraint reads
//   <w, dPhi_i(pi)> >= loss_i(pi) - xi_i,
//   dPhi_i(pi) = Phi(q_i, identity) - Phi(q_i, pi).
// Each pass runs loss-augmented inference (a linear assignment problem) per
// query; whenever the most violated permutation beats the current slack by
// more than epsilon it joins the working set S_i and the dual restricted to
// all working sets is re-optimized:
//   max_alpha  sum alpha * loss - 1/2 ||sum alpha * dPhi||^2
//   s.t.       alpha >= 0,  sum_{pi in S_i} alpha_{i,pi} <= C  for every i.
// Training stops after a pass that adds nothing.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "dorm/assignment.hpp"
#include "dorm/dataset.hpp"
#include "dorm/diversity.hpp"
#include "dorm/error.hpp"
#include "dorm/features.hpp"
#include "dorm/matrix.hpp"
#include "dorm/measures.hpp"
#include "dorm/ranking.hpp"

namespace dorm {

struct TrainConfig {
  double C = 0.01;
  double epsilon = 1e-3;
  Measure measure = Measure::ndcg(10);
  DecayScheme decay = DecayScheme::power(0.5);
  std::size_t max_outer_iters = 1000;
  double qp_tolerance = 1e-8;
  // Constraints whose alpha stays at zero this many passes are dropped.
  std::size_t prune_after = 10;
  // Bound on SMO sweeps over all queries inside one restricted solve.
  std::size_t max_qp_sweeps = 100000;
  // Visit queries in a seeded random order instead of dataset order.
  bool shuffle = false;
  std::uint64_t seed = 0;
  // Standardize features on the training data; the returned weights are
  // folded back so they apply to raw features.
  bool standardize = false;
  // Decode with the source-diversity constraint on the top positions.
  bool diversity_decoding = false;
  // Evaluate the exact primal objective after every pass (one extra
  // inference per query).
  bool track_primal = false;
};

inline void validate(const TrainConfig& cfg) {
  if (!(cfg.C > 0.0) || !std::isfinite(cfg.C)) {
    throw DomainError("C must be a positive finite number");
  }
  if (!(cfg.epsilon > 0.0) || !std::isfinite(cfg.epsilon)) {
    throw DomainError("epsilon must be a positive finite number");
  }
  if (!(cfg.qp_tolerance > 0.0)) {
    throw DomainError("qp_tolerance must be positive");
  }
  if (cfg.max_outer_iters == 0) {
    throw DomainError("max_outer_iters must be positive");
  }
  validate(cfg.measure);
}

struct Constraint {
  Permutation pi;
  double loss = 0.0;
  std::vector<double> dphi;  // Phi(identity) - Phi(pi)
  double alpha = 0.0;
  std::size_t idle_passes = 0;
};

class DualState {
 public:
  DualState() = default;
  DualState(std::size_t num_queries, std::size_t dimension)
      : working_sets(num_queries), w(dimension, 0.0) {}

  std::vector<std::vector<Constraint>> working_sets;
  WeightVector w;

  std::size_t num_constraints() const {
    std::size_t n = 0;
    for (const auto& s : working_sets) n += s.size();
    return n;
  }

  std::size_t num_support_vectors(double threshold) const {
    std::size_t n = 0;
    for (const auto& s : working_sets) {
      for (const auto& c : s) n += c.alpha > threshold ? 1 : 0;
    }
    return n;
  }

  // sum alpha * loss - 1/2 ||w||^2
  double dual_objective() const {
    double linear = 0.0;
    for (const auto& s : working_sets) {
      for (const auto& c : s) linear += c.alpha * c.loss;
    }
    return linear - 0.5 * squared_norm(w);
  }

  // w = sum alpha * dPhi
  WeightVector expansion() const {
    WeightVector out(w.size(), 0.0);
    for (const auto& s : working_sets) {
      for (const auto& c : s) {
        if (c.alpha != 0.0) axpy(c.alpha, c.dphi, out);
      }
    }
    return out;
  }

  void recompute_w() { w = expansion(); }
};

// Per-query quantities that stay fixed during training.
struct PreparedQuery {
  const Query* query = nullptr;
  ScoreVectors sv;
  std::vector<double> c;
  std::vector<double> ideal_phi;
  double ideal_score = 0.0;
  std::optional<SourcePartition> partition;
  std::size_t diversity_depth = 0;
};

inline PreparedQuery prepare_query(const Query& q, const TrainConfig& cfg) {
  PreparedQuery p;
  p.query = &q;
  p.sv = score_vectors(cfg.measure, q.labels());
  p.c = decay(cfg.decay, q.size());
  p.ideal_phi = joint_feature(q, Permutation::identity(q.size()), p.c);
  p.ideal_score = ideal_score(p.sv);
  if (cfg.diversity_decoding) {
    p.partition = partition_of(q);
    const Measure m = resolve(cfg.measure, q.labels());
    p.diversity_depth =
        std::min(m.truncation.value_or(q.size()), p.partition->num_blocks());
  }
  return p;
}

struct Separation {
  Permutation pi;
  double loss = 0.0;
  double margin = 0.0;     // <w, dPhi(pi)>
  double violation = 0.0;  // loss - margin
};

namespace detail {

// Top positions under the diversity constraint, remaining positions by an
// unconstrained assignment of the leftover documents. Exact when the
// diversity depth is zero; a two-stage decoder otherwise.
inline Permutation diverse_decode(const Matrix& cost,
                                  const SourcePartition& part,
                                  std::size_t depth) {
  const std::size_t l = cost.rows();
  Matrix head(l, depth);
  for (std::size_t i = 0; i < l; ++i) {
    for (std::size_t j = 0; j < depth; ++j) head(i, j) = cost(i, j);
  }
  const RectAssignment top = solve_diverse_assignment(head, part);
  std::vector<char> used(l, 0);
  for (std::size_t d : top.doc_at) used[d] = 1;
  std::vector<std::size_t> rest;
  for (std::size_t i = 0; i < l; ++i) {
    if (!used[i]) rest.push_back(i);
  }
  const std::size_t r = rest.size();
  Matrix tail(r, r);
  for (std::size_t a = 0; a < r; ++a) {
    for (std::size_t b = 0; b < r; ++b) tail(a, b) = cost(rest[a], depth + b);
  }
  const AssignmentResult lap = solve_lap(tail);
  std::vector<std::size_t> mapping = top.doc_at;
  for (std::size_t b = 0; b < r; ++b) mapping.push_back(rest[lap.pi[b]]);
  return Permutation(std::move(mapping));
}

}  // namespace detail

// Most violated permutation: argmax_pi loss(pi) + <w, Phi(q, pi)>, found as a
// linear assignment with C(i, j) = c[j] * g[i] - a[j] * b[i].
inline Separation loss_augmented_inference(std::span<const double> w,
                                           const PreparedQuery& p) {
  const Query& q = *p.query;
  const std::vector<double> g = doc_scores(w, q);
  const Matrix cost = make_cost_matrix(p.c, g, p.sv.a, p.sv.b);
  Separation s;
  if (p.partition) {
    s.pi = detail::diverse_decode(cost, *p.partition, p.diversity_depth);
  } else {
    s.pi = solve_lap(cost).pi;
  }
  s.loss = loss(p.sv, s.pi);
  s.margin = permuted_inner(p.c, g, Permutation::identity(q.size())) -
             permuted_inner(p.c, g, s.pi);
  s.violation = s.loss - s.margin;
  return s;
}

inline Separation loss_augmented_inference(std::span<const double> w,
                                           const Query& q,
                                           const Measure& measure,
                                           const DecayScheme& scheme) {
  TrainConfig cfg;
  cfg.measure = measure;
  cfg.decay = scheme;
  return loss_augmented_inference(w, prepare_query(q, cfg));
}

// xi_i = max(0, max_{pi in S_i} loss(pi) - <w, dPhi(pi)>)
inline double compute_slack(const DualState& state, std::size_t i) {
  double xi = 0.0;
  for (const auto& c : state.working_sets.at(i)) {
    xi = std::max(xi, c.loss - dot(state.w, c.dphi));
  }
  return xi;
}

namespace detail {

// Pairwise (SMO-style) ascent on one query's box-simplex
// {alpha >= 0, sum alpha <= C}. The unused budget C - sum alpha acts as an
// extra coordinate with zero gradient and zero feature vector. Returns the
// KKT violation observed before the first step.
inline double optimize_query_block(DualState& state, std::size_t i, double C,
                                   double tol, std::size_t max_steps) {
  auto& set = state.working_sets[i];
  const std::size_t n = set.size();
  if (n == 0) return 0.0;
  constexpr std::size_t kSlack = std::numeric_limits<std::size_t>::max();
  std::vector<double> grad(n);
  std::vector<double> diff(state.w.size());
  double first_violation = -1.0;

  for (std::size_t step = 0; step < max_steps; ++step) {
    double used = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      grad[k] = set[k].loss - dot(state.w, set[k].dphi);
      used += set[k].alpha;
    }
    const double free_budget = std::max(0.0, C - used);

    std::size_t up = kSlack;
    double g_up = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      if (grad[k] > g_up) {
        g_up = grad[k];
        up = k;
      }
    }
    std::size_t down = kSlack;
    double g_down = free_budget > 0.0 ? 0.0
                                      : std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < n; ++k) {
      if (set[k].alpha > 0.0 && grad[k] < g_down) {
        g_down = grad[k];
        down = k;
      }
    }
    const double violation =
        std::isfinite(g_down) ? std::max(0.0, g_up - g_down) : 0.0;
    if (first_violation < 0.0) first_violation = violation;
    if (violation <= tol || up == down) break;

    // Direction e_up - e_down in alpha; w moves by dphi_up - dphi_down.
    std::fill(diff.begin(), diff.end(), 0.0);
    if (up != kSlack) axpy(1.0, set[up].dphi, diff);
    if (down != kSlack) axpy(-1.0, set[down].dphi, diff);
    const double curvature = squared_norm(diff);
    const double cap = down == kSlack ? free_budget : set[down].alpha;
    double t = curvature > 0.0 ? (g_up - g_down) / curvature : cap;
    bool clipped = false;
    if (t >= cap) {
      t = cap;
      clipped = true;
    }
    if (!(t > 0.0)) break;
    if (up != kSlack) set[up].alpha += t;
    if (down != kSlack) {
      set[down].alpha = clipped ? 0.0 : set[down].alpha - t;
    }
    axpy(t, diff, state.w);
  }
  return std::max(first_violation, 0.0);
}

}  // namespace detail

// Re-optimizes the dual over the stored constraints to KKT tolerance
// `cfg.qp_tolerance`. Warm-starts from the current alphas; the dual objective
// never decreases. Returns the number of sweeps used.
inline std::size_t restricted_qp(DualState& state, const TrainConfig& cfg) {
  std::size_t sweeps = 0;
  for (; sweeps < cfg.max_qp_sweeps; ++sweeps) {
    double worst = 0.0;
    for (std::size_t i = 0; i < state.working_sets.size(); ++i) {
      const std::size_t budget = 20 * state.working_sets[i].size() + 20;
      worst = std::max(worst, detail::optimize_query_block(
                                  state, i, cfg.C, cfg.qp_tolerance, budget));
    }
    if (!std::isfinite(worst) || !std::isfinite(squared_norm(state.w))) {
      throw DomainError(
          "restricted_qp: non-finite values (check feature scaling)");
    }
    if (worst <= cfg.qp_tolerance) break;
  }
  state.recompute_w();
  return sweeps;
}

struct IterationRecord {
  std::size_t iter = 0;
  double dual = 0.0;
  std::size_t constraints = 0;
  std::size_t support_vectors = 0;
  // Largest loss-augmented violation in excess of the current slack seen
  // during the pass.
  double max_violation = 0.0;
  std::size_t added = 0;
  // 1/2 ||w||^2 + C sum xi with exact xi; NaN unless track_primal is set.
  double primal = std::numeric_limits<double>::quiet_NaN();
};

struct TrainReport {
  std::vector<IterationRecord> iterations;
  // Dual objective after every restricted re-solve, in order.
  std::vector<double> dual_trace;
  std::size_t constraints_added = 0;
  bool converged = false;
  std::vector<std::string> warnings;
};

inline std::ostream& operator<<(std::ostream& os, const IterationRecord& r) {
  return os << "iter=" << r.iter << " dual=" << detail::format_real(r.dual)
            << " constraints=" << r.constraints
            << " svs=" << r.support_vectors
            << " max_violation=" << detail::format_real(r.max_violation);
}

inline void write_report(std::ostream& os, const TrainReport& report) {
  for (const auto& r : report.iterations) os << r << '\n';
}

struct TrainResult {
  WeightVector w;
  TrainReport report;
  DualState state;
  // Per-query slack at exit, in dataset order.
  std::vector<double> slacks;
};

// The worst-case number of constraint additions,
// max(2 * l_mean * loss_max / eps, 8 * C * loss_max * R^2 / eps^2), with
// loss_max the largest ideal score (scores are non-negative, so it bounds
// every loss) and R the largest ||Phi|| bound sum_k c[k] * max_doc ||x||.
struct TerminationBound {
  double mean_length = 0.0;
  double max_loss = 0.0;
  double radius = 0.0;
  double additions = 0.0;
};

inline TerminationBound termination_bound(const Dataset& data,
                                          const TrainConfig& cfg) {
  TerminationBound b;
  if (data.empty()) return b;
  for (const Query& q : data.queries) {
    b.mean_length += static_cast<double>(q.size());
    b.max_loss = std::max(b.max_loss, ideal_score(score_vectors(cfg.measure, q.labels())));
    double longest = 0.0;
    for (std::size_t k = 0; k < q.size(); ++k) {
      longest = std::max(longest, std::sqrt(squared_norm(q.document(k))));
    }
    const auto c = decay(cfg.decay, q.size());
    b.radius = std::max(b.radius, longest * std::accumulate(c.begin(), c.end(), 0.0));
  }
  b.mean_length /= static_cast<double>(data.size());
  const double eps = cfg.epsilon;
  b.additions = std::max(2.0 * b.mean_length * b.max_loss / eps,
                         8.0 * cfg.C * b.max_loss * b.radius * b.radius /
                             (eps * eps));
  return b;
}

namespace detail {

struct Standardizer {
  std::vector<double> mean;
  std::vector<double> scale;  // 1/stddev, 0 for constant features

  static Standardizer fit(const Dataset& data) {
    Standardizer s;
    const std::size_t d = data.dimension;
    s.mean.assign(d, 0.0);
    s.scale.assign(d, 0.0);
    std::vector<double> sq(d, 0.0);
    double count = 0.0;
    for (const Query& q : data.queries) {
      for (std::size_t k = 0; k < q.size(); ++k) {
        auto x = q.document(k);
        for (std::size_t f = 0; f < d; ++f) {
          s.mean[f] += x[f];
          sq[f] += x[f] * x[f];
        }
        count += 1.0;
      }
    }
    for (std::size_t f = 0; f < d; ++f) {
      s.mean[f] /= count;
      const double var = sq[f] / count - s.mean[f] * s.mean[f];
      s.scale[f] = var > 1e-300 ? 1.0 / std::sqrt(var) : 0.0;
    }
    return s;
  }

  Query apply(const Query& q) const {
    Matrix x = q.features();
    for (std::size_t k = 0; k < x.rows(); ++k) {
      for (std::size_t f = 0; f < x.cols(); ++f) {
        x(k, f) = (x(k, f) - mean[f]) * scale[f];
      }
    }
    return q.with_features(std::move(x));
  }

  // Ranking by <w, (x - mean) * scale> equals ranking by <w * scale, x>:
  // the mean contributes the same constant to every document of a query.
  WeightVector fold(const WeightVector& w) const {
    WeightVector out(w.size());
    for (std::size_t f = 0; f < w.size(); ++f) out[f] = w[f] * scale[f];
    return out;
  }
};

}  // namespace detail

inline TrainResult train(const Dataset& data, const TrainConfig& cfg) {
  validate(cfg);
  if (data.empty()) throw DomainError("train: dataset has no queries");
  for (const Query& q : data.queries) {
    if (q.dimension() != data.dimension) {
      throw DimensionError("train: query '" + q.id() +
                           "' has inconsistent feature dimension");
    }
  }

  std::optional<detail::Standardizer> standardizer;
  std::vector<Query> transformed;
  if (cfg.standardize) {
    standardizer = detail::Standardizer::fit(data);
    transformed.reserve(data.size());
    for (const Query& q : data.queries) transformed.push_back(standardizer->apply(q));
  }
  const std::vector<Query>& queries = cfg.standardize ? transformed : data.queries;

  std::vector<PreparedQuery> prepared;
  prepared.reserve(queries.size());
  for (const Query& q : queries) prepared.push_back(prepare_query(q, cfg));

  TrainResult result;
  DualState& state = result.state;
  state = DualState(queries.size(), data.dimension);
  TrainReport& report = result.report;

  std::vector<std::size_t> order(queries.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(cfg.seed);

  for (std::size_t iter = 1; iter <= cfg.max_outer_iters; ++iter) {
    if (cfg.shuffle) std::shuffle(order.begin(), order.end(), rng);
    IterationRecord rec;
    rec.iter = iter;
    rec.max_violation = -std::numeric_limits<double>::infinity();
    for (std::size_t i : order) {
      Separation sep = loss_augmented_inference(state.w, prepared[i]);
      const double xi = compute_slack(state, i);
      rec.max_violation = std::max(rec.max_violation, sep.violation - xi);
      if (sep.violation > xi + cfg.epsilon) {
        Constraint c;
        c.loss = sep.loss;
        c.dphi = prepared[i].ideal_phi;
        axpy(-1.0, joint_feature(*prepared[i].query, sep.pi, prepared[i].c),
             c.dphi);
        c.pi = std::move(sep.pi);
        state.working_sets[i].push_back(std::move(c));
        restricted_qp(state, cfg);
        report.dual_trace.push_back(state.dual_objective());
        ++rec.added;
      }
    }
    report.constraints_added += rec.added;
    rec.dual = state.dual_objective();
    rec.constraints = state.num_constraints();
    rec.support_vectors = state.num_support_vectors(cfg.qp_tolerance);
    if (cfg.track_primal) {
      double hinge = 0.0;
      for (const auto& p : prepared) {
        hinge += std::max(0.0, loss_augmented_inference(state.w, p).violation);
      }
      rec.primal = 0.5 * squared_norm(state.w) + cfg.C * hinge;
    }
    report.iterations.push_back(rec);
    if (rec.added == 0) {
      report.converged = true;
      break;
    }
    for (auto& set : state.working_sets) {
      for (auto& c : set) c.idle_passes = c.alpha == 0.0 ? c.idle_passes + 1 : 0;
      std::erase_if(set, [&](const Constraint& c) {
        return c.idle_passes >= cfg.prune_after;
      });
    }
  }
  if (!report.converged) {
    report.warnings.push_back("column generation stopped after " +
                              std::to_string(cfg.max_outer_iters) +
                              " passes without converging");
  }

  result.slacks.resize(queries.size());
  for (std::size_t i = 0; i < queries.size(); ++i) {
    result.slacks[i] = compute_slack(state, i);
  }
  result.w = standardizer ? standardizer->fold(state.w) : state.w;
  return result;
}

struct Evaluation {
  std::vector<Measure> measures;
  std::vector<double> mean;
  // Queries on which a measure was undefined, per measure.
  std::vector<std::size_t> skipped;
};

enum class RankingMode { kSort, kDiversityFilter };

inline Permutation rank_query(std::span<const double> w, const Query& q,
                              RankingMode mode, std::size_t depth) {
  if (mode == RankingMode::kSort) return predict_ranking(w, q);
  return diversified_ranking(doc_scores(w, q), partition_of(q), depth,
                             q.file_order());
}

// Mean score of the predicted rankings per measure. Queries are scored on
// worker threads; the reduction runs in query order so the result does not
// depend on the thread count.
inline Evaluation evaluate(std::span<const double> w, const Dataset& data,
                           const std::vector<Measure>& measures,
                           RankingMode mode = RankingMode::kSort,
                           std::size_t depth = 10, unsigned threads = 0) {
  Evaluation ev;
  ev.measures = measures;
  ev.mean.assign(measures.size(), 0.0);
  ev.skipped.assign(measures.size(), 0);
  const std::size_t nq = data.size();
  const std::size_t nm = measures.size();
  const double undefined = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> scores(nq * nm, undefined);

  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const Query& q = data.queries[i];
      const Permutation pi = rank_query(w, q, mode, depth);
      for (std::size_t m = 0; m < nm; ++m) {
        try {
          scores[i * nm + m] = score(measures[m], pi, q.labels());
        } catch (const DegenerateQueryError&) {
        }
      }
    }
  };
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  const std::size_t workers = std::min<std::size_t>(threads, (nq + 63) / 64);
  if (workers <= 1) {
    work(0, nq);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    const std::size_t chunk = (nq + workers - 1) / workers;
    for (std::size_t t = 0; t < workers; ++t) {
      pool.emplace_back([&, t] {
        try {
          work(t * chunk, std::min(nq, (t + 1) * chunk));
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  std::vector<std::size_t> counted(nm, 0);
  for (std::size_t i = 0; i < nq; ++i) {
    for (std::size_t m = 0; m < nm; ++m) {
      const double v = scores[i * nm + m];
      if (std::isnan(v)) {
        ++ev.skipped[m];
      } else {
        ev.mean[m] += v;
        ++counted[m];
      }
    }
  }
  for (std::size_t m = 0; m < nm; ++m) {
    ev.mean[m] = counted[m] ? ev.mean[m] / static_cast<double>(counted[m]) : undefined;
  }
  return ev;
}

}  // namespace dorm
