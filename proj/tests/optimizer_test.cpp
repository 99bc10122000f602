#include <gtest/gtest.h>

#include <sstream>

#include "dorm/optimizer.hpp"
#include "test_util.hpp"

namespace dorm {
namespace {

using testing::Rng;

Constraint make_constraint(double loss_value, std::vector<double> dphi) {
  Constraint c;
  c.loss = loss_value;
  c.dphi = std::move(dphi);
  return c;
}

TrainConfig qp_config(double C) {
  TrainConfig cfg;
  cfg.C = C;
  cfg.qp_tolerance = 1e-12;
  return cfg;
}

TEST(RestrictedQp, SingleConstraintClosedForm) {
  for (double C : {0.1, 0.5, 2.0, 100.0}) {
    DualState s(1, 2);
    s.working_sets[0].push_back(make_constraint(1.5, {1.0, 1.0}));
    restricted_qp(s, qp_config(C));
    EXPECT_NEAR(s.working_sets[0][0].alpha, std::min(C, 1.5 / 2.0), 1e-10) << C;
    EXPECT_NEAR(s.w[0], s.working_sets[0][0].alpha, 1e-12);
  }
}

TEST(RestrictedQp, TwoOrthogonalConstraints) {
  auto run = [](double C) {
    DualState s(1, 2);
    s.working_sets[0].push_back(make_constraint(1.0, {1.0, 0.0}));
    s.working_sets[0].push_back(make_constraint(2.0, {0.0, 2.0}));
    restricted_qp(s, qp_config(C));
    return std::pair{s.working_sets[0][0].alpha, s.working_sets[0][1].alpha};
  };
  auto [a1, a2] = run(1.0);
  EXPECT_NEAR(a1, 0.6, 1e-10);
  EXPECT_NEAR(a2, 0.4, 1e-10);
  std::tie(a1, a2) = run(10.0);
  EXPECT_NEAR(a1, 1.0, 1e-10);
  EXPECT_NEAR(a2, 0.5, 1e-10);
}

TEST(RestrictedQp, SeparateQueriesHaveSeparateBudgets) {
  DualState s(2, 1);
  s.working_sets[0].push_back(make_constraint(1.0, {1.0}));
  s.working_sets[1].push_back(make_constraint(1.0, {1.0}));
  restricted_qp(s, qp_config(0.3));
  EXPECT_NEAR(s.working_sets[0][0].alpha, 0.3, 1e-12);
  EXPECT_NEAR(s.working_sets[1][0].alpha, 0.3, 1e-12);
}

TEST(RestrictedQp, EmptyWorkingSetsLeaveStateUnchanged) {
  DualState s(3, 4);
  restricted_qp(s, qp_config(1.0));
  EXPECT_EQ(s.w, WeightVector(4, 0.0));
  EXPECT_EQ(s.dual_objective(), 0.0);
}

TEST(RestrictedQp, RandomProblemsSatisfyInvariantsAndNeverLoseDual) {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t m = testing::uniform_int(rng, 1, 4);
    const std::size_t d = testing::uniform_int(rng, 1, 5);
    const double C = testing::uniform(rng, 0.01, 5.0);
    DualState s(m, d);
    double previous = 0.0;
    for (int round = 0; round < 6; ++round) {
      const std::size_t i = testing::uniform_int(rng, 0, m - 1);
      s.working_sets[i].push_back(make_constraint(
          testing::uniform(rng, 0.0, 2.0), testing::random_vector(rng, d)));
      restricted_qp(s, qp_config(C));
      const double dual = s.dual_objective();
      EXPECT_GE(dual, previous - 1e-12 * std::max(1.0, std::abs(previous)));
      previous = dual;
      for (const auto& set : s.working_sets) {
        double used = 0.0;
        for (const auto& c : set) {
          EXPECT_GE(c.alpha, 0.0);
          used += c.alpha;
        }
        EXPECT_LE(used, C + 1e-9);
      }
      const auto w = s.expansion();
      for (std::size_t f = 0; f < d; ++f) EXPECT_NEAR(s.w[f], w[f], 1e-9);
    }
  }
}

TEST(ComputeSlack, Cases) {
  DualState s(2, 2);
  EXPECT_EQ(compute_slack(s, 0), 0.0);
  s.working_sets[0].push_back(make_constraint(1.0, {1.0, 0.0}));
  s.working_sets[0].push_back(make_constraint(0.2, {0.0, 1.0}));
  s.w = {0.5, 0.0};
  EXPECT_DOUBLE_EQ(compute_slack(s, 0), 0.5);
  s.w = {2.0, 0.0};
  EXPECT_DOUBLE_EQ(compute_slack(s, 0), 0.2);
  s.w = {2.0, 1.0};
  EXPECT_DOUBLE_EQ(compute_slack(s, 0), 0.0);
  EXPECT_EQ(compute_slack(s, 1), 0.0);
}

// Independent evaluation of loss(pi) - <w, Phi(1) - Phi(pi)>.
double reference_violation(const WeightVector& w, const Query& q,
                           const Measure& m, const std::vector<double>& c,
                           const Permutation& pi) {
  std::vector<double> g(q.size(), 0.0);
  for (std::size_t k = 0; k < q.size(); ++k) {
    for (std::size_t f = 0; f < w.size(); ++f) g[k] += w[f] * q.features()(k, f);
  }
  double margin = 0.0;
  for (std::size_t k = 0; k < q.size(); ++k) margin += c[k] * (g[k] - g[pi[k]]);
  return loss(m, pi, q.labels()) - margin;
}

TEST(LossAugmentedInference, ZeroWeightsFindMaximumLoss) {
  Rng rng(12);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t l = testing::uniform_int(rng, 2, 6);
    const Query q = testing::random_query(rng, l, 3);
    const Measure m = Measure::ndcg(3);
    const auto sep = loss_augmented_inference(WeightVector(3, 0.0), q, m,
                                              DecayScheme::power(0.5));
    const double best = testing::brute_force_max(
        l, [&](const Permutation& p) { return loss(m, p, q.labels()); });
    EXPECT_NEAR(sep.loss, best, 1e-12);
    EXPECT_NEAR(sep.violation, best, 1e-12);
  }
}

TEST(LossAugmentedInference, PerfectWeightsGiveIdealRanking) {
  // Scores strictly follow the grades, and loss is bounded by the margin.
  const Matrix x = Matrix::from_rows({{3.0}, {2.0}, {1.0}, {0.0}});
  const Query q = testing::make_query({3, 2, 1, 0}, x);
  const auto sep = loss_augmented_inference(WeightVector{100.0}, q, Measure::ndcg(4),
                                            DecayScheme::power(0.5));
  EXPECT_TRUE(sep.pi.is_identity());
  EXPECT_DOUBLE_EQ(sep.violation, 0.0);
}

TEST(LossAugmentedInference, MatchesExhaustiveSearch) {
  Rng rng(13);
  const std::vector<Measure> measures = {Measure::ndcg(3), Measure::mrr(),
                                         Measure::precision(2), Measure::eru(5.0, 0.0),
                                         Measure::dcg(5), Measure::wta()};
  const std::vector<DecayScheme> schemes = {DecayScheme::power(0.5), DecayScheme::log(),
                                            DecayScheme::loglog()};
  for (int trial = 0; trial < 150; ++trial) {
    const std::size_t l = testing::uniform_int(rng, 1, 7);
    const std::size_t d = testing::uniform_int(rng, 1, 4);
    const Query q = testing::random_query(rng, l, d);
    const auto w = testing::random_vector(rng, d, -2.0, 2.0);
    const Measure& m = measures[trial % measures.size()];
    const DecayScheme& scheme = schemes[trial % schemes.size()];
    const auto c = decay(scheme, l);
    const auto sep = loss_augmented_inference(w, q, m, scheme);
    const double best = testing::brute_force_max(
        l, [&](const Permutation& p) { return reference_violation(w, q, m, c, p); });
    EXPECT_NEAR(sep.violation, best, 1e-9) << to_string(m);
    EXPECT_NEAR(sep.violation, reference_violation(w, q, m, c, sep.pi), 1e-9);
  }
}

TEST(LossAugmentedInference, RankOneCaseAgreesWithSorting) {
  // With a = c the assignment reduces to sorting g - b.
  Rng rng(14);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t l = testing::uniform_int(rng, 1, 9);
    const auto g = testing::random_vector(rng, l);
    const auto b = testing::random_vector(rng, l, 0.0, 1.0);
    const auto a = decay(DecayScheme::power(0.5), l);
    const auto by_lap = solve_lap(make_cost_matrix(a, g, a, b));
    const auto by_sort = sort_decode(a, g, b);
    EXPECT_NEAR(assignment_value(make_cost_matrix(a, g, a, b), by_sort),
                by_lap.value, 1e-10);
  }
}

TrainConfig separable_config() {
  TrainConfig cfg;
  cfg.C = 10.0;
  cfg.epsilon = 1e-3;
  cfg.track_primal = true;
  return cfg;
}

Dataset small_rankable(std::uint64_t seed) {
  testing::SyntheticSpec spec;
  spec.queries = 12;
  spec.docs = 8;
  spec.dim = 3;
  spec.gap = 0.15;
  return testing::synthetic_dataset(spec, seed);
}

void expect_training_certificates(const TrainResult& r, const Dataset& data,
                                  const TrainConfig& cfg) {
  ASSERT_TRUE(r.report.converged);
  EXPECT_LE(testing::worst_surrogate_excess(r, data, cfg), 1e-9);
  const auto& trace = r.report.dual_trace;
  for (std::size_t k = 1; k < trace.size(); ++k) {
    EXPECT_GE(trace[k], trace[k - 1] - 1e-12 * std::max(1.0, std::abs(trace[k - 1])));
  }
  for (const auto& it : r.report.iterations) {
    if (cfg.track_primal) {
      EXPECT_GE(it.primal, it.dual - 1e-9);
    }
  }
  const auto& last = r.report.iterations.back();
  if (cfg.track_primal) {
    EXPECT_LE(last.primal - last.dual,
              cfg.C * cfg.epsilon * static_cast<double>(data.size()) + 1e-6);
  }
  EXPECT_LE(static_cast<double>(r.report.constraints_added),
            termination_bound(data, cfg).additions);
  for (const auto& set : r.state.working_sets) {
    double used = 0.0;
    for (const auto& c : set) {
      EXPECT_GE(c.alpha, 0.0);
      used += c.alpha;
    }
    EXPECT_LE(used, cfg.C + 1e-9);
  }
  const auto w = r.state.expansion();
  for (std::size_t f = 0; f < w.size(); ++f) EXPECT_NEAR(r.state.w[f], w[f], 1e-9);
}

TEST(Train, RanksLinearlyRankableDataPerfectly) {
  const Dataset data = small_rankable(21);
  const TrainConfig cfg = separable_config();
  const auto r = train(data, cfg);
  expect_training_certificates(r, data, cfg);
  EXPECT_NEAR(testing::mean_ndcg_at(r.w, data, 10), 1.0, 1e-12);
  EXPECT_EQ(r.report.dual_trace.size(), r.report.constraints_added);
}

TEST(Train, HugeEpsilonStopsAfterOnePass) {
  const Dataset data = small_rankable(22);
  TrainConfig cfg;
  cfg.epsilon = 1e9;
  const auto r = train(data, cfg);
  EXPECT_TRUE(r.report.converged);
  EXPECT_EQ(r.report.iterations.size(), 1u);
  EXPECT_EQ(r.report.constraints_added, 0u);
  EXPECT_EQ(r.w, WeightVector(data.dimension, 0.0));
}

TEST(Train, CertificatesHoldAcrossMeasuresAndSettings) {
  Rng rng(23);
  const std::vector<Measure> measures = {Measure::ndcg(5), Measure::mrr(),
                                         Measure::precision(3), Measure::eru(5.0, 0.0),
                                         Measure::modified_wta()};
  for (std::size_t t = 0; t < measures.size(); ++t) {
    testing::SyntheticSpec spec;
    spec.queries = 8;
    spec.docs = 6;
    spec.dim = 3;
    spec.noise_rate = 0.3;
    const Dataset data = testing::synthetic_dataset(spec, 100 + t);
    TrainConfig cfg;
    cfg.measure = measures[t];
    cfg.C = testing::uniform(rng, 0.05, 5.0);
    cfg.epsilon = 1e-3;
    cfg.decay = t % 2 ? DecayScheme::log() : DecayScheme::power(0.5);
    cfg.shuffle = t % 2 == 0;
    cfg.seed = t;
    cfg.prune_after = 2;
    cfg.track_primal = true;
    const auto r = train(data, cfg);
    expect_training_certificates(r, data, cfg);
  }
}

TEST(Train, ShuffleIsDeterministicForAGivenSeed) {
  const Dataset data = small_rankable(24);
  TrainConfig cfg = separable_config();
  cfg.shuffle = true;
  cfg.seed = 7;
  const auto r1 = train(data, cfg);
  const auto r2 = train(data, cfg);
  EXPECT_EQ(r1.w, r2.w);
  expect_training_certificates(r1, data, cfg);
}

TEST(Train, StandardizationFoldsBackIntoRawFeatureSpace) {
  Dataset data = small_rankable(25);
  // Blow up one feature's scale and shift another.
  for (Query& q : data.queries) {
    Matrix x = q.features();
    for (std::size_t k = 0; k < x.rows(); ++k) {
      x(k, 0) *= 1000.0;
      x(k, 1) += 50.0;
    }
    q = q.with_features(std::move(x));
  }
  TrainConfig cfg = separable_config();
  cfg.standardize = true;
  const auto r = train(data, cfg);
  ASSERT_TRUE(r.report.converged);
  EXPECT_NEAR(testing::mean_ndcg_at(r.w, data, 10), 1.0, 1e-12);
  EXPECT_LE(testing::worst_surrogate_excess(r, data, cfg), 1e-9);
}

TEST(Train, DiversityDecodingRunsToCompletion) {
  Dataset data = small_rankable(26);
  for (Query& q : data.queries) {
    std::vector<std::size_t> block(q.size());
    for (std::size_t k = 0; k < q.size(); ++k) block[k] = k % 3;
    std::vector<Grade> labels(q.labels().begin(), q.labels().end());
    q = sort_by_relevance(q.id(), labels, q.features(), 3, block).first;
  }
  TrainConfig cfg = separable_config();
  cfg.diversity_decoding = true;
  cfg.measure = Measure::ndcg(3);
  const auto r = train(data, cfg);
  EXPECT_TRUE(r.report.converged);
  EXPECT_GT(r.report.constraints_added, 0u);
}

TEST(Train, RejectsBadInput) {
  TrainConfig cfg;
  EXPECT_THROW(train(Dataset{}, cfg), DomainError);
  const Dataset data = small_rankable(27);
  cfg.C = 0.0;
  EXPECT_THROW(train(data, cfg), DomainError);
  cfg.C = 1.0;
  cfg.epsilon = -1.0;
  EXPECT_THROW(train(data, cfg), DomainError);
}

TEST(Train, ReportLinesHaveStableFormat) {
  const Dataset data = small_rankable(28);
  const auto r = train(data, separable_config());
  std::ostringstream os;
  write_report(os, r.report);
  std::istringstream is(os.str());
  std::string line;
  std::size_t n = 0;
  while (std::getline(is, line)) {
    EXPECT_EQ(line.rfind("iter=" + std::to_string(++n) + " dual=", 0), 0u) << line;
    EXPECT_NE(line.find(" constraints="), std::string::npos);
    EXPECT_NE(line.find(" svs="), std::string::npos);
    EXPECT_NE(line.find(" max_violation="), std::string::npos);
  }
  EXPECT_EQ(n, r.report.iterations.size());
}

TEST(TerminationBound, HandComputedValue) {
  // One query, two documents with ||x|| = 5 and 0, pow 0.5 decay so
  // sum c = 1/sqrt(2) + 1/sqrt(3), grades {1, 0} under DCG@2 so the ideal score is 1.
  Dataset data;
  data.dimension = 2;
  data.max_grade = 1;
  data.queries.push_back(
      testing::make_query({1, 0}, Matrix::from_rows({{3.0, 4.0}, {0.0, 0.0}})));
  TrainConfig cfg;
  cfg.measure = Measure::dcg(2);
  cfg.C = 2.0;
  cfg.epsilon = 0.5;
  const auto b = termination_bound(data, cfg);
  const double radius = 5.0 * (1.0 / std::sqrt(2.0) + 1.0 / std::sqrt(3.0));
  EXPECT_DOUBLE_EQ(b.mean_length, 2.0);
  EXPECT_DOUBLE_EQ(b.max_loss, 1.0);
  EXPECT_NEAR(b.radius, radius, 1e-12);
  EXPECT_NEAR(b.additions, std::max(2.0 * 2.0 / 0.5, 8.0 * 2.0 * radius * radius / 0.25),
              1e-9);
}

TEST(Evaluate, ZeroWeightsKeepFileOrder) {
  // File order: grades 0, 2, 1. Zero weights rank in that order.
  const Query q = testing::make_query({0, 2, 1}, Matrix(3, 1));
  Dataset data;
  data.dimension = 1;
  data.max_grade = 2;
  data.queries.push_back(q);
  const auto ev = evaluate(WeightVector{0.0}, data, {Measure::wta(), Measure::mrr()});
  EXPECT_EQ(ev.mean[0], 0.0);
  EXPECT_DOUBLE_EQ(ev.mean[1], 0.5);
}

TEST(Evaluate, SkipsQueriesWhereMeasureIsUndefined) {
  Dataset data;
  data.dimension = 1;
  data.max_grade = 1;
  data.queries.push_back(
      sort_by_relevance("zero", std::vector<Grade>{0, 0}, Matrix(2, 1), 1).first);
  data.queries.push_back(
      testing::make_query({1, 0}, Matrix::from_rows({{1.0}, {0.0}})));
  const auto ev = evaluate(WeightVector{1.0}, data, {Measure::ndcg(2)});
  EXPECT_EQ(ev.skipped[0], 1u);
  EXPECT_DOUBLE_EQ(ev.mean[0], 1.0);
}

TEST(Evaluate, DiversityFilterChangesHead) {
  const Matrix x = Matrix::from_rows({{0.9}, {0.8}, {0.1}});
  Query q = sort_by_relevance("q", std::vector<Grade>{2, 2, 1}, x, 2,
                             std::vector<std::size_t>{0, 0, 1})
                .first;
  Dataset data;
  data.dimension = 1;
  data.max_grade = 2;
  data.queries.push_back(q);
  const WeightVector w{1.0};
  EXPECT_EQ(rank_query(w, q, RankingMode::kSort, 2), Permutation({0, 1, 2}));
  EXPECT_EQ(rank_query(w, q, RankingMode::kDiversityFilter, 2), Permutation({0, 2, 1}));
  const auto ev = evaluate(w, data, {Measure::ndcg(3)}, RankingMode::kDiversityFilter, 2);
  EXPECT_LT(ev.mean[0], 1.0);
}

TEST(Evaluate, ResultDoesNotDependOnThreadCount) {
  testing::SyntheticSpec spec;
  spec.queries = 300;
  spec.docs = 6;
  spec.noise_rate = 0.5;
  const Dataset data = testing::synthetic_dataset(spec, 31);
  const WeightVector w = testing::true_weights(spec.dim);
  const std::vector<Measure> ms = {Measure::ndcg(3), Measure::mrr(), Measure::wta()};
  const auto one = evaluate(w, data, ms, RankingMode::kSort, 10, 1);
  for (unsigned t : {2u, 3u, 8u}) {
    const auto many = evaluate(w, data, ms, RankingMode::kSort, 10, t);
    EXPECT_EQ(one.mean, many.mean);
    EXPECT_EQ(one.skipped, many.skipped);
  }
}

}  // namespace
}  // namespace dorm
