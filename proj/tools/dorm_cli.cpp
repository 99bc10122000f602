// dorm: train, apply and evaluate linear rankers from the command line.
//
// Exit status: 0 on success, 1 for data/model errors, 2 for usage errors.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "dorm/dorm.hpp"

namespace {

constexpr int kDataError = 1;
constexpr int kUsageError = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string data;
  std::string model;
  std::string measure;
  std::string decay = "pow:0.5";
  double C = 0.01;
  double eps = 1e-3;
  std::size_t max_iters = 1000;
  bool standardize = false;
  std::string diversity = "off";
  std::size_t depth = 10;
  std::string report;
  std::string output;
  bool shuffle = false;
  std::uint64_t seed = 0;
};

std::string fixed2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

dorm::Measure measure_flag(const std::string& text) {
  try {
    return dorm::parse_measure(text);
  } catch (const dorm::Error& e) {
    throw UsageError(std::string("--measure: ") + e.what());
  }
}

dorm::DecayScheme decay_flag(const std::string& text) {
  try {
    return dorm::parse_decay(text);
  } catch (const dorm::Error& e) {
    throw UsageError(std::string("--decay: ") + e.what());
  }
}

dorm::Dataset load_data(const Options& o, std::size_t min_dimension = 0) {
  dorm::ParseOptions po;
  po.min_dimension = min_dimension;
  dorm::Dataset data = dorm::parse_dataset(o.data, po);
  if (data.dropped_queries > 0) {
    std::cerr << "warning: dropped " << data.dropped_queries
              << " queries with no relevant documents\n";
  }
  if (data.empty()) throw dorm::DomainError(o.data + ": no usable queries");
  return data;
}

class Output {
 public:
  explicit Output(const std::string& path) {
    if (!path.empty()) {
      file_.open(path);
      if (!file_) throw dorm::ParseError("cannot write '" + path + "'");
    }
  }
  std::ostream& get() { return file_.is_open() ? file_ : std::cout; }

 private:
  std::ofstream file_;
};

dorm::RankingMode ranking_mode(const Options& o) {
  return o.diversity == "off" ? dorm::RankingMode::kSort
                              : dorm::RankingMode::kDiversityFilter;
}

int cmd_train(const Options& o) {
  dorm::TrainConfig cfg;
  if (!o.measure.empty()) cfg.measure = measure_flag(o.measure);
  cfg.decay = decay_flag(o.decay);
  cfg.C = o.C;
  cfg.epsilon = o.eps;
  cfg.max_outer_iters = o.max_iters;
  cfg.standardize = o.standardize;
  cfg.diversity_decoding = o.diversity == "train";
  cfg.shuffle = o.shuffle;
  cfg.seed = o.seed;
  try {
    dorm::validate(cfg);
  } catch (const dorm::Error& e) {
    throw UsageError(e.what());
  }

  if (cfg.diversity_decoding) {
    std::cerr << "warning: --diversity train uses an approximate two-stage decoder; "
                 "the slack bound on training loss is not guaranteed\n";
  }
  const dorm::Dataset data = load_data(o);
  const dorm::TrainResult r = dorm::train(data, cfg);
  for (const auto& w : r.report.warnings) std::cerr << "warning: " << w << '\n';

  dorm::Model m;
  m.measure = cfg.measure;
  m.decay = cfg.decay;
  m.C = cfg.C;
  m.epsilon = cfg.epsilon;
  m.w = r.w;
  dorm::save_model(o.model, m);

  if (o.report.empty()) {
    dorm::write_report(std::cerr, r.report);
  } else {
    std::ofstream rep(o.report);
    if (!rep) throw dorm::ParseError("cannot write report '" + o.report + "'");
    dorm::write_report(rep, r.report);
  }
  std::cerr << "trained on " << data.size() << " queries: "
            << r.report.iterations.size() << " passes, "
            << r.report.constraints_added << " constraints added"
            << (r.report.converged ? "" : " (not converged)") << '\n';
  return 0;
}

// Sparse files may omit trailing features, so the data is padded up to the
// model's dimension; extra features in the data are still an error.
std::pair<dorm::Model, dorm::Dataset> load_model_and_data(const Options& o) {
  dorm::Model m = dorm::load_model(o.model);
  dorm::Dataset data = load_data(o, m.w.size());
  dorm::check_compatible(m, data);
  return {std::move(m), std::move(data)};
}

// One line per document: query id, rank (1-based), the document's line
// position within the query in the input file (1-based), and its score.
int cmd_predict(const Options& o) {
  if (o.diversity == "train") throw UsageError("--diversity train only applies to 'train'");
  const auto [m, data] = load_model_and_data(o);
  Output out(o.output);
  std::ostream& os = out.get();
  char buf[64];
  for (const dorm::Query& q : data.queries) {
    const auto g = dorm::doc_scores(m.w, q);
    const auto pi = dorm::rank_query(m.w, q, ranking_mode(o), o.depth);
    for (std::size_t k = 0; k < pi.size(); ++k) {
      std::snprintf(buf, sizeof buf, "%.17g", g[pi[k]]);
      os << q.id() << '\t' << (k + 1) << '\t' << (q.file_order()[pi[k]] + 1) << '\t'
         << buf << '\n';
    }
  }
  os.flush();
  return 0;
}

int cmd_eval(const Options& o) {
  if (o.diversity == "train") throw UsageError("--diversity train only applies to 'train'");
  std::vector<dorm::Measure> measures;
  std::vector<std::string> names;
  for (std::size_t n = 1; n <= 10; ++n) {
    measures.push_back(dorm::Measure::ndcg(n));
    names.push_back("NDCG@" + std::to_string(n));
  }
  measures.push_back(dorm::Measure::mrr());
  names.push_back("MRR");
  measures.push_back(dorm::Measure::wta());
  names.push_back("WTA");
  if (!o.measure.empty()) {
    measures.push_back(measure_flag(o.measure));
    names.push_back(o.measure);
  }

  dorm::Dataset data;
  dorm::WeightVector w;
  if (o.model.empty()) {
    data = load_data(o);
    w.assign(data.dimension, 0.0);
    std::cerr << "note: no --model given, evaluating the zero model\n";
  } else {
    auto [m, d] = load_model_and_data(o);
    data = std::move(d);
    w = std::move(m.w);
  }

  std::size_t tied = 0;
  for (const auto& q : data.queries) tied += dorm::has_tied_top(q.labels()) ? 1 : 0;
  if (tied > 0) {
    std::cerr << "warning: " << tied
              << " queries have several top-grade documents; MRR credits only one\n";
  }

  const auto ev = dorm::evaluate(w, data, measures, ranking_mode(o), o.depth);
  Output out(o.output);
  std::ostream& os = out.get();
  os << "queries\t" << data.size() << '\n';
  for (std::size_t m = 0; m < measures.size(); ++m) {
    os << names[m] << '\t' << fixed2(100.0 * ev.mean[m]) << '\n';
    if (ev.skipped[m] > 0) {
      std::cerr << "warning: " << names[m] << " undefined on " << ev.skipped[m]
                << " queries (skipped)\n";
    }
  }
  os.flush();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Train, apply and evaluate linear rankers"};
  app.require_subcommand(1);
  Options o;

  const std::vector<std::string> diversity_modes = {"off", "filter", "train"};

  auto* train = app.add_subcommand("train", "Fit a model and write it to --model");
  train->add_option("--data", o.data, "Training data file")->required();
  train->add_option("--model", o.model, "Output model path")->required();
  train->add_option("--measure", o.measure, "Loss measure (default ndcg@10)");
  train->add_option("--decay", o.decay, "Position decay: pow:D | log | loglog")
      ->capture_default_str();
  train->add_option("--C", o.C, "Regularization constant")->capture_default_str();
  train->add_option("--eps", o.eps, "Constraint violation tolerance")
      ->capture_default_str();
  train->add_option("--max-iters", o.max_iters, "Maximum column generation passes")
      ->capture_default_str();
  train->add_flag("--standardize", o.standardize, "Standardize features first");
  train->add_option("--diversity", o.diversity, "off | filter | train")
      ->check(CLI::IsMember(diversity_modes))
      ->capture_default_str();
  train->add_option("--report", o.report, "Write per-pass report here (default stderr)");
  train->add_flag("--shuffle", o.shuffle, "Visit queries in random order");
  train->add_option("--seed", o.seed, "Seed for --shuffle")->capture_default_str();

  auto* predict = app.add_subcommand("predict", "Rank the documents of every query");
  predict->add_option("--data", o.data, "Data file")->required();
  predict->add_option("--model", o.model, "Model file")->required();
  predict->add_option("--diversity", o.diversity, "off | filter")
      ->check(CLI::IsMember(diversity_modes))
      ->capture_default_str();
  predict->add_option("--depth", o.depth, "Diverse head length for --diversity filter")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  predict->add_option("--output", o.output, "Output file (default stdout)");

  auto* eval = app.add_subcommand("eval", "Report mean scores (x100)");
  eval->add_option("--data", o.data, "Data file")->required();
  eval->add_option("--model", o.model, "Model file (default: zero model)");
  eval->add_option("--measure", o.measure, "Extra measure to report");
  eval->add_option("--diversity", o.diversity, "off | filter")
      ->check(CLI::IsMember(diversity_modes))
      ->capture_default_str();
  eval->add_option("--depth", o.depth, "Diverse head length for --diversity filter")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  eval->add_option("--output", o.output, "Output file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsageError;
  }

  try {
    if (app.got_subcommand(train)) return cmd_train(o);
    if (app.got_subcommand(predict)) return cmd_predict(o);
    return cmd_eval(o);
  } catch (const UsageError& e) {
    std::cerr << "dorm: " << e.what() << '\n';
    return kUsageError;
  } catch (const dorm::Error& e) {
    std::cerr << "dorm: " << e.what() << '\n';
    return kDataError;
  } catch (const std::exception& e) {
    std::cerr << "dorm: " << e.what() << '\n';
    return kDataError;
  }
}
