#pragma once

// Text formats.
//
// Dataset, one document per line:
//   <grade> qid:<id> <fid>:<value> ... [# block:<name>]
// Feature ids are 1-based, strictly increasing within a line, and missing ids
// are zero. Lines starting with '#' and blank lines are ignored. Lines are
// grouped into queries by qid in order of first appearance.
//
// Model:
//   dorm-model v1
//   measure=<measure>
//   decay=<decay>
//   C=<real>
//   eps=<real>
//   dim=<n>
//   <w_1>
//   ...
//   <w_n>
// Reals are written with 17 significant digits so doubles round-trip exactly.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <istream>
#include <iterator>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "dorm/dataset.hpp"
#include "dorm/error.hpp"
#include "dorm/features.hpp"
#include "dorm/measures.hpp"
#include "dorm/ranking.hpp"

namespace dorm {

struct ParseOptions {
  // Largest admissible grade; inferred from the data when absent.
  std::optional<Grade> max_grade;
  // Densify to at least this many features.
  std::size_t min_dimension = 0;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n\f\v";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    const std::size_t b = i;
    while (i < s.size() && !std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    if (i > b) out.push_back(s.substr(b, i - b));
  }
  return out;
}

template <typename Int>
bool parse_int(std::string_view s, Int& out) {
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size();
}

inline bool parse_double(std::string_view s, double& out) {
  if (s.empty()) return false;
  std::string tmp(s);
  char* end = nullptr;
  out = std::strtod(tmp.c_str(), &end);
  return end == tmp.c_str() + tmp.size() && std::isfinite(out);
}

struct RawDocument {
  Grade grade = 0;
  std::vector<std::pair<std::size_t, double>> features;
  std::optional<std::string> block;
};

struct RawQuery {
  std::string id;
  std::vector<RawDocument> docs;
};

}  // namespace detail

inline Dataset parse_dataset(std::istream& in, const ParseOptions& opts = {}) {
  std::vector<detail::RawQuery> raw;
  std::unordered_map<std::string, std::size_t> index;
  std::size_t max_fid = 0;
  Grade observed_max = 0;

  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& what) -> ParseError {
    return ParseError("line " + std::to_string(line_no) + ": " + what);
  };
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view body = line;
    std::string_view comment;
    if (auto hash = body.find('#'); hash != std::string_view::npos) {
      comment = body.substr(hash + 1);
      body = body.substr(0, hash);
    }
    const auto tokens = detail::split_ws(body);
    if (tokens.empty()) continue;
    if (tokens.size() < 2) throw fail("expected '<grade> qid:<id> ...'");

    detail::RawDocument doc;
    if (!detail::parse_int(tokens[0], doc.grade)) {
      throw fail("grade '" + std::string(tokens[0]) + "' is not an integer");
    }
    if (doc.grade < 0) throw fail("negative grade");
    if (!tokens[1].starts_with("qid:") || tokens[1].size() == 4) {
      throw fail("second field must be qid:<id>");
    }
    const std::string qid(tokens[1].substr(4));

    std::size_t last = 0;
    for (std::size_t t = 2; t < tokens.size(); ++t) {
      const auto colon = tokens[t].find(':');
      if (colon == std::string_view::npos) {
        throw fail("feature '" + std::string(tokens[t]) + "' lacks ':'");
      }
      std::size_t fid = 0;
      double value = 0.0;
      if (!detail::parse_int(tokens[t].substr(0, colon), fid) || fid == 0) {
        throw fail("bad feature id in '" + std::string(tokens[t]) + "'");
      }
      if (fid <= last) throw fail("feature ids must be strictly increasing");
      if (!detail::parse_double(tokens[t].substr(colon + 1), value)) {
        throw fail("bad feature value in '" + std::string(tokens[t]) + "'");
      }
      last = fid;
      max_fid = std::max(max_fid, fid);
      doc.features.emplace_back(fid, value);
    }

    for (auto tok : detail::split_ws(comment)) {
      if (tok.starts_with("block:") && tok.size() > 6) {
        doc.block = std::string(tok.substr(6));
        break;
      }
    }

    observed_max = std::max(observed_max, doc.grade);
    auto [it, inserted] = index.try_emplace(qid, raw.size());
    if (inserted) raw.push_back({qid, {}});
    raw[it->second].docs.push_back(std::move(doc));
  }
  if (raw.empty()) throw ParseError("dataset contains no documents");

  Dataset data;
  data.dimension = std::max(max_fid, opts.min_dimension);
  data.max_grade = opts.max_grade.value_or(observed_max);
  for (auto& rq : raw) {
    const std::size_t l = rq.docs.size();
    std::vector<Grade> labels(l);
    Matrix x(l, data.dimension);
    bool annotated = false;
    for (std::size_t k = 0; k < l; ++k) {
      labels[k] = rq.docs[k].grade;
      for (auto [fid, v] : rq.docs[k].features) x(k, fid - 1) = v;
      annotated = annotated || rq.docs[k].block.has_value();
    }
    if (std::all_of(labels.begin(), labels.end(), [](Grade r) { return r == 0; })) {
      ++data.dropped_queries;
      continue;
    }
    std::vector<std::size_t> blocks;
    if (annotated) {
      std::map<std::string, std::size_t> names;
      blocks.resize(l);
      std::size_t next = 0;
      for (std::size_t k = 0; k < l; ++k) {
        if (rq.docs[k].block) {
          auto [it, inserted] = names.try_emplace(*rq.docs[k].block, next);
          if (inserted) ++next;
          blocks[k] = it->second;
        } else {
          blocks[k] = next++;
        }
      }
    }
    try {
      data.queries.push_back(
          sort_by_relevance(rq.id, labels, x, data.max_grade, std::move(blocks)).first);
    } catch (const Error& e) {
      throw ParseError("query " + rq.id + ": " + e.what());
    }
  }
  return data;
}

inline Dataset parse_dataset(const std::string& path,
                             const ParseOptions& opts = {}) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open dataset '" + path + "'");
  try {
    return parse_dataset(in, opts);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

// Writes queries in their original document order, omitting zero features.
inline void write_dataset(std::ostream& os, const Dataset& data) {
  for (const Query& q : data.queries) {
    const Permutation to_sorted = q.file_order().inverse();
    // Block ids are renumbered by first appearance in file order, the same
    // numbering the parser assigns.
    std::map<std::size_t, std::size_t> block_name;
    for (std::size_t f = 0; f < q.size() && !q.blocks().empty(); ++f) {
      block_name.try_emplace(q.blocks()[to_sorted[f]], block_name.size());
    }
    for (std::size_t f = 0; f < q.size(); ++f) {
      const std::size_t k = to_sorted[f];
      os << q.labels()[k] << " qid:" << q.id();
      auto x = q.document(k);
      for (std::size_t j = 0; j < x.size(); ++j) {
        if (x[j] != 0.0) os << ' ' << (j + 1) << ':' << detail::format_real(x[j]);
      }
      if (!q.blocks().empty()) os << " # block:" << block_name[q.blocks()[k]];
      os << '\n';
    }
  }
}

struct Model {
  Measure measure = Measure::ndcg(10);
  DecayScheme decay = DecayScheme::power(0.5);
  double C = 0.01;
  double epsilon = 1e-3;
  WeightVector w;

  friend bool operator==(const Model&, const Model&) = default;
};

inline constexpr std::string_view kModelHeader = "dorm-model v1";

inline void save_model(std::ostream& os, const Model& m) {
  os << kModelHeader << '\n'
     << "measure=" << to_string(m.measure) << '\n'
     << "decay=" << to_string(m.decay) << '\n'
     << "C=" << detail::format_real(m.C) << '\n'
     << "eps=" << detail::format_real(m.epsilon) << '\n'
     << "dim=" << m.w.size() << '\n';
  for (double v : m.w) os << detail::format_real(v) << '\n';
}

inline void save_model(const std::string& path, const Model& m) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write model '" + path + "'");
  save_model(out, m);
  if (!out) throw ParseError("error writing model '" + path + "'");
}

inline Model load_model(std::istream& in) {
  const std::string text((std::istreambuf_iterator<char>(in)),
                         std::istreambuf_iterator<char>());
  std::size_t pos = 0;
  auto fail = [](std::size_t offset, const std::string& what) {
    return ParseError("model byte offset " + std::to_string(offset) + ": " + what);
  };
  auto next_line = [&](std::string_view expect) -> std::pair<std::string_view, std::size_t> {
    if (pos >= text.size()) {
      throw fail(pos, "unexpected end of file, expected " + std::string(expect));
    }
    const std::size_t start = pos;
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    pos = end + 1;
    std::string_view line(text.data() + start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    return {line, start};
  };
  auto field = [&](std::string_view key) -> std::pair<std::string_view, std::size_t> {
    auto [line, at] = next_line(std::string(key) + "=");
    if (!line.starts_with(key) || line.size() <= key.size() ||
        line[key.size()] != '=') {
      throw fail(at, "expected '" + std::string(key) + "=...'");
    }
    return {line.substr(key.size() + 1), at};
  };

  auto [header, header_at] = next_line("header");
  if (header != kModelHeader) {
    throw fail(header_at, "unsupported model version '" + std::string(header) +
                              "', expected '" + std::string(kModelHeader) + "'");
  }
  Model m;
  {
    auto [v, at] = field("measure");
    try {
      m.measure = parse_measure(v);
    } catch (const ParseError& e) {
      throw fail(at, e.what());
    }
  }
  {
    auto [v, at] = field("decay");
    try {
      m.decay = parse_decay(v);
    } catch (const ParseError& e) {
      throw fail(at, e.what());
    }
  }
  {
    auto [v, at] = field("C");
    if (!detail::parse_double(v, m.C)) throw fail(at, "bad C value");
  }
  {
    auto [v, at] = field("eps");
    if (!detail::parse_double(v, m.epsilon)) throw fail(at, "bad eps value");
  }
  std::size_t dim = 0;
  {
    auto [v, at] = field("dim");
    if (!detail::parse_int(v, dim)) throw fail(at, "bad dim value");
  }
  m.w.resize(dim);
  for (std::size_t f = 0; f < dim; ++f) {
    auto [line, at] = next_line("weight " + std::to_string(f + 1) + " of " +
                                std::to_string(dim));
    if (!detail::parse_double(detail::trim(line), m.w[f])) {
      throw fail(at, "bad weight value '" + std::string(line) + "'");
    }
  }
  while (pos < text.size()) {
    auto [line, at] = next_line("end of file");
    if (!detail::trim(line).empty()) throw fail(at, "trailing data after weights");
  }
  return m;
}

inline Model load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open model '" + path + "'");
  try {
    return load_model(in);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

// Throws DimensionError when a dataset has features the model does not know.
inline void check_compatible(const Model& m, const Dataset& data) {
  if (data.dimension != m.w.size()) {
    throw DimensionError("model has dimension " + std::to_string(m.w.size()) +
                         " but the dataset has " +
                         std::to_string(data.dimension) + " features");
  }
}

}  // namespace dorm
