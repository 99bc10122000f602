#pragma once

#include <cstddef>
#include <vector>

#include "dorm/ranking.hpp"

namespace dorm {

struct Dataset {
  std::vector<Query> queries;
  std::size_t dimension = 0;
  Grade max_grade = 0;
  // Queries dropped at ingestion because every grade was zero.
  std::size_t dropped_queries = 0;

  bool empty() const { return queries.empty(); }
  std::size_t size() const { return queries.size(); }
};

}  // namespace dorm
