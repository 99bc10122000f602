#pragma once

#include "dorm/assignment.hpp"
#include "dorm/dataset.hpp"
#include "dorm/diversity.hpp"
#include "dorm/error.hpp"
#include "dorm/features.hpp"
#include "dorm/io.hpp"
#include "dorm/matrix.hpp"
#include "dorm/measures.hpp"
#include "dorm/optimizer.hpp"
#include "dorm/ranking.hpp"
