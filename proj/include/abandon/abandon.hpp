#pragma once

#include "balance.hpp"
#include "error.hpp"
#include "evalharness.hpp"
#include "features.hpp"
#include "forest.hpp"
#include "metrics.hpp"
#include "parallel.hpp"
#include "random.hpp"
#include "rnn.hpp"
#include "seqdata.hpp"
#include "synthgen.hpp"

namespace abandon {
inline constexpr const char* kVersion = "0.1.0";
}
