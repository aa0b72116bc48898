#pragma once

#include "srsdeq/errors.hpp"
#include "srsdeq/linalg.hpp"
#include "srsdeq/stats.hpp"
#include "srsdeq/deq.hpp"
#include "srsdeq/parallel.hpp"
#include "srsdeq/solvers.hpp"
#include "srsdeq/training.hpp"
#include "srsdeq/smoothing.hpp"
#include "srsdeq/srs.hpp"
#include "srsdeq/eval.hpp"
#include "srsdeq/data.hpp"
#include "srsdeq/io.hpp"
