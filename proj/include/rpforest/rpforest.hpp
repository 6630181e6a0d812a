#pragma once

#include "rpforest/core.hpp"
#include "rpforest/projection.hpp"
#include "rpforest/tree.hpp"
#include "rpforest/ensemble.hpp"
#include "rpforest/metrics.hpp"
#include "rpforest/decomposition.hpp"
#include "rpforest/dataset_io.hpp"
#include "rpforest/bench.hpp"
