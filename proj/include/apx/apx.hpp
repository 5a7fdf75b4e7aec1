#pragma once

// Umbrella header for the approximate feature serving library.

#include "apx/aggregate.hpp"
#include "apx/columnar.hpp"
#include "apx/common.hpp"
#include "apx/csv.hpp"
#include "apx/engine.hpp"
#include "apx/estimator.hpp"
#include "apx/importance.hpp"
#include "apx/model.hpp"
#include "apx/pipeline.hpp"
#include "apx/planner.hpp"
#include "apx/propagation.hpp"
#include "apx/qmc.hpp"
#include "apx/replay.hpp"
#include "apx/report.hpp"
#include "apx/sampling.hpp"
#include "apx/serve.hpp"
#include "apx/sobol.hpp"
#include "apx/synth.hpp"
