#pragma once

#include "ddscbf/core.hpp"
#include "ddscbf/rng.hpp"
#include "ddscbf/sde.hpp"
#include "ddscbf/barrier.hpp"
#include "ddscbf/simulate.hpp"
#include "ddscbf/io.hpp"
#include "ddscbf/parallel.hpp"
#include "ddscbf/estimator.hpp"
#include "ddscbf/mlp.hpp"
#include "ddscbf/safety_filter.hpp"
#include "ddscbf/presets.hpp"
#include "ddscbf/experiments.hpp"
