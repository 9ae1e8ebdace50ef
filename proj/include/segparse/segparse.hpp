#pragma once

// Umbrella header for the segparse library: learned hierarchical
// decomposition of labeled images into axis-aligned segments, trained by
// imitating an information-gain-maximizing expert.

#include "segparse/baselines.hpp"
#include "segparse/checkpoint.hpp"
#include "segparse/config.hpp"
#include "segparse/error.hpp"
#include "segparse/eval.hpp"
#include "segparse/grammar.hpp"
#include "segparse/nn.hpp"
#include "segparse/optim.hpp"
#include "segparse/oracle.hpp"
#include "segparse/png_io.hpp"
#include "segparse/raster.hpp"
#include "segparse/rng.hpp"
#include "segparse/rollout.hpp"
#include "segparse/synthdata.hpp"
#include "segparse/trainer.hpp"
#include "segparse/tree_json.hpp"
