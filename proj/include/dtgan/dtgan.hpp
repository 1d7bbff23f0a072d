#pragma once

// Umbrella header: the whole pipeline in one include.

#include "dtgan/checkpoint.hpp"
#include "dtgan/data.hpp"
#include "dtgan/diff_array.hpp"
#include "dtgan/discriminator.hpp"
#include "dtgan/generator.hpp"
#include "dtgan/graph.hpp"
#include "dtgan/losses.hpp"
#include "dtgan/metrics.hpp"
#include "dtgan/optim.hpp"
#include "dtgan/param_store.hpp"
#include "dtgan/rng.hpp"
#include "dtgan/run_config.hpp"
#include "dtgan/trainer.hpp"
