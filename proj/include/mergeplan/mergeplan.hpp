#pragma once

#include "mergeplan/bench.hpp"
#include "mergeplan/config.hpp"
#include "mergeplan/core.hpp"
#include "mergeplan/driver_models.hpp"
#include "mergeplan/errors.hpp"
#include "mergeplan/estimation.hpp"
#include "mergeplan/planner.hpp"
#include "mergeplan/pomcpow.hpp"
#include "mergeplan/pomdp.hpp"
#include "mergeplan/random.hpp"
