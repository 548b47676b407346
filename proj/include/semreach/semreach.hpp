#pragma once

#include "semreach/confusion.hpp"
#include "semreach/conformal.hpp"
#include "semreach/domain.hpp"
#include "semreach/harness.hpp"
#include "semreach/io.hpp"
#include "semreach/mapper.hpp"
#include "semreach/metrics.hpp"
#include "semreach/planner.hpp"
#include "semreach/rng.hpp"
#include "semreach/search.hpp"
#include "semreach/sensor.hpp"
#include "semreach/stats.hpp"
#include "semreach/worldgen.hpp"
