#pragma once

#include "stablehjb/app.hpp"
#include "stablehjb/config.hpp"
#include "stablehjb/control.hpp"
#include "stablehjb/error.hpp"
#include "stablehjb/hjb.hpp"
#include "stablehjb/io.hpp"
#include "stablehjb/ou.hpp"
#include "stablehjb/parallel.hpp"
#include "stablehjb/policy.hpp"
#include "stablehjb/presets.hpp"
#include "stablehjb/quadrature.hpp"
#include "stablehjb/rng.hpp"
#include "stablehjb/spectrum.hpp"
#include "stablehjb/stable.hpp"
#include "stablehjb/state.hpp"
