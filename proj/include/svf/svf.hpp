#pragma once

// Umbrella header.

#include "svf/errors.hpp"
#include "svf/functionals.hpp"
#include "svf/gaussian_limits.hpp"
#include "svf/harness.hpp"
#include "svf/io.hpp"
#include "svf/pathsim.hpp"
#include "svf/quadrature.hpp"
#include "svf/rng.hpp"
#include "svf/sampling.hpp"
#include "svf/stats.hpp"
#include "svf/ticks.hpp"
