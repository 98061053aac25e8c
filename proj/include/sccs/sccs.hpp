#pragma once

#include "errors.hpp"
#include "rng.hpp"
#include "quadrature.hpp"
#include "scalar_channel.hpp"
#include "coupling_spec.hpp"
#include "replica.hpp"
#include "state_evolution.hpp"
#include "phase_analysis.hpp"
#include "coupling.hpp"
#include "measurement_ops.hpp"
#include "io.hpp"
