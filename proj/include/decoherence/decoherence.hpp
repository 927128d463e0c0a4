#pragma once

#include "decoherence/errors.hpp"
#include "decoherence/gaussian_core.hpp"
#include "decoherence/ode_integrator.hpp"
#include "decoherence/exact_evolution.hpp"
#include "decoherence/analytic_n1.hpp"
#include "decoherence/master_equation.hpp"
#include "decoherence/density_matrix_n1.hpp"
#include "decoherence/experiments.hpp"
