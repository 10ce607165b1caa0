#ifndef BDSDE_BDSDE_HPP
#define BDSDE_BDSDE_HPP

#include "bdsde/errors.hpp"
#include "bdsde/generator.hpp"
#include "bdsde/monotone.hpp"
#include "bdsde/noise.hpp"
#include "bdsde/order.hpp"
#include "bdsde/problem.hpp"
#include "bdsde/regression.hpp"
#include "bdsde/solver.hpp"
#include "bdsde/stats.hpp"
#include "bdsde/time_grid.hpp"
#include "bdsde/verification.hpp"

#endif // BDSDE_BDSDE_HPP
