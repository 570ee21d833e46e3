#pragma once

// Relational event modeling: event ingestion, endogenous network
// statistics, risk-set sampling, spline designs, four likelihood regimes,
// residual-process diagnostics, and sequence simulation.

#include "remkit/basis.hpp"
#include "remkit/csv.hpp"
#include "remkit/design.hpp"
#include "remkit/diagnostics.hpp"
#include "remkit/error.hpp"
#include "remkit/events.hpp"
#include "remkit/exogenous.hpp"
#include "remkit/fit.hpp"
#include "remkit/formula.hpp"
#include "remkit/likelihood.hpp"
#include "remkit/pipeline.hpp"
#include "remkit/report.hpp"
#include "remkit/risk.hpp"
#include "remkit/rng.hpp"
#include "remkit/sampling.hpp"
#include "remkit/simulate.hpp"
#include "remkit/stats.hpp"
