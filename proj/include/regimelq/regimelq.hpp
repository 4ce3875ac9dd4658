#pragma once

// Regime-switching stochastic LQ control and mean-variance
// asset-liability management.

#include "regimelq/backward_systems.hpp"
#include "regimelq/coefficients.hpp"
#include "regimelq/config_io.hpp"
#include "regimelq/errors.hpp"
#include "regimelq/lq_core.hpp"
#include "regimelq/market_model.hpp"
#include "regimelq/montecarlo.hpp"
#include "regimelq/mv_alm.hpp"
#include "regimelq/regime_chain.hpp"
