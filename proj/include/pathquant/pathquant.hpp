#pragma once

#include "pathquant/brownian.hpp"
#include "pathquant/codeword.hpp"
#include "pathquant/config.hpp"
#include "pathquant/errors.hpp"
#include "pathquant/gauss_hermite.hpp"
#include "pathquant/model.hpp"
#include "pathquant/models.hpp"
#include "pathquant/normal.hpp"
#include "pathquant/ode.hpp"
#include "pathquant/parallel.hpp"
#include "pathquant/pricing.hpp"
#include "pathquant/quant1d.hpp"
#include "pathquant/rmq.hpp"
#include "pathquant/rng.hpp"
