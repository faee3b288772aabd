#pragma once

#include "smmis/error.hpp"
#include "smmis/estimators.hpp"
#include "smmis/experiments.hpp"
#include "smmis/gaussian.hpp"
#include "smmis/io.hpp"
#include "smmis/mixture.hpp"
#include "smmis/oracles.hpp"
#include "smmis/parallel.hpp"
#include "smmis/rng.hpp"
#include "smmis/sampling.hpp"
#include "smmis/signed_log.hpp"
