#pragma once

#include "iqr/analytic.hpp"
#include "iqr/bloch.hpp"
#include "iqr/detector.hpp"
#include "iqr/ensemble.hpp"
#include "iqr/errors.hpp"
#include "iqr/experiment.hpp"
#include "iqr/fokker_planck.hpp"
#include "iqr/noise.hpp"
#include "iqr/qubit.hpp"
#include "iqr/rng.hpp"
#include "iqr/trajectory.hpp"
