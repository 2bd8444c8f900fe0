#pragma once

#include "tate/version.hpp"
#include "tate/errors.hpp"
#include "tate/rng.hpp"
#include "tate/parallel.hpp"
#include "tate/csv.hpp"
#include "tate/data_model.hpp"
#include "tate/tilt.hpp"
#include "tate/nuisance.hpp"
#include "tate/report.hpp"
#include "tate/or_estimator.hpp"
#include "tate/eif_estimator.hpp"
#include "tate/calibration.hpp"
#include "tate/simulation.hpp"
