#pragma once

// Umbrella header for the whole library.

#include "graft/calibration.hpp"
#include "graft/dataset.hpp"
#include "graft/errors.hpp"
#include "graft/experiment.hpp"
#include "graft/gates.hpp"
#include "graft/imputer.hpp"
#include "graft/km.hpp"
#include "graft/matrix.hpp"
#include "graft/metrics.hpp"
#include "graft/model_io.hpp"
#include "graft/net.hpp"
#include "graft/rng.hpp"
#include "graft/soft_rank.hpp"
#include "graft/trainer.hpp"
