#pragma once

// Umbrella header for the whole library.

#include "fmpn/errors.hpp"
#include "fmpn/random.hpp"
#include "fmpn/parallel.hpp"
#include "fmpn/tensor.hpp"
#include "fmpn/image_io.hpp"
#include "fmpn/landmarks.hpp"
#include "fmpn/similarity.hpp"
#include "fmpn/align.hpp"
#include "fmpn/manifest.hpp"
#include "fmpn/augment.hpp"
#include "fmpn/folds.hpp"
#include "fmpn/maskgen.hpp"
#include "fmpn/nn.hpp"
#include "fmpn/networks.hpp"
#include "fmpn/losses.hpp"
#include "fmpn/schedule.hpp"
#include "fmpn/adam.hpp"
#include "fmpn/checkpoint.hpp"
#include "fmpn/training.hpp"
#include "fmpn/evaluation.hpp"
#include "fmpn/synthdata.hpp"
