#pragma once

#include "proxsel/dataset.hpp"
#include "proxsel/error.hpp"
#include "proxsel/estimators.hpp"
#include "proxsel/identification.hpp"
#include "proxsel/io.hpp"
#include "proxsel/lasso.hpp"
#include "proxsel/linalg.hpp"
#include "proxsel/parallel.hpp"
#include "proxsel/rng.hpp"
#include "proxsel/simulation.hpp"
#include "proxsel/subsample.hpp"
