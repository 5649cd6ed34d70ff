#pragma once

// Umbrella header for the random-hierarchy-model toolkit.

#include "rhm/bigmath.hpp"
#include "rhm/corpus.hpp"
#include "rhm/correlations.hpp"
#include "rhm/derivation.hpp"
#include "rhm/errors.hpp"
#include "rhm/exact.hpp"
#include "rhm/grammar.hpp"
#include "rhm/io.hpp"
#include "rhm/params.hpp"
#include "rhm/rng.hpp"
#include "rhm/theory.hpp"
