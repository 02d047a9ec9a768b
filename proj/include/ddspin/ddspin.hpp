#pragma once

#include "ddspin/config.hpp"
#include "ddspin/evolve.hpp"
#include "ddspin/field.hpp"
#include "ddspin/fit.hpp"
#include "ddspin/io.hpp"
#include "ddspin/parallel.hpp"
#include "ddspin/presets.hpp"
#include "ddspin/rational.hpp"
#include "ddspin/rng.hpp"
#include "ddspin/runner.hpp"
#include "ddspin/sense.hpp"
#include "ddspin/sequence.hpp"
#include "ddspin/taylor.hpp"
