#pragma once

#include "tandem/aggregation.hpp"
#include "tandem/bounds.hpp"
#include "tandem/data.hpp"
#include "tandem/io.hpp"
#include "tandem/losses.hpp"
#include "tandem/optimizer.hpp"
#include "tandem/report.hpp"
#include "tandem/rng.hpp"
#include "tandem/simulator.hpp"
