#pragma once

// Umbrella header.

#include "dmm/core.hpp"
#include "dmm/instance.hpp"
#include "dmm/layout.hpp"
#include "dmm/partition.hpp"
#include "dmm/permute.hpp"
#include "dmm/rng.hpp"
#include "dmm/sort.hpp"
#include "dmm/view.hpp"
