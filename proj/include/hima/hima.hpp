// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "hima/approx.hpp"
#include "hima/core.hpp"
#include "hima/dnc.hpp"
#include "hima/kernels.hpp"
#include "hima/noc.hpp"
#include "hima/partition.hpp"
#include "hima/report.hpp"
#include "hima/script.hpp"
#include "hima/sort_engine.hpp"
#include "hima/tile_sim.hpp"
