#pragma once

// Umbrella header for the whole library.

#include "neifi/acp.hpp"
#include "neifi/baselines.hpp"
#include "neifi/config.hpp"
#include "neifi/dynamics.hpp"
#include "neifi/harness.hpp"
#include "neifi/io.hpp"
#include "neifi/metrics.hpp"
#include "neifi/parallel.hpp"
#include "neifi/policy.hpp"
#include "neifi/presets.hpp"
#include "neifi/rng.hpp"
#include "neifi/svg.hpp"
#include "neifi/topology.hpp"
#include "neifi/world.hpp"
