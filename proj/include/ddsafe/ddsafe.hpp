#pragma once

#include "ddsafe/set_algebra.hpp"
#include "ddsafe/reachability.hpp"
#include "ddsafe/safety_filter.hpp"
#include "ddsafe/environment.hpp"
#include "ddsafe/rl_agent.hpp"
#include "ddsafe/orchestrator.hpp"
