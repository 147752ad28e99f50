#pragma once

// Umbrella header.

#include "pow3r/aggregation.hpp"
#include "pow3r/commands.hpp"
#include "pow3r/dataset_io.hpp"
#include "pow3r/diagnostic.hpp"
#include "pow3r/engine.hpp"
#include "pow3r/factor_state.hpp"
#include "pow3r/judge/judge.hpp"
#include "pow3r/judge/prompts.hpp"
#include "pow3r/judge/verdict_cache.hpp"
#include "pow3r/judge/verdict_parser.hpp"
#include "pow3r/manifest.hpp"
#include "pow3r/rubric.hpp"
#include "pow3r/simulate.hpp"
