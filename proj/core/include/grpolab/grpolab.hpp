#pragma once

#include "grpolab/advisor.hpp"
#include "grpolab/error.hpp"
#include "grpolab/grpo.hpp"
#include "grpolab/law_params.hpp"
#include "grpolab/random.hpp"
#include "grpolab/scaling_law.hpp"
#include "grpolab/telemetry.hpp"
#include "grpolab/toy_policy.hpp"
