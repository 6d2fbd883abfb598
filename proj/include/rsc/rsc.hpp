#pragma once

#include "rsc/aggregate.hpp"
#include "rsc/bayes.hpp"
#include "rsc/denoise.hpp"
#include "rsc/learners.hpp"
#include "rsc/panel.hpp"
#include "rsc/pipeline.hpp"
#include "rsc/rng.hpp"
#include "rsc/select.hpp"
#include "rsc/synthgen.hpp"
