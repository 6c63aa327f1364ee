#pragma once

#include "sensel/baselines.hpp"
#include "sensel/configuration.hpp"
#include "sensel/cost.hpp"
#include "sensel/em.hpp"
#include "sensel/errors.hpp"
#include "sensel/exact_oracle.hpp"
#include "sensel/gaussian_model.hpp"
#include "sensel/gibbs.hpp"
#include "sensel/harness.hpp"
#include "sensel/io.hpp"
#include "sensel/learning.hpp"
