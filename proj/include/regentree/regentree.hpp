#pragma once

#include "regentree/error.hpp"
#include "regentree/rng.hpp"
#include "regentree/tree.hpp"
#include "regentree/distance.hpp"
#include "regentree/mtt.hpp"
#include "regentree/coding.hpp"
#include "regentree/gh_metric.hpp"
#include "regentree/discretize.hpp"
#include "regentree/offspring.hpp"
#include "regentree/csbp.hpp"
#include "regentree/samplers.hpp"
#include "regentree/stats.hpp"
#include "regentree/verify.hpp"
