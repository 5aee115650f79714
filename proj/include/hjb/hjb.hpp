#pragma once

#include "hjb/analysis.hpp"
#include "hjb/barrier.hpp"
#include "hjb/cauchy.hpp"
#include "hjb/discretization.hpp"
#include "hjb/ergodic.hpp"
#include "hjb/error.hpp"
#include "hjb/expr.hpp"
#include "hjb/geometry.hpp"
#include "hjb/io.hpp"
#include "hjb/problem.hpp"
#include "hjb/validation.hpp"
