#pragma once

// Goodness-of-fit test for linear regression on concomitants, based on the
// self-normalized bridge of residual partial sums.

#include "ebridge/error.hpp"
#include "ebridge/linalg.hpp"
#include "ebridge/model.hpp"
#include "ebridge/bridge.hpp"
#include "ebridge/chisq_test.hpp"
#include "ebridge/simulate.hpp"
#include "ebridge/io.hpp"
