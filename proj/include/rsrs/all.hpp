#pragma once

#include "rsrs/common.hpp"
#include "rsrs/dense.hpp"
#include "rsrs/experiment.hpp"
#include "rsrs/factorization.hpp"
#include "rsrs/geometry.hpp"
#include "rsrs/io.hpp"
#include "rsrs/oracle.hpp"
#include "rsrs/proxy.hpp"
#include "rsrs/random.hpp"
#include "rsrs/rsrs.hpp"
#include "rsrs/skeleton.hpp"
#include "rsrs/sketch.hpp"
