#pragma once

#include "tacrefine/binary_io.hpp"
#include "tacrefine/config.hpp"
#include "tacrefine/dataset.hpp"
#include "tacrefine/error.hpp"
#include "tacrefine/eval.hpp"
#include "tacrefine/geometry.hpp"
#include "tacrefine/metrics.hpp"
#include "tacrefine/net.hpp"
#include "tacrefine/refine.hpp"
#include "tacrefine/rng.hpp"
#include "tacrefine/tacsim.hpp"
#include "tacrefine/train.hpp"
