#pragma once

#include "planecycle/archive.hpp"
#include "planecycle/block.hpp"
#include "planecycle/cli.hpp"
#include "planecycle/error.hpp"
#include "planecycle/metrics.hpp"
#include "planecycle/network.hpp"
#include "planecycle/parallel.hpp"
#include "planecycle/pca.hpp"
#include "planecycle/plane_ops.hpp"
#include "planecycle/ppm.hpp"
#include "planecycle/rng.hpp"
#include "planecycle/selftest.hpp"
#include "planecycle/tensor.hpp"
