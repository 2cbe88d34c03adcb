#pragma once

#include "t2d/config.hpp"
#include "t2d/data.hpp"
#include "t2d/error.hpp"
#include "t2d/kernel.hpp"
#include "t2d/metrics.hpp"
#include "t2d/neural.hpp"
#include "t2d/pipeline.hpp"
#include "t2d/rng.hpp"
#include "t2d/svm.hpp"
