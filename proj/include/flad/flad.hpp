#pragma once

#include "flad/cli.hpp"
#include "flad/config.hpp"
#include "flad/data.hpp"
#include "flad/dataset.hpp"
#include "flad/detection.hpp"
#include "flad/error.hpp"
#include "flad/experiment.hpp"
#include "flad/federation.hpp"
#include "flad/metrics.hpp"
#include "flad/nn.hpp"
#include "flad/parallel.hpp"
#include "flad/random.hpp"
#include "flad/summary.hpp"
#include "flad/tensor.hpp"
