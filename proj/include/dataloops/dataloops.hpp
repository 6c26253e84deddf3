#pragma once

#include "dataloops/annotation.hpp"
#include "dataloops/benchmark.hpp"
#include "dataloops/config.hpp"
#include "dataloops/dataloop.hpp"
#include "dataloops/dataset.hpp"
#include "dataloops/denoiser.hpp"
#include "dataloops/densities.hpp"
#include "dataloops/empirical.hpp"
#include "dataloops/grid.hpp"
#include "dataloops/io.hpp"
#include "dataloops/metrics.hpp"
#include "dataloops/mlp.hpp"
#include "dataloops/random.hpp"
#include "dataloops/samplers.hpp"
#include "dataloops/schedule.hpp"
#include "dataloops/suite.hpp"
#include "dataloops/theory.hpp"
#include "dataloops/training.hpp"
#include "dataloops/version.hpp"
