#pragma once

#include "audex/dataset.hpp"
#include "audex/error.hpp"
#include "audex/expansion.hpp"
#include "audex/extra_trees.hpp"
#include "audex/matrix.hpp"
#include "audex/metrics.hpp"
#include "audex/oracle.hpp"
#include "audex/random.hpp"
#include "audex/run_config.hpp"
#include "audex/training.hpp"
#include "audex/tsne.hpp"
#include "audex/version.hpp"
