#pragma once

// Everything except the command-line front end (mvmr/cli.hpp).
#include "mvmr/causal_graph.hpp"
#include "mvmr/dataset.hpp"
#include "mvmr/error.hpp"
#include "mvmr/estimators.hpp"
#include "mvmr/genotypes.hpp"
#include "mvmr/inference.hpp"
#include "mvmr/linalg.hpp"
#include "mvmr/locus.hpp"
#include "mvmr/locus_io.hpp"
#include "mvmr/population.hpp"
#include "mvmr/replicates.hpp"
#include "mvmr/rng.hpp"
#include "mvmr/scenario.hpp"
#include "mvmr/summary_stats.hpp"
