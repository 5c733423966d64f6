#pragma once
// Convenience umbrella: the whole tree <-> flow correspondence toolkit.

#include "treeflow/boosting.hpp"
#include "treeflow/commands.hpp"
#include "treeflow/dataset.hpp"
#include "treeflow/diffusion.hpp"
#include "treeflow/distill.hpp"
#include "treeflow/flow_matching.hpp"
#include "treeflow/forest.hpp"
#include "treeflow/hierarchy.hpp"
#include "treeflow/io.hpp"
#include "treeflow/linalg.hpp"
#include "treeflow/metrics.hpp"
#include "treeflow/nn.hpp"
#include "treeflow/rng.hpp"
#include "treeflow/serialize.hpp"
#include "treeflow/sha256.hpp"
#include "treeflow/tree.hpp"
