#pragma once

#include "mtsr/apg.hpp"
#include "mtsr/consistency.hpp"
#include "mtsr/csv.hpp"
#include "mtsr/dataset.hpp"
#include "mtsr/errors.hpp"
#include "mtsr/evaluation.hpp"
#include "mtsr/models.hpp"
#include "mtsr/prox.hpp"
#include "mtsr/task_graph.hpp"
#include "mtsr/types.hpp"
