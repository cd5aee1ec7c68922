#pragma once

#include "copsref/error.hpp"
#include "copsref/common.hpp"
#include "copsref/scene_graph.hpp"
#include "copsref/relation_weights.hpp"
#include "copsref/reasoning.hpp"
#include "copsref/balance.hpp"
#include "copsref/expression.hpp"
#include "copsref/distractor.hpp"
#include "copsref/stats.hpp"
#include "copsref/task_eval.hpp"
#include "copsref/hard_mining.hpp"
#include "copsref/config.hpp"
#include "copsref/pipeline.hpp"
#include "copsref/synthetic.hpp"
