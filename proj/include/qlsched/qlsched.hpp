#pragma once

#include "qlsched/cloud_model.hpp"
#include "qlsched/environment.hpp"
#include "qlsched/errors.hpp"
#include "qlsched/experiment.hpp"
#include "qlsched/mdp.hpp"
#include "qlsched/metrics.hpp"
#include "qlsched/policies.hpp"
#include "qlsched/qlearn.hpp"
#include "qlsched/random.hpp"
#include "qlsched/simulation.hpp"
#include "qlsched/workload.hpp"
