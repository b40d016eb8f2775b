#pragma once

#include "uncmap/common.hpp"
#include "uncmap/rng.hpp"
#include "uncmap/grid.hpp"
#include "uncmap/uncertainty.hpp"
#include "uncmap/loss_report.hpp"
#include "uncmap/planner.hpp"
#include "uncmap/lane.hpp"
#include "uncmap/losses.hpp"
#include "uncmap/scenegen.hpp"
#include "uncmap/pipeline.hpp"
#include "uncmap/selfcheck.hpp"
#include "uncmap/json_io.hpp"
#include "uncmap/commands.hpp"
