#pragma once

#include <posehyp/archive.hpp>
#include <posehyp/cma_es.hpp>
#include <posehyp/config.hpp>
#include <posehyp/cost.hpp>
#include <posehyp/mesh.hpp>
#include <posehyp/online_update.hpp>
#include <posehyp/plausibility.hpp>
#include <posehyp/pose.hpp>
#include <posehyp/primitives.hpp>
#include <posehyp/probe_sim.hpp>
#include <posehyp/qd_registration.hpp>
#include <posehyp/sdf_grid.hpp>
#include <posehyp/semantic_points.hpp>
