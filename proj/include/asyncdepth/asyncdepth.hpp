#pragma once

#include "asyncdepth/bench.hpp"
#include "asyncdepth/depth_featurizer.hpp"
#include "asyncdepth/depth_renderer.hpp"
#include "asyncdepth/descriptor_io.hpp"
#include "asyncdepth/errors.hpp"
#include "asyncdepth/eval_metrics.hpp"
#include "asyncdepth/geometry.hpp"
#include "asyncdepth/localization_perturb.hpp"
#include "asyncdepth/point_io.hpp"
#include "asyncdepth/synth_scene.hpp"
#include "asyncdepth/traversal_store.hpp"
