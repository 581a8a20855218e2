#pragma once

#include "annofuse/annotator_sim.hpp"
#include "annofuse/dataset_io.hpp"
#include "annofuse/detection_eval.hpp"
#include "annofuse/earl_loss.hpp"
#include "annofuse/error.hpp"
#include "annofuse/geometry.hpp"
#include "annofuse/records.hpp"
#include "annofuse/render.hpp"
#include "annofuse/wbf_fusion.hpp"
