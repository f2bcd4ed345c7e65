#pragma once

// Umbrella header.

#include "amsp/amsp_vconv.hpp"
#include "amsp/autodiff.hpp"
#include "amsp/bench.hpp"
#include "amsp/block_io.hpp"
#include "amsp/detection_io.hpp"
#include "amsp/fad_csp.hpp"
#include "amsp/nms.hpp"
#include "amsp/noise_probe.hpp"
#include "amsp/ops.hpp"
#include "amsp/parallel.hpp"
#include "amsp/random.hpp"
#include "amsp/serialize.hpp"
#include "amsp/tensor.hpp"
