#pragma once

#include "cscf/afri.hpp"
#include "cscf/error.hpp"
#include "cscf/fft.hpp"
#include "cscf/freq_solver.hpp"
#include "cscf/grid.hpp"
#include "cscf/image_io.hpp"
#include "cscf/jsrl.hpp"
#include "cscf/metrics.hpp"
#include "cscf/ops.hpp"
#include "cscf/tensor_io.hpp"
#include "cscf/vgii.hpp"
