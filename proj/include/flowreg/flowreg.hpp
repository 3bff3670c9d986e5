#pragma once

#include "flowreg/error.hpp"
#include "flowreg/linalg.hpp"
#include "flowreg/parallel.hpp"
#include "flowreg/quadrature.hpp"
#include "flowreg/schedules.hpp"
#include "flowreg/targets.hpp"
#include "flowreg/driftfield.hpp"
#include "flowreg/bessel_sphere.hpp"
#include "flowreg/grids_samplers.hpp"
#include "flowreg/metrics.hpp"
#include "flowreg/regularity_probe.hpp"
#include "flowreg/transport_flow.hpp"
#include "flowreg/format.hpp"
#include "flowreg/experiments.hpp"
