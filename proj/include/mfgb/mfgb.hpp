#pragma once

#include "mfgb/assumptions.hpp"
#include "mfgb/common.hpp"
#include "mfgb/coupling.hpp"
#include "mfgb/field_io.hpp"
#include "mfgb/grid.hpp"
#include "mfgb/model.hpp"
#include "mfgb/pde.hpp"
#include "mfgb/scenario.hpp"
#include "mfgb/verify.hpp"
