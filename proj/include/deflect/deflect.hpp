#pragma once

#include "deflect/model.hpp"
#include "deflect/mdc.hpp"
#include "deflect/solvers.hpp"
#include "deflect/sim.hpp"
#include "deflect/oracle.hpp"
#include "deflect/config.hpp"
#include "deflect/scenario.hpp"
