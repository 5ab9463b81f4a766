#pragma once

#include "adaterm/numerics.hpp"
#include "adaterm/framing.hpp"
#include "adaterm/tdist.hpp"
#include "adaterm/models.hpp"
#include "adaterm/optimizers.hpp"
#include "adaterm/problems.hpp"
#include "adaterm/regret.hpp"
#include "adaterm/surfaces.hpp"
#include "adaterm/gradcheck.hpp"
#include "adaterm/harness.hpp"
