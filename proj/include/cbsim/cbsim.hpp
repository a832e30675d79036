#pragma once
// Umbrella header for the conditional-beam-splitter gate simulator.

#include "cbsim/fock.hpp"
#include "cbsim/generators.hpp"
#include "cbsim/noise.hpp"
#include "cbsim/estimators.hpp"
#include "cbsim/engine.hpp"
#include "cbsim/protocols.hpp"
#include "cbsim/seqlang.hpp"
#include "cbsim/io.hpp"
