#pragma once

#include "core.hpp"
#include "fft.hpp"
#include "grid.hpp"
#include "random.hpp"
#include "problem.hpp"
#include "energy.hpp"
#include "envelope.hpp"
#include "beta.hpp"
#include "continuation.hpp"
#include "verify.hpp"
#include "io.hpp"
