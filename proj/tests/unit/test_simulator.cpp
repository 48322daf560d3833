// SPDX-License-Identifier: BSD-3-Clause

#include <doctest.h>

#include "scout/simulator.hpp"
