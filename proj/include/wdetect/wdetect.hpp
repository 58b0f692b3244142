#pragma once

#include "graph.hpp"
#include "dynamics.hpp"
#include "watermark.hpp"
#include "attacks.hpp"
#include "detectors.hpp"
#include "hybrid.hpp"
#include "scenario.hpp"
#include "harness.hpp"
