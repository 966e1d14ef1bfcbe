#pragma once

#include "reconf/signals.hpp"
#include "reconf/circuit.hpp"
#include "reconf/transient.hpp"
#include "reconf/topologies.hpp"
#include "reconf/analysis.hpp"
#include "reconf/waveform_csv.hpp"
#include "reconf/scenario.hpp"
