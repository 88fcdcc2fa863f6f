#ifndef HEMBED_HEMBED_HPP
#define HEMBED_HEMBED_HPP

// Umbrella header for the whole library.

#include "hembed/common.hpp"
#include "hembed/encoder.hpp"
#include "hembed/hierarchy.hpp"
#include "hembed/loss.hpp"
#include "hembed/metrics.hpp"
#include "hembed/mining.hpp"
#include "hembed/report.hpp"
#include "hembed/synth.hpp"
#include "hembed/trainer.hpp"

#endif  // HEMBED_HEMBED_HPP
