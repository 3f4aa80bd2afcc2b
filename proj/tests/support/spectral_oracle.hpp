#pragma once

#include <span>

namespace rawpc::testing {

/// Spectral-peak heuristic: finds the five strongest harmonic peaks of a long
/// zero-padded spectrum and calls the signal inharmonic (spoof, returns 1)
/// when any peak ratio p_h / p_1 departs from h by more than `tolerance`.
int harmonic_peak_classifier(std::span<const double> samples, double sample_rate, double tolerance = 0.004);

}  // namespace rawpc::testing
