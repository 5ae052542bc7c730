#pragma once

#include "fqsim/kpi.hpp"
#include "fqsim/trace.hpp"

// Serial single-loop reference implementations of the KPI kernels. These are
// the independent oracles for the parallel kernels in kpi.cpp and must stay
// free of shared code with them.
namespace fqsim::kpi_reference {

double std_dev(const FrequencyTrace& trace);
DwellSplit minutes_outside(const FrequencyTrace& trace, double band_hz);
double percent_within(const FrequencyTrace& trace, double band_hz);
NadirZenith nadir_zenith(const FrequencyTrace& trace);
double longest_excursion_s(const FrequencyTrace& trace, double band_hz);

}  // namespace fqsim::kpi_reference
