// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <span>
#include <vector>

namespace catmix::stats {

// Upper tail P(X >= x) for X ~ chi-square(df).
double chi2_sf(double x, double df);

// Two-sided p-value of a standard normal z statistic.
double normal_two_sided_p(double z);

// Sample quantile with linear interpolation between order statistics
// (Hyndman-Fan type 7). `values` need not be sorted.
double quantile(std::vector<double> values, double prob);

double mean(std::span<const double> values);

// Sample standard deviation (n - 1 denominator); 0 for fewer than 2 values.
double sample_sd(std::span<const double> values);

}  // namespace catmix::stats
