#ifndef ACTLOC_METRICS_HPP
#define ACTLOC_METRICS_HPP

#include <span>
#include <vector>

#include "actloc/types.hpp"

namespace actloc {

// Mean frame accuracy across traces with a normal-approximation 95%
// confidence interval (1.96 * sd / sqrt(n), sample standard deviation).
struct AccuracyStats {
    double mean = 0.0;
    double ci95 = 0.0;
    std::vector<double> per_trace;
};

struct EvalResult {
    AccuracyStats state;
    AccuracyStats env;
};

EvalResult evaluate_accuracy(std::span<const std::vector<JointState>> decoded,
                             std::span<const std::vector<JointState>> truth);

AccuracyStats aggregate_accuracies(const std::vector<double>& per_trace);

}  // namespace actloc

#endif
