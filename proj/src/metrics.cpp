#include "actloc/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace actloc {

AccuracyStats aggregate_accuracies(const std::vector<double>& per_trace) {
    AccuracyStats out;
    out.per_trace = per_trace;
    const std::size_t n = per_trace.size();
    if (n == 0) return out;
    double sum = 0.0;
    for (double v : per_trace) sum += v;
    out.mean = sum / static_cast<double>(n);
    if (n > 1) {
        double ss = 0.0;
        for (double v : per_trace) {
            const double d = v - out.mean;
            ss += d * d;
        }
        const double sd = std::sqrt(ss / static_cast<double>(n - 1));
        out.ci95 = 1.96 * sd / std::sqrt(static_cast<double>(n));
    }
    return out;
}

EvalResult evaluate_accuracy(std::span<const std::vector<JointState>> decoded,
                             std::span<const std::vector<JointState>> truth) {
    if (decoded.size() != truth.size())
        throw std::invalid_argument("evaluate_accuracy: trace count mismatch");
    std::vector<double> state_acc, env_acc;
    for (std::size_t i = 0; i < decoded.size(); ++i) {
        if (decoded[i].size() != truth[i].size())
            throw std::invalid_argument("evaluate_accuracy: trace length mismatch");
        if (decoded[i].empty())
            throw std::invalid_argument("evaluate_accuracy: empty trace");
        int s_ok = 0, e_ok = 0;
        for (std::size_t k = 0; k < decoded[i].size(); ++k) {
            if (decoded[i][k].state == truth[i][k].state) ++s_ok;
            if (decoded[i][k].env == truth[i][k].env) ++e_ok;
        }
        const double n = static_cast<double>(decoded[i].size());
        state_acc.push_back(s_ok / n);
        env_acc.push_back(e_ok / n);
    }
    EvalResult out;
    out.state = aggregate_accuracies(state_acc);
    out.env = aggregate_accuracies(env_acc);
    return out;
}

}  // namespace actloc
