#ifndef ACTLOC_VIRTUAL_EVIDENCE_HPP
#define ACTLOC_VIRTUAL_EVIDENCE_HPP

#include <array>
#include <string_view>
#include <vector>

#include "actloc/types.hpp"

namespace actloc {

// Per-frame non-negative score over (motion state, environment) pairs,
// multiplied into every frame's score during inference and EM. Scores are
// deliberately unnormalized; posteriors normalize.
struct VeSchedule {
    std::vector<std::array<double, kNumSePairs>> frames;

    int length() const { return static_cast<int>(frames.size()); }
    double score(int k, MotionState s, Environment e) const {
        return frames[k][se_index(s, e)];
    }
    void validate() const;  // throws ValidationError
};

// How label spans are expanded into per-frame scores across unlabeled gaps.
enum class ScheduleKind {
    HardLabels,     // delta on the labeled pair; gaps are an error
    LinearFade,     // linear interpolation between the flanking labels
    TwoWayUniform,  // equal weight on the two flanking labels
    AllUniform,     // uniform over all admissible pairs (plain semi-supervised)
};

const char* to_string(ScheduleKind k);
ScheduleKind schedule_kind_from_string(std::string_view name);  // throws ParseError

// Expand ordered label spans into a schedule of length trace_len.
// Inside spans the score is a delta on the label. Leading/trailing gaps
// under LinearFade fall back to TwoWayUniform toward the only neighbor.
VeSchedule expand_annotations(const std::vector<LabelSpan>& spans, int trace_len,
                              ScheduleKind kind);

}  // namespace actloc

#endif
