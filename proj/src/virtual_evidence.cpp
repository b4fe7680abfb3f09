#include "actloc/virtual_evidence.hpp"

#include <sstream>
#include <stdexcept>

#include "actloc/errors.hpp"

namespace actloc {

void VeSchedule::validate() const {
    for (std::size_t k = 0; k < frames.size(); ++k) {
        bool any = false;
        for (int s = 0; s < kNumMotionStates; ++s) {
            for (int e = 0; e < kNumEnvironments; ++e) {
                const double v = frames[k][s * kNumEnvironments + e];
                if (v < 0.0) {
                    std::ostringstream os;
                    os << "virtual evidence at frame " << k << " has a negative score";
                    throw ValidationError(os.str());
                }
                if (v > 0.0 && is_admissible(static_cast<MotionState>(s),
                                             static_cast<Environment>(e)))
                    any = true;
            }
        }
        if (!any) {
            std::ostringstream os;
            os << "virtual evidence at frame " << k
               << " gives zero score to every admissible pair";
            throw ValidationError(os.str());
        }
    }
}

const char* to_string(ScheduleKind k) {
    switch (k) {
        case ScheduleKind::HardLabels: return "HardLabels";
        case ScheduleKind::LinearFade: return "LinearFade";
        case ScheduleKind::TwoWayUniform: return "TwoWayUniform";
        case ScheduleKind::AllUniform: return "AllUniform";
    }
    return "?";
}

ScheduleKind schedule_kind_from_string(std::string_view name) {
    for (ScheduleKind k : {ScheduleKind::HardLabels, ScheduleKind::LinearFade,
                           ScheduleKind::TwoWayUniform, ScheduleKind::AllUniform})
        if (name == to_string(k)) return k;
    throw ParseError("unknown schedule kind: " + std::string(name));
}

namespace {

std::array<double, kNumSePairs> all_uniform_row() {
    std::array<double, kNumSePairs> row{};
    for (int s = 0; s < kNumMotionStates; ++s)
        for (int e = 0; e < kNumEnvironments; ++e)
            if (is_admissible(static_cast<MotionState>(s), static_cast<Environment>(e)))
                row[s * kNumEnvironments + e] = 1.0;
    return row;
}

}  // namespace

VeSchedule expand_annotations(const std::vector<LabelSpan>& spans, int trace_len,
                              ScheduleKind kind) {
    validate_spans(spans, trace_len);
    if (spans.empty() && kind != ScheduleKind::AllUniform)
        throw std::invalid_argument("expand_annotations: no spans to expand");

    VeSchedule ve;
    ve.frames.assign(trace_len, std::array<double, kNumSePairs>{});

    // Labeled blocks: delta scores.
    for (const LabelSpan& sp : spans)
        for (int k = sp.start; k <= sp.end; ++k)
            ve.frames[k][se_index(sp.state, sp.env)] = 1.0;

    // Gaps. `left`/`right` are the flanking spans when present.
    auto fill_gap = [&](int from, int to, const LabelSpan* left, const LabelSpan* right) {
        if (from > to) return;
        ScheduleKind k = kind;
        if (kind == ScheduleKind::HardLabels)
            throw std::invalid_argument("expand_annotations: HardLabels forbids gaps");
        // One-sided gaps cannot fade; weight the single neighbor.
        if (kind == ScheduleKind::LinearFade && (!left || !right))
            k = ScheduleKind::TwoWayUniform;

        for (int f = from; f <= to; ++f) {
            auto& row = ve.frames[f];
            switch (k) {
                case ScheduleKind::AllUniform:
                    row = all_uniform_row();
                    break;
                case ScheduleKind::TwoWayUniform:
                    if (left) row[se_index(left->state, left->env)] = 1.0;
                    if (right) row[se_index(right->state, right->env)] = 1.0;
                    break;
                case ScheduleKind::LinearFade: {
                    const int k1 = left->end;
                    const int k2 = right->start;
                    const double toward = static_cast<double>(f - k1) / (k2 - k1);
                    row[se_index(left->state, left->env)] += 1.0 - toward;
                    row[se_index(right->state, right->env)] += toward;
                    break;
                }
                case ScheduleKind::HardLabels:
                    break;  // unreachable
            }
        }
    };

    if (spans.empty()) {
        fill_gap(0, trace_len - 1, nullptr, nullptr);
    } else {
        fill_gap(0, spans.front().start - 1, nullptr, &spans.front());
        for (std::size_t i = 0; i + 1 < spans.size(); ++i)
            fill_gap(spans[i].end + 1, spans[i + 1].start - 1, &spans[i], &spans[i + 1]);
        fill_gap(spans.back().end + 1, trace_len - 1, &spans.back(), nullptr);
    }

    ve.validate();
    return ve;
}

}  // namespace actloc
