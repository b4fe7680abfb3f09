#ifndef ACTLOC_FEATURES_HPP
#define ACTLOC_FEATURES_HPP

#include <span>
#include <string>
#include <vector>

#include "actloc/types.hpp"

namespace actloc {

// One-feature threshold classifier: h(x) = polarity * sign(x[feature] - threshold).
struct DecisionStump {
    int feature = 0;
    double threshold = 0.0;
    int polarity = 1;     // +1 or -1
    double weight = 1.0;  // boosting coefficient alpha

    int predict(std::span<const double> x) const {
        return (x[feature] > threshold ? 1 : -1) * polarity;
    }
};

struct StumpEnsemble {
    std::string target;  // label this detector was trained for
    std::vector<DecisionStump> stumps;
    double sigmoid_scale = 1.0;
    // Per-feature standard deviations of the training set, used to
    // normalize signed distances to the decision boundaries.
    std::vector<double> feature_scales;
};

using FeatureMatrix = std::vector<std::vector<double>>;

// Best (feature, midpoint threshold, polarity) by weighted 0/1 error.
// Ties resolved by (error, feature, threshold, polarity=+1 first).
// Throws NoSplitError when no feature admits a split, BoostingStallError
// when the best achievable error is >= 0.5, std::invalid_argument on bad
// weights or single-class labels.
DecisionStump train_stump(const FeatureMatrix& x, const std::vector<int>& y,
                          const std::vector<double>& w);

// Discrete AdaBoost over decision stumps. Stops early when a weak learner
// stalls (kept rounds are returned) or a perfect stump is found.
StumpEnsemble train_adaboost(const FeatureMatrix& x, const std::vector<int>& y, int rounds);

// Boosting-weighted mean of per-stump normalized signed distances.
double ensemble_margin(const StumpEnsemble& ens, std::span<const double> x);

// Sigmoid-calibrated detection probability in [0, 1].
double detection_probability(const StumpEnsemble& ens, std::span<const double> x);

// Uniform quantization of a probability into bins 1..b; the top bin is
// closed so quantize(1.0) == b.
int quantize(double p, int b = kNumQuantBins);

// Exactly 8 ensembles: one per motion state, then one per environment.
MsbObservation featurize_frame(std::span<const StumpEnsemble> ensembles,
                               std::span<const double> x);

// --- file formats ---------------------------------------------------------

// CSV with a header row; columns `label_state` and `label_env`, when
// present, are split out of the feature matrix.
struct FeatureDataset {
    std::vector<std::string> feature_names;
    FeatureMatrix rows;
    std::vector<MotionState> label_state;  // empty when the column is absent
    std::vector<Environment> label_env;
};

FeatureDataset load_feature_csv(const std::string& path);

// Full detector bank: 5 motion-state ensembles then 3 environment ones.
std::vector<StumpEnsemble> train_classifier_bank(const FeatureDataset& data, int rounds);

std::string serialize_ensembles(std::span<const StumpEnsemble> bank);
std::vector<StumpEnsemble> parse_ensembles(const std::string& text);
void save_ensembles(std::span<const StumpEnsemble> bank, const std::string& path);
std::vector<StumpEnsemble> load_ensembles(const std::string& path);

}  // namespace actloc

#endif
