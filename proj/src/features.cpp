#include "actloc/features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "actloc/errors.hpp"

namespace actloc {

using nlohmann::json;

namespace {

void check_training_input(const FeatureMatrix& x, const std::vector<int>& y,
                          const std::vector<double>& w) {
    if (x.empty() || x.size() != y.size() || x.size() != w.size())
        throw std::invalid_argument("train_stump: inconsistent sample/label/weight sizes");
    bool pos = false, neg = false;
    for (int label : y) {
        if (label == 1) pos = true;
        else if (label == -1) neg = true;
        else throw std::invalid_argument("train_stump: labels must be +1 or -1");
    }
    if (!pos || !neg)
        throw std::invalid_argument("train_stump: need at least one sample of each label");
    double sum = 0.0;
    for (double v : w) {
        if (v < 0.0) throw std::invalid_argument("train_stump: negative sample weight");
        sum += v;
    }
    if (!(sum > 0.0)) throw std::invalid_argument("train_stump: weights sum to zero");
}

}  // namespace

DecisionStump train_stump(const FeatureMatrix& x, const std::vector<int>& y,
                          const std::vector<double>& w) {
    check_training_input(x, y, w);
    const std::size_t n = x.size();
    const std::size_t dim = x[0].size();
    const double wsum = std::accumulate(w.begin(), w.end(), 0.0);

    bool found_split = false;
    double best_err = 2.0;
    DecisionStump best;

    std::vector<std::size_t> order(n);
    for (std::size_t f = 0; f < dim; ++f) {
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return x[a][f] < x[b][f]; });

        // err_plus(thr) for polarity +1: positives at or below thr plus
        // negatives above it. Sweep thresholds upward.
        double pos_below = 0.0;
        double neg_above = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            if (y[i] == -1) neg_above += w[i];

        std::size_t i = 0;
        while (i < n) {
            // Consume the block of equal feature values.
            std::size_t j = i;
            while (j < n && x[order[j]][f] == x[order[i]][f]) {
                if (y[order[j]] == 1) pos_below += w[order[j]];
                else neg_above -= w[order[j]];
                ++j;
            }
            if (j == n) break;  // no value above: no midpoint here
            found_split = true;
            const double thr = 0.5 * (x[order[i]][f] + x[order[j]][f]);
            const double err_plus = (pos_below + neg_above) / wsum;
            for (int pol : {1, -1}) {
                const double err = pol == 1 ? err_plus : 1.0 - err_plus;
                if (err < best_err) {
                    best_err = err;
                    best = DecisionStump{static_cast<int>(f), thr, pol, 1.0};
                }
            }
            i = j;
        }
    }

    if (!found_split)
        throw NoSplitError("train_stump: all samples identical in every feature");
    if (best_err >= 0.5)
        throw BoostingStallError("train_stump: best achievable weighted error >= 0.5");
    return best;
}

StumpEnsemble train_adaboost(const FeatureMatrix& x, const std::vector<int>& y, int rounds) {
    if (rounds < 1) throw std::invalid_argument("train_adaboost: rounds must be >= 1");
    const std::size_t n = x.size();
    std::vector<double> w(n, 1.0 / static_cast<double>(n));
    check_training_input(x, y, w);

    StumpEnsemble ens;
    ens.sigmoid_scale = 1.0;

    // Per-feature population standard deviation for distance normalization.
    const std::size_t dim = x[0].size();
    ens.feature_scales.assign(dim, 1.0);
    for (std::size_t f = 0; f < dim; ++f) {
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) mean += x[i][f];
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double d = x[i][f] - mean;
            var += d * d;
        }
        var /= static_cast<double>(n);
        if (var > 0.0) ens.feature_scales[f] = std::sqrt(var);
    }

    for (int t = 0; t < rounds; ++t) {
        DecisionStump stump;
        try {
            stump = train_stump(x, y, w);
        } catch (const NoSplitError&) {
            if (ens.stumps.empty()) throw;
            break;
        } catch (const BoostingStallError&) {
            if (ens.stumps.empty()) throw;
            break;
        }

        double eps = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            if (stump.predict(x[i]) != y[i]) eps += w[i];
        const bool perfect = eps <= 0.0;
        eps = std::clamp(eps, 1e-12, 1.0 - 1e-12);
        const double alpha = 0.5 * std::log((1.0 - eps) / eps);
        stump.weight = alpha;
        ens.stumps.push_back(stump);
        if (perfect) break;  // reweighting would degenerate

        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            w[i] *= std::exp(-alpha * y[i] * stump.predict(x[i]));
            sum += w[i];
        }
        for (double& v : w) v /= sum;
    }
    return ens;
}

double ensemble_margin(const StumpEnsemble& ens, std::span<const double> x) {
    if (ens.stumps.empty()) throw std::invalid_argument("ensemble_margin: empty ensemble");
    double num = 0.0, den = 0.0;
    for (const DecisionStump& s : ens.stumps) {
        if (static_cast<std::size_t>(s.feature) >= x.size())
            throw std::invalid_argument("ensemble_margin: feature vector too short");
        double scale = 1.0;
        if (static_cast<std::size_t>(s.feature) < ens.feature_scales.size())
            scale = ens.feature_scales[s.feature];
        const double dist = (x[s.feature] - s.threshold) / scale;
        num += s.weight * s.polarity * dist;
        den += s.weight;
    }
    return num / den;
}

double detection_probability(const StumpEnsemble& ens, std::span<const double> x) {
    const double m = ensemble_margin(ens, x);
    return 1.0 / (1.0 + std::exp(-ens.sigmoid_scale * m));
}

int quantize(double p, int b) {
    if (!(p >= 0.0 && p <= 1.0))
        throw std::invalid_argument("quantize: probability outside [0, 1]");
    return std::min(static_cast<int>(std::floor(p * b)) + 1, b);
}

MsbObservation featurize_frame(std::span<const StumpEnsemble> ensembles,
                               std::span<const double> x) {
    if (ensembles.size() != static_cast<std::size_t>(kNumMotionStates + kNumEnvironments))
        throw std::invalid_argument("featurize_frame: expected 8 ensembles");
    MsbObservation obs;
    for (int i = 0; i < kNumMotionStates; ++i)
        obs.state_bins[i] = quantize(detection_probability(ensembles[i], x));
    for (int i = 0; i < kNumEnvironments; ++i)
        obs.env_bins[i] = quantize(detection_probability(ensembles[kNumMotionStates + i], x));
    return obs;
}

// --- file formats ----------------------------------------------------------

FeatureDataset load_feature_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open feature file: " + path);

    auto split = [](const std::string& line) {
        std::vector<std::string> out;
        std::string cur;
        for (char c : line) {
            if (c == ',') {
                out.push_back(cur);
                cur.clear();
            } else if (c != '\r') {
                cur.push_back(c);
            }
        }
        out.push_back(cur);
        return out;
    };

    std::string line;
    if (!std::getline(in, line)) throw ParseError(path + ": empty feature file");
    const std::vector<std::string> header = split(line);

    int state_col = -1, env_col = -1;
    FeatureDataset data;
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (header[c] == "label_state") state_col = static_cast<int>(c);
        else if (header[c] == "label_env") env_col = static_cast<int>(c);
        else data.feature_names.push_back(header[c]);
    }

    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const std::vector<std::string> cells = split(line);
        if (cells.size() != header.size()) {
            std::ostringstream os;
            os << path << ":" << lineno << ": expected " << header.size() << " columns, got "
               << cells.size();
            throw ParseError(os.str());
        }
        std::vector<double> row;
        row.reserve(data.feature_names.size());
        for (std::size_t c = 0; c < cells.size(); ++c) {
            if (static_cast<int>(c) == state_col) {
                data.label_state.push_back(motion_state_from_string(cells[c]));
            } else if (static_cast<int>(c) == env_col) {
                data.label_env.push_back(environment_from_string(cells[c]));
            } else {
                try {
                    row.push_back(std::stod(cells[c]));
                } catch (const std::exception&) {
                    std::ostringstream os;
                    os << path << ":" << lineno << ": bad number '" << cells[c] << "'";
                    throw ParseError(os.str());
                }
            }
        }
        data.rows.push_back(std::move(row));
    }
    return data;
}

std::vector<StumpEnsemble> train_classifier_bank(const FeatureDataset& data, int rounds) {
    if (data.label_state.size() != data.rows.size() ||
        data.label_env.size() != data.rows.size())
        throw std::invalid_argument("train_classifier_bank: dataset must carry both labels");

    std::vector<StumpEnsemble> bank;
    std::vector<int> y(data.rows.size());
    for (int s = 0; s < kNumMotionStates; ++s) {
        for (std::size_t i = 0; i < y.size(); ++i)
            y[i] = data.label_state[i] == static_cast<MotionState>(s) ? 1 : -1;
        StumpEnsemble ens = train_adaboost(data.rows, y, rounds);
        ens.target = to_string(static_cast<MotionState>(s));
        bank.push_back(std::move(ens));
    }
    for (int e = 0; e < kNumEnvironments; ++e) {
        for (std::size_t i = 0; i < y.size(); ++i)
            y[i] = data.label_env[i] == static_cast<Environment>(e) ? 1 : -1;
        StumpEnsemble ens = train_adaboost(data.rows, y, rounds);
        ens.target = to_string(static_cast<Environment>(e));
        bank.push_back(std::move(ens));
    }
    return bank;
}

std::string serialize_ensembles(std::span<const StumpEnsemble> bank) {
    json out = json::array();
    for (const StumpEnsemble& ens : bank) {
        json stumps = json::array();
        for (const DecisionStump& s : ens.stumps)
            stumps.push_back({{"feature", s.feature},
                              {"threshold", s.threshold},
                              {"polarity", s.polarity},
                              {"weight", s.weight}});
        out.push_back({{"target", ens.target},
                       {"sigmoid_scale", ens.sigmoid_scale},
                       {"feature_scales", ens.feature_scales},
                       {"stumps", std::move(stumps)}});
    }
    return out.dump(2);
}

std::vector<StumpEnsemble> parse_ensembles(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("ensembles: ") + e.what());
    }
    std::vector<StumpEnsemble> bank;
    try {
        for (const json& je : j) {
            StumpEnsemble ens;
            ens.target = je.value("target", std::string());
            ens.sigmoid_scale = je.at("sigmoid_scale").get<double>();
            if (!(ens.sigmoid_scale > 0.0))
                throw ValidationError("ensembles: sigmoid_scale must be positive");
            ens.feature_scales = je.at("feature_scales").get<std::vector<double>>();
            for (const json& js : je.at("stumps")) {
                DecisionStump s;
                s.feature = js.at("feature").get<int>();
                s.threshold = js.at("threshold").get<double>();
                s.polarity = js.at("polarity").get<int>();
                s.weight = js.at("weight").get<double>();
                if (s.polarity != 1 && s.polarity != -1)
                    throw ValidationError("ensembles: polarity must be +1 or -1");
                if (!(s.weight > 0.0))
                    throw ValidationError("ensembles: stump weight must be positive");
                ens.stumps.push_back(s);
            }
            if (ens.stumps.empty()) throw ValidationError("ensembles: empty stump list");
            bank.push_back(std::move(ens));
        }
    } catch (const json::exception& e) {
        throw ParseError(std::string("ensembles: ") + e.what());
    }
    return bank;
}

void save_ensembles(std::span<const StumpEnsemble> bank, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot open for writing: " + path);
    out << serialize_ensembles(bank) << '\n';
}

std::vector<StumpEnsemble> load_ensembles(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open ensemble file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_ensembles(buf.str());
}

}  // namespace actloc
