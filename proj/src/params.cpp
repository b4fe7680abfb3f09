#include "actloc/params.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "actloc/errors.hpp"

namespace actloc {

using nlohmann::json;

namespace {

void check_row(const double* row, int n, const char* cpt, int row_idx, double tol,
               const bool* zero_mask = nullptr) {
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        if (row[i] < 0.0) {
            std::ostringstream os;
            os << cpt << " row " << row_idx << " has a negative entry";
            throw ValidationError(os.str());
        }
        if (zero_mask && zero_mask[i] && row[i] != 0.0) {
            std::ostringstream os;
            os << cpt << " row " << row_idx << " violates a structural zero";
            throw ValidationError(os.str());
        }
        sum += row[i];
    }
    if (std::abs(sum - 1.0) > tol) {
        std::ostringstream os;
        os << cpt << " row " << row_idx << " sums to " << sum << ", expected 1";
        throw ValidationError(os.str());
    }
}

}  // namespace

void validate_params(const ModelParams& p, double tol) {
    for (int e = 0; e < kNumEnvironments; ++e)
        check_row(p.env_trans[e].data(), kNumEnvironments, "env_trans", e, tol);

    for (int e = 0; e < kNumEnvironments; ++e) {
        bool zeros[kNumMotionStates];
        for (int s = 0; s < kNumMotionStates; ++s)
            zeros[s] = is_structural_zero(static_cast<Environment>(e),
                                          static_cast<MotionState>(s));
        for (int sp = 0; sp < kNumMotionStates; ++sp)
            check_row(p.state_trans[e][sp].data(), kNumMotionStates, "state_trans",
                      e * kNumMotionStates + sp, tol, zeros);
    }

    for (int s = 0; s < kNumMotionStates; ++s)
        check_row(p.heading_trans[s].data(), kNumHeadingBins, "heading_trans", s, tol);

    for (int g = 0; g < kNumSpeedGroups; ++g)
        for (int t = 0; t < kNumSpeedBins; ++t)
            check_row(p.speed_trans[g][t].data(), kNumSpeedBins, "speed_trans",
                      g * kNumSpeedBins + t, tol);

    for (int i = 0; i < kNumMotionStates; ++i)
        for (int s = 0; s < kNumMotionStates; ++s)
            check_row(p.obs_state[i][s].data(), kNumQuantBins, "obs_state",
                      i * kNumMotionStates + s, tol);

    for (int i = 0; i < kNumEnvironments; ++i)
        for (int e = 0; e < kNumEnvironments; ++e)
            check_row(p.obs_env[i][e].data(), kNumQuantBins, "obs_env",
                      i * kNumEnvironments + e, tol);

    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
            if (p.map_cpt[a][b] < 0.0 || p.map_cpt[a][b] > 1.0)
                throw ValidationError("map_cpt entries must lie in [0, 1]");

    if (!(p.gps_exponent > 0.0))
        throw ValidationError("gps_exponent must be positive");

    check_row(p.init_state.data(), kNumMotionStates, "init_state", 0, tol);
    check_row(p.init_env.data(), kNumEnvironments, "init_env", 0, tol);
    check_row(p.init_speed.data(), kNumSpeedBins, "init_speed", 0, tol);
    check_row(p.init_heading.data(), kNumHeadingBins, "init_heading", 0, tol);
}

ModelParams make_uniform_params() {
    ModelParams p;
    for (auto& row : p.env_trans) row.fill(1.0 / kNumEnvironments);
    for (int e = 0; e < kNumEnvironments; ++e) {
        int admissible = 0;
        for (int s = 0; s < kNumMotionStates; ++s)
            if (!is_structural_zero(static_cast<Environment>(e), static_cast<MotionState>(s)))
                ++admissible;
        for (int sp = 0; sp < kNumMotionStates; ++sp)
            for (int s = 0; s < kNumMotionStates; ++s)
                p.state_trans[e][sp][s] =
                    is_structural_zero(static_cast<Environment>(e), static_cast<MotionState>(s))
                        ? 0.0
                        : 1.0 / admissible;
    }
    for (auto& row : p.heading_trans) row.fill(1.0 / kNumHeadingBins);
    for (auto& g : p.speed_trans)
        for (auto& row : g) row.fill(1.0 / kNumSpeedBins);
    for (auto& clf : p.obs_state)
        for (auto& row : clf) row.fill(1.0 / kNumQuantBins);
    for (auto& clf : p.obs_env)
        for (auto& row : clf) row.fill(1.0 / kNumQuantBins);
    p.init_state.fill(1.0 / kNumMotionStates);
    p.init_env.fill(1.0 / kNumEnvironments);
    p.init_speed.fill(1.0 / kNumSpeedBins);
    p.init_heading.fill(1.0 / kNumHeadingBins);
    return p;
}

namespace {

template <std::size_t N>
json row_to_json(const std::array<double, N>& row) {
    json a = json::array();
    for (double v : row) a.push_back(v);
    return a;
}

template <std::size_t N>
void row_from_json(const json& a, std::array<double, N>& row, const char* cpt) {
    if (!a.is_array() || a.size() != N) {
        std::ostringstream os;
        os << cpt << ": expected an array of " << N << " numbers";
        throw ParseError(os.str());
    }
    for (std::size_t i = 0; i < N; ++i) {
        if (!a[i].is_number()) {
            std::ostringstream os;
            os << cpt << ": entry " << i << " is not a number";
            throw ParseError(os.str());
        }
        row[i] = a[i].get<double>();
    }
}

template <class Table>
json table2_to_json(const Table& t) {
    json a = json::array();
    for (const auto& row : t) a.push_back(row_to_json(row));
    return a;
}

template <class Table>
void table2_from_json(const json& a, Table& t, const char* cpt) {
    if (!a.is_array() || a.size() != t.size()) {
        std::ostringstream os;
        os << cpt << ": wrong outer dimension";
        throw ParseError(os.str());
    }
    for (std::size_t i = 0; i < t.size(); ++i) row_from_json(a[i], t[i], cpt);
}

template <class Table>
json table3_to_json(const Table& t) {
    json a = json::array();
    for (const auto& mid : t) a.push_back(table2_to_json(mid));
    return a;
}

template <class Table>
void table3_from_json(const json& a, Table& t, const char* cpt) {
    if (!a.is_array() || a.size() != t.size()) {
        std::ostringstream os;
        os << cpt << ": wrong outer dimension";
        throw ParseError(os.str());
    }
    for (std::size_t i = 0; i < t.size(); ++i) table2_from_json(a[i], t[i], cpt);
}

}  // namespace

std::string serialize_params(const ModelParams& p) {
    json j;
    j["env_trans"] = table2_to_json(p.env_trans);
    j["state_trans"] = table3_to_json(p.state_trans);
    j["heading_trans"] = table2_to_json(p.heading_trans);
    j["speed_trans"] = table3_to_json(p.speed_trans);
    j["obs_state"] = table3_to_json(p.obs_state);
    j["obs_env"] = table3_to_json(p.obs_env);
    j["map_cpt"] = {{"inside_inside", p.map_cpt[0][0]},
                    {"inside_outside", p.map_cpt[0][1]},
                    {"outside_inside", p.map_cpt[1][0]},
                    {"outside_outside", p.map_cpt[1][1]}};
    j["gps_exponent"] = p.gps_exponent;
    j["init_state"] = row_to_json(p.init_state);
    j["init_env"] = row_to_json(p.init_env);
    j["init_speed"] = row_to_json(p.init_speed);
    j["init_heading"] = row_to_json(p.init_heading);
    return j.dump(2);
}

ModelParams parse_params(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("params: ") + e.what());
    }
    ModelParams p;
    try {
        table2_from_json(j.at("env_trans"), p.env_trans, "env_trans");
        table3_from_json(j.at("state_trans"), p.state_trans, "state_trans");
        table2_from_json(j.at("heading_trans"), p.heading_trans, "heading_trans");
        table3_from_json(j.at("speed_trans"), p.speed_trans, "speed_trans");
        table3_from_json(j.at("obs_state"), p.obs_state, "obs_state");
        table3_from_json(j.at("obs_env"), p.obs_env, "obs_env");
        const json& m = j.at("map_cpt");
        p.map_cpt[0][0] = m.at("inside_inside").get<double>();
        p.map_cpt[0][1] = m.at("inside_outside").get<double>();
        p.map_cpt[1][0] = m.at("outside_inside").get<double>();
        p.map_cpt[1][1] = m.at("outside_outside").get<double>();
        p.gps_exponent = j.at("gps_exponent").get<double>();
        row_from_json(j.at("init_state"), p.init_state, "init_state");
        row_from_json(j.at("init_env"), p.init_env, "init_env");
        row_from_json(j.at("init_speed"), p.init_speed, "init_speed");
        row_from_json(j.at("init_heading"), p.init_heading, "init_heading");
    } catch (const json::exception& e) {
        throw ParseError(std::string("params: ") + e.what());
    }
    validate_params(p, 1e-6);
    return p;
}

void save_params(const ModelParams& p, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot open for writing: " + path);
    out << serialize_params(p) << '\n';
}

ModelParams load_params(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open params file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_params(buf.str());
}

}  // namespace actloc
