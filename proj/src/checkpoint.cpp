#include "dujad/checkpoint.hpp"

#include <fstream>
#include <stdexcept>

namespace dujad {

const ModelEntry* Checkpoint::find(int P) const {
    for (const auto& m : models)
        if (m.P == P) return &m;
    return nullptr;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    nlohmann::json j;
    j["format"] = "dujad-checkpoint";
    j["version"] = 1;
    j["N"] = ckpt.N;
    j["M"] = ckpt.M;
    j["R_P"] = ckpt.R_P;
    j["R_D"] = ckpt.R_D;
    j["models"] = nlohmann::json::array();
    for (const auto& m : ckpt.models) {
        nlohmann::json e;
        e["P"] = m.P;
        e["network"] = to_json(m.network);
        e["aud"] = {{"omega_h", m.aud.omega_h}, {"omega_x", m.aud.omega_x}, {"T_th", m.aud.T_th},
                    {"L_bar", m.aud.L_bar}};
        e["thresholds"] = m.thresholds;
        e["validation"] = {{"fbs_initial", m.fbs_initial_val},
                           {"fbs_best", m.fbs_best_val},
                           {"aud_initial", m.aud_initial_val},
                           {"aud_best", m.aud_best_val}};
        j["models"].push_back(e);
    }
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write checkpoint '" + path + "'");
    // max_digits10 keeps every double exact through a save/load cycle.
    os << j.dump(2) << '\n';
    if (!os) throw std::runtime_error("failed writing checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open checkpoint '" + path + "'");
    Checkpoint c;
    try {
        const auto j = nlohmann::json::parse(is);
        if (j.value("format", "") != "dujad-checkpoint") throw std::runtime_error("not a checkpoint file");
        c.N = j.at("N").get<int>();
        c.M = j.at("M").get<int>();
        c.R_P = j.at("R_P").get<int>();
        c.R_D = j.at("R_D").get<int>();
        for (const auto& e : j.at("models")) {
            ModelEntry m;
            m.P = e.at("P").get<int>();
            m.network = unfolded_params_from_json(e.at("network"));
            const auto& a = e.at("aud");
            m.aud.omega_h = a.at("omega_h").get<double>();
            m.aud.omega_x = a.at("omega_x").get<double>();
            m.aud.T_th = a.at("T_th").get<double>();
            m.aud.L_bar = a.at("L_bar").get<double>();
            m.thresholds = e.at("thresholds").get<std::map<std::string, double>>();
            const auto& v = e.at("validation");
            m.fbs_initial_val = v.at("fbs_initial").get<double>();
            m.fbs_best_val = v.at("fbs_best").get<double>();
            m.aud_initial_val = v.at("aud_initial").get<double>();
            m.aud_best_val = v.at("aud_best").get<double>();
            c.models.push_back(std::move(m));
        }
    } catch (const std::exception& e) {
        throw std::runtime_error("checkpoint '" + path + "': " + e.what());
    }
    return c;
}

}  // namespace dujad
