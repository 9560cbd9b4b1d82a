#include "gradreg/config_io.h"

#include <fstream>
#include <set>

#include "gradreg/errors.h"

namespace gradreg {

namespace {

using nlohmann::json;

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object())
        throw std::invalid_argument("config: " + where + " must be an object");
    for (const auto& item : j.items()) {
        if (!allowed.count(item.key()))
            throw std::invalid_argument("unknown config key '" + where + item.key() + "'");
    }
}

template <typename T>
void fetch(const json& j, const char* key, T& out) {
    if (j.contains(key))
        out = j.at(key).get<T>();
}

}  // namespace

RegistrationConfig parse_config(const json& j) {
    RegistrationConfig cfg;
    check_keys(j, {"levels", "iters_per_level", "converge_tol", "patience", "seed", "loss", "optim"},
               "");

    fetch(j, "levels", cfg.levels);
    fetch(j, "iters_per_level", cfg.iters_per_level);
    fetch(j, "converge_tol", cfg.converge_tol);
    fetch(j, "patience", cfg.patience);
    fetch(j, "seed", cfg.seed);

    if (j.contains("loss")) {
        const json& l = j.at("loss");
        check_keys(l, {"gamma", "lambda", "lncc_window", "eps", "use_ic", "use_gc"}, "loss.");
        fetch(l, "gamma", cfg.loss.gamma);
        fetch(l, "lambda", cfg.loss.lambda);
        fetch(l, "lncc_window", cfg.loss.lncc_window);
        fetch(l, "eps", cfg.loss.eps);
        fetch(l, "use_ic", cfg.loss.use_ic);
        fetch(l, "use_gc", cfg.loss.use_gc);
    }
    if (j.contains("optim")) {
        const json& o = j.at("optim");
        check_keys(o, {"lr", "beta1", "beta2", "eps", "rho", "clip", "weight_decay"}, "optim.");
        fetch(o, "lr", cfg.optim.lr);
        fetch(o, "beta1", cfg.optim.beta1);
        fetch(o, "beta2", cfg.optim.beta2);
        fetch(o, "eps", cfg.optim.eps);
        fetch(o, "rho", cfg.optim.rho);
        fetch(o, "clip", cfg.optim.clip);
        fetch(o, "weight_decay", cfg.optim.weight_decay);
    }
    cfg.validate();
    return cfg;
}

RegistrationConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw io_error("cannot open config file '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw std::invalid_argument("config file '" + path + "': " + e.what());
    }
    return parse_config(j);
}

json config_to_json(const RegistrationConfig& cfg) {
    return json{
        {"levels", cfg.levels},
        {"iters_per_level", cfg.iters_per_level},
        {"converge_tol", cfg.converge_tol},
        {"patience", cfg.patience},
        {"seed", cfg.seed},
        {"loss",
         {{"gamma", cfg.loss.gamma},
          {"lambda", cfg.loss.lambda},
          {"lncc_window", cfg.loss.lncc_window},
          {"eps", cfg.loss.eps},
          {"use_ic", cfg.loss.use_ic},
          {"use_gc", cfg.loss.use_gc}}},
        {"optim",
         {{"lr", cfg.optim.lr},
          {"beta1", cfg.optim.beta1},
          {"beta2", cfg.optim.beta2},
          {"eps", cfg.optim.eps},
          {"rho", cfg.optim.rho},
          {"clip", cfg.optim.clip},
          {"weight_decay", cfg.optim.weight_decay}}},
    };
}

json breakdown_to_json(const LossBreakdown& b) {
    return json{{"l_ic", b.l_ic}, {"l_gc", b.l_gc}, {"l_sim", b.l_sim}, {"l_reg", b.l_reg},
                {"total", b.total}};
}

}  // namespace gradreg
