#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "adr/checkpoint.hpp"
#include "adr/data.hpp"
#include "adr/train.hpp"

namespace adr {

struct DatasetConfig {
    std::string kind; // "mnist" | "cifar10" | "blobs"
    std::string images, labels;      // mnist
    std::vector<std::string> files;  // cifar10
    std::uint64_t seed = 0;          // blobs
    std::int64_t num_classes = 10;
    std::int64_t n_per_class = 50;
    std::int64_t c = 1, h = 8, w = 8;
    double sigma = 0.1;
};

/// Full run description as loaded from a JSON config file.
struct RunConfig {
    std::int64_t config_version = 1;
    TrainConfig train;
    ModelSpec model;
    DatasetConfig dataset;
    std::string output_dir;
    int threads = 1;
};

namespace detail {

inline void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                       const std::string& context) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : allowed)
            if (it.key() == k) {
                ok = true;
                break;
            }
        if (!ok)
            throw config_error("unknown key '" + it.key() + "' in " + context);
    }
}

/// Accepts plain numbers and exact rational strings like "8/255".
inline double parse_number(const nlohmann::json& v, const std::string& field) {
    if (v.is_number()) return v.get<double>();
    if (v.is_string()) {
        const std::string s = v.get<std::string>();
        const auto slash = s.find('/');
        try {
            if (slash == std::string::npos) return std::stod(s);
            const double num = std::stod(s.substr(0, slash));
            const double den = std::stod(s.substr(slash + 1));
            if (den == 0.0) throw config_error(field + ": zero denominator in '" + s + "'");
            return num / den;
        } catch (const std::invalid_argument&) {
            throw config_error(field + ": cannot parse number '" + s + "'");
        }
    }
    throw config_error(field + ": expected a number or rational string");
}

inline AnnealSpec anneal_from_json(const nlohmann::json& j, const std::string& context) {
    check_keys(j, {"start", "end", "horizon", "unit"}, context);
    AnnealSpec s;
    s.start = parse_number(j.at("start"), context + ".start");
    s.end = parse_number(j.at("end"), context + ".end");
    s.horizon = j.value("horizon", static_cast<std::int64_t>(0));
    const std::string unit = j.value("unit", std::string("per_epoch"));
    if (unit == "per_epoch")
        s.unit = ScheduleUnit::PerEpoch;
    else if (unit == "per_iteration")
        s.unit = ScheduleUnit::PerIteration;
    else
        throw config_error(context + ".unit: expected per_epoch or per_iteration");
    return s;
}

inline AttackConfig attack_from_json(const nlohmann::json& j, const std::string& context) {
    check_keys(j, {"epsilon", "alpha", "steps", "random_init", "clamp_lo", "clamp_hi"}, context);
    AttackConfig a;
    if (j.contains("epsilon")) a.epsilon = parse_number(j.at("epsilon"), context + ".epsilon");
    if (j.contains("alpha")) a.alpha = parse_number(j.at("alpha"), context + ".alpha");
    if (j.contains("steps")) a.steps = j.at("steps").get<std::int64_t>();
    if (j.contains("random_init")) a.random_init = j.at("random_init").get<bool>();
    if (j.contains("clamp_lo")) a.clamp_lo = parse_number(j.at("clamp_lo"), context + ".clamp_lo");
    if (j.contains("clamp_hi")) a.clamp_hi = parse_number(j.at("clamp_hi"), context + ".clamp_hi");
    return a;
}

inline nlohmann::ordered_json attack_to_json(const AttackConfig& a) {
    nlohmann::ordered_json j;
    j["epsilon"] = a.epsilon;
    j["alpha"] = a.alpha;
    j["steps"] = a.steps;
    j["random_init"] = a.random_init;
    j["clamp_lo"] = a.clamp_lo;
    j["clamp_hi"] = a.clamp_hi;
    return j;
}

inline nlohmann::ordered_json anneal_to_json(const AnnealSpec& s) {
    nlohmann::ordered_json j;
    j["start"] = s.start;
    j["end"] = s.end;
    j["horizon"] = s.horizon;
    j["unit"] = s.unit == ScheduleUnit::PerEpoch ? "per_epoch" : "per_iteration";
    return j;
}

} // namespace detail

inline RunConfig run_config_from_json(const nlohmann::json& j) {
    detail::check_keys(j,
                       {"config_version", "method", "use_adr", "adr", "attack", "eval_attack",
                        "sgd", "gamma", "epochs", "batch_size", "beta", "val_fraction", "augment",
                        "model", "dataset", "seed", "deterministic", "threads", "output_dir"},
                       "config");
    RunConfig rc;
    rc.config_version = j.at("config_version").get<std::int64_t>();
    if (rc.config_version != 1)
        throw config_error("unsupported config_version " + std::to_string(rc.config_version));

    TrainConfig& t = rc.train;
    const std::string method = j.value("method", std::string("at"));
    if (method == "at")
        t.method = TrainMethod::At;
    else if (method == "trades")
        t.method = TrainMethod::Trades;
    else
        throw config_error("method: expected 'at' or 'trades', got '" + method + "'");
    t.use_adr = j.value("use_adr", false);
    if (j.contains("adr")) {
        detail::check_keys(j.at("adr"), {"tau", "lambda"}, "adr");
        if (j.at("adr").contains("tau"))
            t.adr.tau_spec = detail::anneal_from_json(j.at("adr").at("tau"), "adr.tau");
        if (j.at("adr").contains("lambda"))
            t.adr.lambda_spec = detail::anneal_from_json(j.at("adr").at("lambda"), "adr.lambda");
    } else {
        t.adr.tau_spec.horizon = 0;
        t.adr.lambda_spec.horizon = 0;
    }
    if (j.contains("attack")) t.attack = detail::attack_from_json(j.at("attack"), "attack");
    t.eval_attack = j.contains("eval_attack")
                        ? detail::attack_from_json(j.at("eval_attack"), "eval_attack")
                        : t.attack;
    if (j.contains("sgd")) {
        const auto& s = j.at("sgd");
        detail::check_keys(s, {"lr", "momentum", "nesterov", "weight_decay"}, "sgd");
        if (s.contains("lr")) t.sgd.lr = detail::parse_number(s.at("lr"), "sgd.lr");
        if (s.contains("momentum"))
            t.sgd.momentum = detail::parse_number(s.at("momentum"), "sgd.momentum");
        if (s.contains("nesterov")) t.sgd.nesterov = s.at("nesterov").get<bool>();
        if (s.contains("weight_decay"))
            t.sgd.weight_decay = detail::parse_number(s.at("weight_decay"), "sgd.weight_decay");
    }
    if (j.contains("gamma")) t.gamma = detail::parse_number(j.at("gamma"), "gamma");
    if (j.contains("epochs")) t.epochs = j.at("epochs").get<std::int64_t>();
    if (j.contains("batch_size")) t.batch_size = j.at("batch_size").get<std::int64_t>();
    if (j.contains("beta")) t.beta = detail::parse_number(j.at("beta"), "beta");
    if (j.contains("val_fraction"))
        t.val_fraction = detail::parse_number(j.at("val_fraction"), "val_fraction");
    if (j.contains("augment")) {
        const auto& a = j.at("augment");
        detail::check_keys(a, {"pad", "flip_prob"}, "augment");
        if (a.contains("pad")) t.aug_pad = a.at("pad").get<std::int64_t>();
        if (a.contains("flip_prob"))
            t.aug_flip_prob = detail::parse_number(a.at("flip_prob"), "augment.flip_prob");
    }
    if (j.contains("seed")) t.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("deterministic")) t.deterministic = j.at("deterministic").get<bool>();
    if (j.contains("threads")) rc.threads = j.at("threads").get<int>();

    {
        const auto& m = j.at("model");
        detail::check_keys(m, {"kind", "mlp_widths", "input_shape", "num_classes"}, "model");
        rc.model = detail::model_spec_from_json(m);
    }
    {
        const auto& d = j.at("dataset");
        detail::check_keys(d,
                           {"kind", "images", "labels", "files", "seed", "num_classes",
                            "n_per_class", "shape", "sigma"},
                           "dataset");
        rc.dataset.kind = d.at("kind").get<std::string>();
        if (rc.dataset.kind == "mnist") {
            rc.dataset.images = d.at("images").get<std::string>();
            rc.dataset.labels = d.at("labels").get<std::string>();
        } else if (rc.dataset.kind == "cifar10") {
            rc.dataset.files = d.at("files").get<std::vector<std::string>>();
        } else if (rc.dataset.kind == "blobs") {
            rc.dataset.seed = d.value("seed", static_cast<std::uint64_t>(0));
            rc.dataset.num_classes = d.value("num_classes", static_cast<std::int64_t>(10));
            rc.dataset.n_per_class = d.value("n_per_class", static_cast<std::int64_t>(50));
            if (d.contains("shape")) {
                const auto sh = d.at("shape").get<std::vector<std::int64_t>>();
                if (sh.size() != 3) throw config_error("dataset.shape: expected [C, H, W]");
                rc.dataset.c = sh[0];
                rc.dataset.h = sh[1];
                rc.dataset.w = sh[2];
            }
            if (d.contains("sigma"))
                rc.dataset.sigma = detail::parse_number(d.at("sigma"), "dataset.sigma");
        } else {
            throw config_error("dataset.kind: expected mnist, cifar10 or blobs, got '" +
                               rc.dataset.kind + "'");
        }
    }
    if (j.contains("output_dir")) rc.output_dir = j.at("output_dir").get<std::string>();
    return rc;
}

inline RunConfig parse_run_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw config_error("cannot open config file " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(f);
    } catch (const nlohmann::json::exception& e) {
        throw parse_error(path + ": " + e.what());
    }
    try {
        return run_config_from_json(j);
    } catch (const nlohmann::json::exception& e) {
        throw config_error(path + ": " + e.what());
    }
}

inline Dataset load_dataset(const DatasetConfig& d) {
    if (d.kind == "mnist") return load_mnist_idx(d.images, d.labels);
    if (d.kind == "cifar10") return load_cifar10_bin(d.files);
    if (d.kind == "blobs")
        return synth_blobs(d.seed, d.num_classes, d.n_per_class, d.c, d.h, d.w, d.sigma);
    throw config_error("unknown dataset kind '" + d.kind + "'");
}

/// Resolved-config JSON for embedding into run artifacts.
inline nlohmann::ordered_json run_config_to_json(const RunConfig& rc) {
    nlohmann::ordered_json j;
    j["config_version"] = rc.config_version;
    j["method"] = rc.train.method == TrainMethod::At ? "at" : "trades";
    j["use_adr"] = rc.train.use_adr;
    j["adr"] = {{"tau", detail::anneal_to_json(rc.train.adr.tau_spec)},
                {"lambda", detail::anneal_to_json(rc.train.adr.lambda_spec)}};
    j["attack"] = detail::attack_to_json(rc.train.attack);
    j["eval_attack"] = detail::attack_to_json(rc.train.eval_attack);
    j["sgd"] = {{"lr", rc.train.sgd.lr},
                {"momentum", rc.train.sgd.momentum},
                {"nesterov", rc.train.sgd.nesterov},
                {"weight_decay", rc.train.sgd.weight_decay}};
    j["gamma"] = rc.train.gamma;
    j["epochs"] = rc.train.epochs;
    j["batch_size"] = rc.train.batch_size;
    j["beta"] = rc.train.beta;
    j["val_fraction"] = rc.train.val_fraction;
    j["augment"] = {{"pad", rc.train.aug_pad}, {"flip_prob", rc.train.aug_flip_prob}};
    j["model"] = detail::model_spec_to_json(rc.model);
    nlohmann::ordered_json d;
    d["kind"] = rc.dataset.kind;
    if (rc.dataset.kind == "mnist") {
        d["images"] = rc.dataset.images;
        d["labels"] = rc.dataset.labels;
    } else if (rc.dataset.kind == "cifar10") {
        d["files"] = rc.dataset.files;
    } else {
        d["seed"] = rc.dataset.seed;
        d["num_classes"] = rc.dataset.num_classes;
        d["n_per_class"] = rc.dataset.n_per_class;
        d["shape"] = {rc.dataset.c, rc.dataset.h, rc.dataset.w};
        d["sigma"] = rc.dataset.sigma;
    }
    j["dataset"] = d;
    j["seed"] = rc.train.seed;
    j["deterministic"] = rc.train.deterministic;
    j["threads"] = rc.threads;
    j["output_dir"] = rc.output_dir;
    return j;
}

} // namespace adr
