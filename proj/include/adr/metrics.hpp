#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "adr/error.hpp"

namespace adr {

/// One training-epoch record; tau/lambda are absent for non-ADR runs.
struct MetricRow {
    std::int64_t epoch = 0;
    double lr = 0.0;
    std::optional<double> tau;
    std::optional<double> lambda;
    double train_loss = 0.0;
    double val_std_acc = 0.0;
    double val_rob_acc = 0.0;
    double val_rob_acc_ema = 0.0;
    double wall_s = 0.0;
};

inline nlohmann::ordered_json metric_row_to_json(const MetricRow& m) {
    nlohmann::ordered_json j;
    j["epoch"] = m.epoch;
    j["lr"] = m.lr;
    if (m.tau)
        j["tau"] = *m.tau;
    else
        j["tau"] = nullptr;
    if (m.lambda)
        j["lambda"] = *m.lambda;
    else
        j["lambda"] = nullptr;
    j["train_loss"] = m.train_loss;
    j["val_std_acc"] = m.val_std_acc;
    j["val_rob_acc"] = m.val_rob_acc;
    j["val_rob_acc_ema"] = m.val_rob_acc_ema;
    j["wall_s"] = m.wall_s;
    return j;
}

inline MetricRow metric_row_from_json(const nlohmann::json& j) {
    MetricRow m;
    m.epoch = j.at("epoch").get<std::int64_t>();
    m.lr = j.at("lr").get<double>();
    if (!j.at("tau").is_null()) m.tau = j.at("tau").get<double>();
    if (!j.at("lambda").is_null()) m.lambda = j.at("lambda").get<double>();
    m.train_loss = j.at("train_loss").get<double>();
    m.val_std_acc = j.at("val_std_acc").get<double>();
    m.val_rob_acc = j.at("val_rob_acc").get<double>();
    m.val_rob_acc_ema = j.at("val_rob_acc_ema").get<double>();
    m.wall_s = j.at("wall_s").get<double>();
    return m;
}

/// Append one JSON object per line.
inline void append_metrics_jsonl(const std::string& path, const MetricRow& m) {
    std::ofstream f(path, std::ios::app);
    if (!f) throw config_error("cannot open metrics file " + path);
    f << metric_row_to_json(m).dump() << "\n";
}

} // namespace adr
