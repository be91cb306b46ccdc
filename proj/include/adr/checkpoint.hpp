#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "adr/metrics.hpp"
#include "adr/model.hpp"
#include "adr/tensor.hpp"

namespace adr {

namespace detail {

/// CRC-64/XZ (ECMA-182 polynomial, reflected, init and xorout all-ones).
inline std::uint64_t crc64(const unsigned char* data, std::size_t len,
                           std::uint64_t crc = 0) {
    static const auto table = [] {
        std::array<std::uint64_t, 256> t{};
        for (std::uint64_t i = 0; i < 256; ++i) {
            std::uint64_t c = i;
            for (int k = 0; k < 8; ++k)
                c = (c & 1) ? (c >> 1) ^ 0xC96C5795D7870F42ULL : c >> 1;
            t[static_cast<std::size_t>(i)] = c;
        }
        return t;
    }();
    crc = ~crc;
    for (std::size_t i = 0; i < len; ++i)
        crc = table[(crc ^ data[i]) & 0xFF] ^ (crc >> 8);
    return ~crc;
}

inline void put_le64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void put_le32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline nlohmann::ordered_json model_spec_to_json(const ModelSpec& spec) {
    nlohmann::ordered_json j;
    j["kind"] = spec.kind == ModelKind::Mlp ? "mlp" : "small_conv";
    if (spec.kind == ModelKind::Mlp) j["mlp_widths"] = spec.mlp_widths;
    j["input_shape"] = {spec.in_c, spec.in_h, spec.in_w};
    j["num_classes"] = spec.num_classes;
    return j;
}

inline ModelSpec model_spec_from_json(const nlohmann::json& j) {
    const std::string kind = j.at("kind").get<std::string>();
    const auto in = j.at("input_shape");
    const std::int64_t c = in.at(0), h = in.at(1), w = in.at(2);
    if (kind == "mlp")
        return ModelSpec::mlp(j.at("mlp_widths").get<std::vector<std::int64_t>>(), c, h, w);
    if (kind == "small_conv")
        return ModelSpec::small_conv(c, h, w, j.at("num_classes").get<std::int64_t>());
    throw parse_error("unknown model kind '" + kind + "'");
}

} // namespace detail

/// Everything needed to resume a run exactly: student and EMA teacher
/// parameters, optimizer velocity, schedule position, the root RNG seed
/// (all substreams derive from it), and the metric history.
struct Checkpoint {
    std::int64_t format_version = 1;
    ModelSpec spec;
    ParamSet student;
    ParamSet teacher;
    std::vector<Tensor> velocity; // aligned with student.params; may be empty
    std::int64_t epoch = 0;       // completed epochs
    std::int64_t iteration = 0;   // completed optimizer steps
    std::uint64_t rng_seed = 0;
    double best_robust_acc = -1.0;
    std::int64_t best_epoch = -1;
    std::vector<MetricRow> history;
};

/// File layout: magic "ADRCKPT1", u32-LE manifest length, UTF-8 JSON
/// manifest, concatenated little-endian float64 blobs in manifest order,
/// trailing 8-byte CRC-64/XZ of everything before it.
inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
    nlohmann::ordered_json manifest;
    manifest["format_version"] = ck.format_version;
    manifest["model"] = detail::model_spec_to_json(ck.spec);
    nlohmann::ordered_json tensors = nlohmann::ordered_json::array();
    std::vector<const Tensor*> blobs;
    std::uint64_t offset = 0;
    auto add = [&](const std::string& name, const Tensor& t) {
        nlohmann::ordered_json e;
        e["name"] = name;
        e["shape"] = t.shape;
        e["offset"] = offset;
        tensors.push_back(e);
        blobs.push_back(&t);
        offset += static_cast<std::uint64_t>(t.data.size()) * 8;
    };
    for (const auto& p : ck.student.params) add("student." + p.name, p.value);
    for (const auto& p : ck.teacher.params) add("teacher." + p.name, p.value);
    for (std::size_t i = 0; i < ck.velocity.size(); ++i)
        add("opt.v." + ck.student.params[i].name, ck.velocity[i]);
    manifest["tensors"] = tensors;
    manifest["schedule"] = {{"epoch", ck.epoch}, {"iteration", ck.iteration}};
    manifest["epoch"] = ck.epoch;
    manifest["rng"] = {{"seed", ck.rng_seed}};
    manifest["best"] = {{"robust_acc", ck.best_robust_acc}, {"epoch", ck.best_epoch}};
    nlohmann::ordered_json hist = nlohmann::ordered_json::array();
    for (const auto& m : ck.history) hist.push_back(metric_row_to_json(m));
    manifest["metrics"] = hist;

    std::string body = "ADRCKPT1";
    const std::string mstr = manifest.dump();
    detail::put_le32(body, static_cast<std::uint32_t>(mstr.size()));
    body += mstr;
    for (const Tensor* t : blobs)
        for (double v : t->data) {
            std::uint64_t bits;
            std::memcpy(&bits, &v, 8);
            detail::put_le64(body, bits);
        }
    const std::uint64_t crc =
        detail::crc64(reinterpret_cast<const unsigned char*>(body.data()), body.size());
    detail::put_le64(body, crc);

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw checkpoint_error("cannot open checkpoint for writing: " + path);
    f.write(body.data(), static_cast<std::streamsize>(body.size()));
    if (!f) throw checkpoint_error("short write to checkpoint: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    if (!f) throw checkpoint_error("cannot open checkpoint: " + path);
    const std::int64_t len = static_cast<std::int64_t>(f.tellg());
    f.seekg(0);
    std::string body(static_cast<std::size_t>(len), '\0');
    if (!f.read(body.data(), len)) throw checkpoint_error("cannot read checkpoint: " + path);

    if (len < 8 + 4 + 8) throw checkpoint_truncated_error(path + ": file too short");
    if (body.compare(0, 8, "ADRCKPT1") != 0)
        throw checkpoint_magic_error(path + ": bad magic bytes");
    const auto* bytes = reinterpret_cast<const unsigned char*>(body.data());
    const std::uint64_t stored_crc = [&] {
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<std::uint64_t>(bytes[len - 8 + i]) << (8 * i);
        return v;
    }();
    if (detail::crc64(bytes, static_cast<std::size_t>(len - 8)) != stored_crc)
        throw checkpoint_checksum_error(path + ": CRC64 mismatch");

    std::uint32_t mlen = 0;
    for (int i = 0; i < 4; ++i) mlen |= static_cast<std::uint32_t>(bytes[8 + i]) << (8 * i);
    if (12 + static_cast<std::int64_t>(mlen) + 8 > len)
        throw checkpoint_truncated_error(path + ": manifest extends past end of file");
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(body.substr(12, mlen));
    } catch (const nlohmann::json::exception& e) {
        throw checkpoint_error(path + ": manifest parse failure: " + e.what());
    }

    Checkpoint ck;
    ck.format_version = manifest.at("format_version").get<std::int64_t>();
    if (ck.format_version != 1)
        throw checkpoint_version_error(path + ": unsupported format_version " +
                                       std::to_string(ck.format_version));
    ck.spec = detail::model_spec_from_json(manifest.at("model"));
    ck.epoch = manifest.at("epoch").get<std::int64_t>();
    ck.iteration = manifest.at("schedule").at("iteration").get<std::int64_t>();
    ck.rng_seed = manifest.at("rng").at("seed").get<std::uint64_t>();
    ck.best_robust_acc = manifest.at("best").at("robust_acc").get<double>();
    ck.best_epoch = manifest.at("best").at("epoch").get<std::int64_t>();
    for (const auto& m : manifest.at("metrics")) ck.history.push_back(metric_row_from_json(m));

    const std::int64_t blob_start = 12 + mlen;
    const std::int64_t blob_len = len - 8 - blob_start;
    auto read_tensor = [&](const nlohmann::json& entry) {
        const Shape shape = entry.at("shape").get<Shape>();
        const std::uint64_t off = entry.at("offset").get<std::uint64_t>();
        const std::int64_t count = numel(shape);
        if (static_cast<std::int64_t>(off) + count * 8 > blob_len)
            throw checkpoint_truncated_error(path + ": tensor '" +
                                             entry.at("name").get<std::string>() +
                                             "' extends past end of blob section");
        Tensor t = Tensor::zeros(shape);
        const unsigned char* p = bytes + blob_start + off;
        for (std::int64_t i = 0; i < count; ++i) {
            std::uint64_t bits = 0;
            for (int b = 0; b < 8; ++b)
                bits |= static_cast<std::uint64_t>(p[i * 8 + b]) << (8 * b);
            std::memcpy(&t.data[static_cast<std::size_t>(i)], &bits, 8);
        }
        return t;
    };
    for (const auto& entry : manifest.at("tensors")) {
        const std::string name = entry.at("name").get<std::string>();
        Tensor t = read_tensor(entry);
        if (name.rfind("student.", 0) == 0)
            ck.student.params.push_back({name.substr(8), std::move(t)});
        else if (name.rfind("teacher.", 0) == 0)
            ck.teacher.params.push_back({name.substr(8), std::move(t)});
        else if (name.rfind("opt.v.", 0) == 0)
            ck.velocity.push_back(std::move(t));
        else
            throw checkpoint_error(path + ": unknown tensor group for '" + name + "'");
    }
    return ck;
}

} // namespace adr
