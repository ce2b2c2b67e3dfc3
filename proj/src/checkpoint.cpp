// Copyright (c) 2026 vsslab contributors
// SPDX-License-Identifier: Apache-2.0

#include <cstring>
#include <fstream>
#include <vector>

#include <json.hpp>

#include "vsslab/train.hpp"

namespace vsslab::training {

namespace {

constexpr char kMagic[8] = {'V', 'S', 'S', 'L', 'A', 'B', 'C', '1'};

nlohmann::json model_config_to_json(const models::ModelConfig& c) {
    return {
        {"family", models::family_name(c.family)},
        {"depth", c.depth},
        {"dim", c.dim},
        {"expand", c.expand},
        {"state_dim", c.state_dim},
        {"patch", c.patch},
        {"classes", c.classes},
        {"image_h", c.image_h},
        {"image_w", c.image_w},
        {"image_c", c.image_c},
        {"conv_width", c.conv_width},
        {"seed", c.seed},
    };
}

models::ModelConfig model_config_from_json(const nlohmann::json& j) {
    models::ModelConfig c;
    c.family = models::family_from_name(j.at("family").get<std::string>());
    c.depth = j.at("depth").get<int>();
    c.dim = j.at("dim").get<int>();
    c.expand = j.at("expand").get<int>();
    c.state_dim = j.at("state_dim").get<int>();
    c.patch = j.at("patch").get<int>();
    c.classes = j.at("classes").get<int>();
    c.image_h = j.at("image_h").get<int>();
    c.image_w = j.at("image_w").get<int>();
    c.image_c = j.at("image_c").get<int>();
    c.conv_width = j.at("conv_width").get<int>();
    c.seed = j.at("seed").get<uint64_t>();
    return c;
}

template <typename T>
void write_pod(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void read_pod(std::istream& is, T& v) {
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw data_format_error("checkpoint: truncated file");
}

} // namespace

void checkpoint_save(const models::ModelState<float>& m, const std::string& path,
                     const CheckpointMeta& meta) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw data_format_error("cannot open checkpoint for writing: " + path);
    f.write(kMagic, sizeof(kMagic));

    nlohmann::json hdr = {
        {"version", 1},
        {"model", model_config_to_json(m.cfg())},
        {"seed", meta.seed},
        {"step", meta.step},
    };
    const std::string hs = hdr.dump();
    write_pod(f, static_cast<uint32_t>(hs.size()));
    f.write(hs.data(), static_cast<std::streamsize>(hs.size()));

    write_pod(f, static_cast<uint64_t>(m.layout.entries.size()));
    for (const auto& ent : m.layout.entries) {
        write_pod(f, static_cast<uint32_t>(ent.name.size()));
        f.write(ent.name.data(), static_cast<std::streamsize>(ent.name.size()));
        write_pod(f, static_cast<uint64_t>(ent.ref.rows));
        write_pod(f, static_cast<uint64_t>(ent.ref.cols));
        f.write(reinterpret_cast<const char*>(m.theta.data() + ent.ref.off),
                static_cast<std::streamsize>(ent.ref.count() * sizeof(float)));
    }
    if (!f) throw data_format_error("checkpoint: write failed: " + path);
}

models::ModelState<float> checkpoint_load(const std::string& path, CheckpointMeta* meta) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw data_format_error("cannot open checkpoint: " + path);

    char magic[8];
    f.read(magic, sizeof(magic));
    if (!f || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw data_format_error("checkpoint: bad magic");

    uint32_t hlen = 0;
    read_pod(f, hlen);
    std::string hs(hlen, '\0');
    f.read(hs.data(), hlen);
    if (!f) throw data_format_error("checkpoint: truncated header");

    nlohmann::json hdr;
    models::ModelConfig cfg;
    CheckpointMeta local{};
    try {
        hdr = nlohmann::json::parse(hs);
        if (hdr.at("version").get<int>() != 1)
            throw data_format_error("checkpoint: unsupported version");
        cfg = model_config_from_json(hdr.at("model"));
        local.seed = hdr.at("seed").get<uint64_t>();
        local.step = hdr.at("step").get<int64_t>();
    } catch (const nlohmann::json::exception& ex) {
        throw data_format_error(std::string("checkpoint: malformed header: ") + ex.what());
    }

    models::ModelState<float> m;
    m.layout = models::build_layout(cfg);
    m.theta.assign(static_cast<size_t>(m.layout.total), 0.0f);

    uint64_t n_entries = 0;
    read_pod(f, n_entries);
    if (n_entries != m.layout.entries.size())
        throw data_format_error("checkpoint: tensor count mismatch");
    for (const auto& ent : m.layout.entries) {
        uint32_t nlen = 0;
        read_pod(f, nlen);
        std::string name(nlen, '\0');
        f.read(name.data(), nlen);
        uint64_t rows = 0, cols = 0;
        read_pod(f, rows);
        read_pod(f, cols);
        if (!f || name != ent.name || rows != static_cast<uint64_t>(ent.ref.rows) ||
            cols != static_cast<uint64_t>(ent.ref.cols))
            throw data_format_error("checkpoint: tensor record mismatch at " + ent.name);
        f.read(reinterpret_cast<char*>(m.theta.data() + ent.ref.off),
               static_cast<std::streamsize>(ent.ref.count() * sizeof(float)));
        if (!f) throw data_format_error("checkpoint: truncated tensor data at " + ent.name);
    }
    if (meta) *meta = local;
    return m;
}

} // namespace vsslab::training
