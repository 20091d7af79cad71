#include "r2upp/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

namespace r2upp {

namespace {

constexpr char kMagic[7] = {'R', '2', 'U', 'P', 'P', '1', '\0'};

nlohmann::json arch_json(const ArchitectureConfig& c) {
    return {{"depth", c.depth},
            {"filters", c.filters},
            {"block_kind", c.block_kind == BlockKind::Rrcl ? "rrcl" : "plain"},
            {"t", c.t},
            {"num_classes", c.num_classes},
            {"deep_supervision", c.deep_supervision},
            {"skip_style", c.skip_style == SkipStyle::Dense ? "dense" : "simple"},
            {"in_channels", c.in_channels}};
}

ArchitectureConfig arch_parse(const nlohmann::json& j) {
    ArchitectureConfig c;
    c.depth = j.at("depth").get<int>();
    c.filters = j.at("filters").get<std::vector<int>>();
    const std::string kind = j.at("block_kind").get<std::string>();
    if (kind == "rrcl")
        c.block_kind = BlockKind::Rrcl;
    else if (kind == "plain")
        c.block_kind = BlockKind::Plain;
    else
        throw ConfigError("unknown block_kind: " + kind);
    c.t = j.at("t").get<int>();
    c.num_classes = j.at("num_classes").get<int>();
    c.deep_supervision = j.at("deep_supervision").get<bool>();
    const std::string style = j.at("skip_style").get<std::string>();
    if (style == "dense")
        c.skip_style = SkipStyle::Dense;
    else if (style == "simple")
        c.skip_style = SkipStyle::Simple;
    else
        throw ConfigError("unknown skip_style: " + style);
    c.in_channels = j.at("in_channels").get<int>();
    c.validate();
    return c;
}

}  // namespace

std::string arch_to_json(const ArchitectureConfig& config) { return arch_json(config).dump(); }

ArchitectureConfig arch_from_json(const std::string& json_text) {
    return arch_parse(nlohmann::json::parse(json_text));
}

void save_checkpoint(const Model& model, const std::string& path) {
    nlohmann::json header;
    header["config"] = arch_json(model.arch);
    nlohmann::json table = nlohmann::json::array();
    uint64_t offset = 0;
    for (const auto& p : model.store.all()) {
        table.push_back({{"name", p->name},
                         {"shape", p->value.shape},
                         {"offset", offset},
                         {"trainable", p->trainable}});
        offset += p->value.numel() * sizeof(float);
    }
    header["tensors"] = table;
    const std::string header_text = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw CheckpointError(path + ": cannot write");
    out.write(kMagic, sizeof(kMagic));
    const uint64_t header_len = header_text.size();
    out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
    out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
    for (const auto& p : model.store.all()) {
        std::vector<float> payload(p->value.data.size());
        for (size_t i = 0; i < payload.size(); ++i)
            payload[i] = static_cast<float>(p->value.data[i]);
        out.write(reinterpret_cast<const char*>(payload.data()),
                  static_cast<std::streamsize>(payload.size() * sizeof(float)));
    }
    if (!out) throw CheckpointError(path + ": write failed");
}

Model load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError(path + ": cannot open");
    char magic[sizeof(kMagic)];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw CheckpointError(path + ": bad magic bytes");
    uint64_t header_len = 0;
    in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
    std::string header_text(header_len, '\0');
    in.read(header_text.data(), static_cast<std::streamsize>(header_len));
    if (!in) throw CheckpointError(path + ": truncated header");

    nlohmann::json header = nlohmann::json::parse(header_text, nullptr, false);
    if (header.is_discarded()) throw CheckpointError(path + ": malformed header JSON");

    Model model = build_model(arch_parse(header.at("config")), /*seed=*/0);
    const auto& table = header.at("tensors");
    if (table.size() != model.store.all().size())
        throw CheckpointError(path + ": tensor table size does not match architecture");
    for (size_t i = 0; i < table.size(); ++i) {
        Parameter& p = *model.store.all()[i];
        if (table[i].at("name").get<std::string>() != p.name)
            throw CheckpointError(path + ": tensor " + std::to_string(i) + " name mismatch: " +
                                  table[i].at("name").get<std::string>() + " vs " + p.name);
        const auto shape = table[i].at("shape").get<std::array<int, 4>>();
        if (shape != p.value.shape)
            throw CheckpointError(path + ": tensor " + p.name + " shape mismatch");
        std::vector<float> payload(p.value.numel());
        in.read(reinterpret_cast<char*>(payload.data()),
                static_cast<std::streamsize>(payload.size() * sizeof(float)));
        if (!in) throw CheckpointError(path + ": truncated payload at " + p.name);
        for (size_t k = 0; k < payload.size(); ++k)
            p.value.data[k] = static_cast<double>(payload[k]);
    }
    return model;
}

}  // namespace r2upp
