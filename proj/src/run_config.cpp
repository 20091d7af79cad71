#include "r2upp/run_config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace r2upp {

namespace {

using nlohmann::json;

const char* const kKnownKeys[] = {
    "depth",        "filters",     "block_kind",     "t",
    "num_classes",  "deep_supervision", "skip_style", "in_channels",
    "learning_rate", "beta1",      "beta2",          "eps_adam",
    "batch_size",   "max_epochs",  "patience",       "seed",
    "train_dice_stop", "train_manifest", "val_manifest", "test_manifest",
    "patch_size",   "patch_stride", "threshold",     "out_dir"};

bool known_key(const std::string& k) {
    for (const char* known : kKnownKeys)
        if (k == known) return true;
    return false;
}

void apply_json(RunConfig& c, const json& j) {
    for (const auto& [key, value] : j.items())
        if (!known_key(key)) throw ConfigError("unknown config key: " + key);

    auto get = [&](const char* key, auto& field) {
        if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("depth", c.arch.depth);
    get("filters", c.arch.filters);
    if (j.contains("block_kind")) {
        const std::string v = j.at("block_kind").get<std::string>();
        if (v == "rrcl")
            c.arch.block_kind = BlockKind::Rrcl;
        else if (v == "plain")
            c.arch.block_kind = BlockKind::Plain;
        else
            throw ConfigError("block_kind must be 'plain' or 'rrcl', got '" + v + "'");
    }
    get("t", c.arch.t);
    get("num_classes", c.arch.num_classes);
    if (j.contains("deep_supervision")) {
        c.arch.deep_supervision = j.at("deep_supervision").get<bool>();
        c.trainer.deep_supervision = c.arch.deep_supervision;
    }
    if (j.contains("skip_style")) {
        const std::string v = j.at("skip_style").get<std::string>();
        if (v == "dense")
            c.arch.skip_style = SkipStyle::Dense;
        else if (v == "simple")
            c.arch.skip_style = SkipStyle::Simple;
        else
            throw ConfigError("skip_style must be 'dense' or 'simple', got '" + v + "'");
    }
    get("in_channels", c.arch.in_channels);
    get("learning_rate", c.trainer.learning_rate);
    get("beta1", c.trainer.beta1);
    get("beta2", c.trainer.beta2);
    get("eps_adam", c.trainer.eps_adam);
    get("batch_size", c.trainer.batch_size);
    get("max_epochs", c.trainer.max_epochs);
    get("patience", c.trainer.patience);
    get("seed", c.trainer.seed);
    get("train_dice_stop", c.trainer.train_dice_stop);
    get("train_manifest", c.train_manifest);
    get("val_manifest", c.val_manifest);
    get("test_manifest", c.test_manifest);
    get("patch_size", c.patch_size);
    get("patch_stride", c.patch_stride);
    get("threshold", c.threshold);
    get("out_dir", c.out_dir);
}

}  // namespace

std::string RunConfig::to_json() const {
    json j{{"depth", arch.depth},
           {"filters", arch.filters},
           {"block_kind", arch.block_kind == BlockKind::Rrcl ? "rrcl" : "plain"},
           {"t", arch.t},
           {"num_classes", arch.num_classes},
           {"deep_supervision", arch.deep_supervision},
           {"skip_style", arch.skip_style == SkipStyle::Dense ? "dense" : "simple"},
           {"in_channels", arch.in_channels},
           {"learning_rate", trainer.learning_rate},
           {"beta1", trainer.beta1},
           {"beta2", trainer.beta2},
           {"eps_adam", trainer.eps_adam},
           {"batch_size", trainer.batch_size},
           {"max_epochs", trainer.max_epochs},
           {"patience", trainer.patience},
           {"seed", trainer.seed},
           {"train_dice_stop", trainer.train_dice_stop},
           {"train_manifest", train_manifest},
           {"val_manifest", val_manifest},
           {"test_manifest", test_manifest},
           {"patch_size", patch_size},
           {"patch_stride", patch_stride},
           {"threshold", threshold},
           {"out_dir", out_dir}};
    return j.dump(2);
}

RunConfig parse_run_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        // report a line number for the failure position
        size_t line = 1;
        for (size_t i = 0; i < e.byte && i < json_text.size(); ++i)
            if (json_text[i] == '\n') ++line;
        throw ConfigError("config JSON parse error at line " + std::to_string(line) + ": " +
                          e.what());
    }
    RunConfig c;
    apply_json(c, j);
    return c;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_run_config(buf.str());
}

void apply_override(RunConfig& config, const std::string& assignment) {
    const size_t eq = assignment.find('=');
    if (eq == std::string::npos)
        throw ConfigError("--set expects key=value, got '" + assignment + "'");
    std::string key = assignment.substr(0, eq);
    const std::string value = assignment.substr(eq + 1);
    const size_t dot = key.rfind('.');
    if (dot != std::string::npos) key = key.substr(dot + 1);
    if (!known_key(key)) throw ConfigError("unknown config key: " + key);

    json j;
    if (key == "block_kind" || key == "skip_style" || key.ends_with("manifest") ||
        key == "out_dir") {
        j[key] = value;
    } else if (key == "deep_supervision") {
        if (value == "true" || value == "on" || value == "1")
            j[key] = true;
        else if (value == "false" || value == "off" || value == "0")
            j[key] = false;
        else
            throw ConfigError("boolean value expected for " + key + ", got '" + value + "'");
    } else if (key == "filters") {
        std::vector<int> filters;
        std::stringstream ss(value);
        std::string tok;
        while (std::getline(ss, tok, ',')) filters.push_back(std::stoi(tok));
        j[key] = filters;
    } else {
        try {
            if (value.find_first_of(".eE") != std::string::npos)
                j[key] = std::stod(value);
            else
                j[key] = std::stoll(value);
        } catch (const std::exception&) {
            throw ConfigError("numeric value expected for " + key + ", got '" + value + "'");
        }
    }
    apply_json(config, j);
}

}  // namespace r2upp
