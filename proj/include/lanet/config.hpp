#pragma once

#include <fstream>
#include <map>
#include <sstream>

#include "lanet/network.hpp"

namespace lanet {

/// Plain-text key = value run configuration. Unknown keys are rejected; the
/// fully-resolved form (defaults + file + flag overrides) is what gets logged
/// and embedded in checkpoints.
struct RunConfig {
    std::map<std::string, std::string> values;

    RunConfig() {
        values = {
            {"variant", "lanet"},
            {"in_channels", "4"},
            {"num_classes", "6"},
            {"widths", "32,64,96,128"},
            {"head_width", "64"},
            {"pam_high_patch", "4"},
            {"pam_low_patch", "8"},
            {"aem_patch", "2"},
            {"reduction", "16"},
            {"lambda", "0.4"},
            {"lr", "0.02"},
            {"momentum", "0.9"},
            {"weight_decay", "0.0001"},
            {"steps", "500"},
            {"batch", "2"},
            {"crop", "64"},
            {"seed", "0"},
            {"tile", "512"},
            {"overlap", "64"},
        };
    }

    void set(const std::string& key, const std::string& value) {
        if (!values.count(key)) throw std::invalid_argument("unknown config key '" + key + "'");
        values[key] = value;
    }

    void load_text(const std::string& text, const std::string& origin = "<config>") {
        std::istringstream in(text);
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line = line.substr(0, hash);
            auto trim = [](std::string s) {
                const auto b = s.find_first_not_of(" \t");
                const auto e = s.find_last_not_of(" \t\r");
                return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
            };
            if (trim(line).empty()) continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw std::runtime_error(origin + ":" + std::to_string(lineno) +
                                         ": expected key = value");
            set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        }
    }

    void load_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot read config file: " + path);
        std::ostringstream text;
        text << in.rdbuf();
        load_text(text.str(), path);
    }

    int get_int(const std::string& key) const { return std::stoi(values.at(key)); }
    double get_double(const std::string& key) const { return std::stod(values.at(key)); }
    std::uint64_t get_u64(const std::string& key) const { return std::stoull(values.at(key)); }
    const std::string& get(const std::string& key) const { return values.at(key); }

    std::string resolved_text() const {
        std::ostringstream os;
        for (const auto& [k, v] : values) os << k << " = " << v << "\n";
        return os.str();
    }

    ArchConfig arch() const {
        ArchConfig a;
        a.in_channels = get_int("in_channels");
        a.num_classes = get_int("num_classes");
        std::istringstream ws(get("widths"));
        std::string item;
        int i = 0;
        while (std::getline(ws, item, ',')) {
            if (i >= 4) throw std::invalid_argument("widths must list exactly 4 values");
            a.widths[i++] = std::stoi(item);
        }
        if (i != 4) throw std::invalid_argument("widths must list exactly 4 values");
        a.head_width = get_int("head_width");
        a.pam_high_patch = get_int("pam_high_patch");
        a.pam_low_patch = get_int("pam_low_patch");
        a.aem_patch = get_int("aem_patch");
        a.reduction = get_int("reduction");
        a.aux_loss_weight = get_double("lambda");
        return a;
    }

    TrainConfig train() const {
        TrainConfig t;
        t.lr = get_double("lr");
        t.momentum = get_double("momentum");
        t.weight_decay = get_double("weight_decay");
        t.steps = get_int("steps");
        t.batch = get_int("batch");
        t.crop = get_int("crop");
        t.seed = get_u64("seed");
        t.lambda = get_double("lambda");
        return t;
    }
};

}  // namespace lanet
