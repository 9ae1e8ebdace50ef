#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "segparse/baselines.hpp"
#include "segparse/error.hpp"
#include "segparse/trainer.hpp"

namespace segparse {

// Plain-text key = value configuration. '#' starts a comment; blank lines
// are ignored.
inline std::map<std::string, std::string> parse_config_text(std::istream& in) {
    std::map<std::string, std::string> out;
    std::string line;
    int lineno = 0;
    const auto trim = [](std::string s) {
        const auto a = s.find_first_not_of(" \t\r");
        if (a == std::string::npos) return std::string{};
        const auto b = s.find_last_not_of(" \t\r");
        return s.substr(a, b - a + 1);
    };
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(lineno) + " is not key = value");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + " has an empty key");
        out[key] = value;
    }
    return out;
}

inline std::map<std::string, std::string> parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file " + path);
    return parse_config_text(in);
}

namespace detail {

inline int to_int(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const int x = std::stoi(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "' needs an integer, got '" + v + "'");
    }
}

inline double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "' needs a number, got '" + v + "'");
    }
}

inline bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError("key '" + key + "' needs a boolean, got '" + v + "'");
}

// Conv stack syntax: "8x3s2,16x3s2" = channels x kernel s stride per layer.
// "none" clears the stack.
inline std::vector<ConvSpec> to_conv(const std::string& key, const std::string& v) {
    std::vector<ConvSpec> out;
    if (v == "none") return out;
    std::stringstream ss(v);
    std::string part;
    while (std::getline(ss, part, ',')) {
        ConvSpec spec;
        if (std::sscanf(part.c_str(), "%dx%ds%d", &spec.out_channels, &spec.kernel,
                        &spec.stride) != 3) {
            throw ConfigError("key '" + key + "': bad conv layer '" + part + "'");
        }
        out.push_back(spec);
    }
    return out;
}

inline std::vector<int> to_int_list(const std::string& key, const std::string& v) {
    std::vector<int> out;
    if (v == "none") return out;
    std::stringstream ss(v);
    std::string part;
    while (std::getline(ss, part, ',')) out.push_back(to_int(key, part));
    return out;
}

}  // namespace detail

struct TrainSetup {
    TrainConfig train;
    BaselineConfig baseline;
};

// Builds the training setup from config-file keys. Unknown keys are
// rejected so typos fail fast.
inline TrainSetup make_train_setup(const std::map<std::string, std::string>& kv) {
    TrainSetup setup;
    for (const auto& [key, value] : kv) {
        if (key == "algorithm") {
            setup.baseline.algorithm = parse_algorithm(value);
        } else if (key == "epochs") {
            setup.train.epochs = detail::to_int(key, value);
        } else if (key == "batch_size") {
            setup.train.batch_size = detail::to_int(key, value);
        } else if (key == "learning_rate") {
            setup.train.actor_opt.learning_rate = detail::to_double(key, value);
            setup.train.critic_opt.learning_rate = setup.train.actor_opt.learning_rate;
        } else if (key == "critic_learning_rate") {
            setup.train.critic_opt.learning_rate = detail::to_double(key, value);
        } else if (key == "clip") {
            setup.train.actor_opt.clip = detail::to_double(key, value);
            setup.train.critic_opt.clip = setup.train.actor_opt.clip;
        } else if (key == "beta_start") {
            setup.train.beta.start = detail::to_double(key, value);
        } else if (key == "beta_end") {
            setup.train.beta.end = detail::to_double(key, value);
        } else if (key == "beta_anneal_epochs") {
            setup.train.beta.anneal_epochs = detail::to_int(key, value);
        } else if (key == "max_depth") {
            setup.train.max_depth = detail::to_int(key, value);
        } else if (key == "feature_side") {
            setup.train.feature_side = detail::to_int(key, value);
        } else if (key == "updates_per_epoch") {
            setup.train.updates_per_epoch = detail::to_int(key, value);
        } else if (key == "eval_every") {
            setup.train.eval_every = detail::to_int(key, value);
        } else if (key == "critic_first") {
            setup.train.critic_first = detail::to_bool(key, value);
        } else if (key == "mean_baseline") {
            setup.train.mean_baseline = detail::to_bool(key, value);
        } else if (key == "zero_init") {
            setup.train.zero_init = detail::to_bool(key, value);
        } else if (key == "memory_capacity") {
            setup.train.memory_capacity = static_cast<std::size_t>(detail::to_int(key, value));
        } else if (key == "conv") {
            setup.train.arch.conv = detail::to_conv(key, value);
        } else if (key == "dense") {
            setup.train.arch.dense = detail::to_int_list(key, value);
        } else if (key == "sigma_explore") {
            setup.baseline.sigma_explore = detail::to_double(key, value);
        } else if (key == "logitnormal_scale") {
            setup.baseline.logitnormal_scale = detail::to_double(key, value);
        } else if (key == "lambda_split") {
            setup.baseline.lambda_split = detail::to_double(key, value);
        } else if (key == "seed") {
            setup.train.seed = static_cast<std::uint64_t>(detail::to_int(key, value));
        } else {
            throw ConfigError("unknown config key '" + key + "'");
        }
    }
    if (setup.train.beta.start < setup.train.beta.end) {
        throw ConfigError("beta schedule must not increase (start >= end)");
    }
    if (setup.train.batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (setup.train.max_depth < 1) throw ConfigError("max_depth must be >= 1");
    return setup;
}

}  // namespace segparse
