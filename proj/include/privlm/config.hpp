#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "privlm/detector.hpp"
#include "privlm/model.hpp"
#include "privlm/train.hpp"

namespace privlm {

/// Flat TOML subset: [section] headers, key = value pairs, # comments.
/// Values: quoted strings, integers, floats, booleans.
class TomlFile {
public:
    static TomlFile parse_file(const std::string& path);
    static TomlFile parse_string(const std::string& text);

    bool has(const std::string& dotted_key) const;
    std::string get_string(const std::string& key, const std::string& fallback) const;
    int64_t get_int(const std::string& key, int64_t fallback) const;
    double get_double(const std::string& key, double fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;

    const std::map<std::string, std::string>& raw() const { return values_; }

private:
    std::map<std::string, std::string> values_;  // "section.key" -> raw literal
};

/// Everything one experiment run needs; serialized into the run manifest.
struct RunConfig {
    // [run]
    uint64_t seed = 7;
    std::string out_dir = "runs/default";
    std::string corpus = "synthetic";  // "synthetic" or a JSONL path
    std::size_t size = 384;
    double pii_density = 0.08;
    double train_fraction = 0.85;
    std::string data_dir;

    // [model]
    ModelConfig model;

    // [train] desk-scale profile; the TrainConfig type defaults stay at the
    // reference hyperparameters (5 epochs, batch 64, lr 1e-4, gamma 0.85)
    TrainConfig train;
    int dpo_epochs = 4;
    double dpo_lr = 5e-5;
    double dpo_beta = 0.1;

    // [detector]
    DetectorConfig detector;

    // [eval]
    int max_new = 48;
    int eval_every = 0;
    std::size_t probe = 16;
    bool use_curated_refs = false;
    double threshold = 0.5;  // classifier tau

    static RunConfig defaults();
    static RunConfig from_toml(const TomlFile& toml);
    std::string to_toml() const;
};

}  // namespace privlm
