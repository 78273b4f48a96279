#include "privlm/config.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

#include "privlm/common.hpp"

namespace privlm {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

}  // namespace

TomlFile TomlFile::parse_file(const std::string& path) {
    require(file_exists(path), ErrorKind::Config, "config file not found: " + path);
    return parse_string(read_text_file(path));
}

TomlFile TomlFile::parse_string(const std::string& text) {
    TomlFile toml;
    std::istringstream in(text);
    std::string line;
    std::string section;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        // strip comments outside quotes
        bool in_quote = false;
        for (std::size_t i = 0; i < line.size(); ++i) {
            if (line[i] == '"') in_quote = !in_quote;
            if (line[i] == '#' && !in_quote) {
                line = line.substr(0, i);
                break;
            }
        }
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            require(line.back() == ']', ErrorKind::Config,
                    "config line " + std::to_string(line_no) + ": unterminated section header");
            section = trim(line.substr(1, line.size() - 2));
            require(!section.empty(), ErrorKind::Config,
                    "config line " + std::to_string(line_no) + ": empty section name");
            continue;
        }
        std::size_t eq = line.find('=');
        require(eq != std::string::npos, ErrorKind::Config,
                "config line " + std::to_string(line_no) + ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        require(!key.empty() && !value.empty(), ErrorKind::Config,
                "config line " + std::to_string(line_no) + ": empty key or value");
        std::string full = section.empty() ? key : section + "." + key;
        toml.values_[full] = value;
    }
    return toml;
}

bool TomlFile::has(const std::string& key) const { return values_.count(key) != 0; }

std::string TomlFile::get_string(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::string v = it->second;
    if (v.size() >= 2 && v.front() == '"' && v.back() == '"') {
        return v.substr(1, v.size() - 2);
    }
    return v;
}

int64_t TomlFile::get_int(const std::string& key, int64_t fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        return std::stoll(it->second);
    } catch (const std::exception&) {
        fail(ErrorKind::Config, "config key " + key + ": expected an integer, got " + it->second);
    }
}

double TomlFile::get_double(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        return std::stod(it->second);
    } catch (const std::exception&) {
        fail(ErrorKind::Config, "config key " + key + ": expected a number, got " + it->second);
    }
}

bool TomlFile::get_bool(const std::string& key, bool fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    if (it->second == "true") return true;
    if (it->second == "false") return false;
    fail(ErrorKind::Config, "config key " + key + ": expected true/false, got " + it->second);
}

RunConfig RunConfig::defaults() {
    RunConfig cfg;
    cfg.data_dir = default_data_dir();
    cfg.detector = DetectorConfig::defaults(cfg.data_dir);
    // desk-scale training profile: a from-scratch model needs a higher
    // learning rate and more passes than the reference fine-tuning setup
    cfg.train.epochs = 16;
    cfg.train.batch_size = 32;
    cfg.train.lr = 1e-3;
    cfg.train.gamma = 0.93;
    cfg.train.seed = cfg.seed;
    cfg.train.threads = 2;
    cfg.model.seed = cfg.seed;
    return cfg;
}

RunConfig RunConfig::from_toml(const TomlFile& t) {
    RunConfig c = defaults();
    c.seed = static_cast<uint64_t>(t.get_int("run.seed", static_cast<int64_t>(c.seed)));
    c.out_dir = t.get_string("run.out", c.out_dir);
    c.corpus = t.get_string("run.corpus", c.corpus);
    c.size = static_cast<std::size_t>(t.get_int("run.size", static_cast<int64_t>(c.size)));
    c.pii_density = t.get_double("run.pii_density", c.pii_density);
    c.train_fraction = t.get_double("run.train_fraction", c.train_fraction);
    c.data_dir = t.get_string("run.data_dir", c.data_dir);

    c.model.layers = static_cast<int>(t.get_int("model.layers", c.model.layers));
    c.model.heads = static_cast<int>(t.get_int("model.heads", c.model.heads));
    c.model.width = static_cast<int>(t.get_int("model.width", c.model.width));
    c.model.context = static_cast<int>(t.get_int("model.context", c.model.context));
    c.model.seed = c.seed;

    c.train.epochs = static_cast<int>(t.get_int("train.epochs", c.train.epochs));
    c.train.batch_size = static_cast<int>(t.get_int("train.batch", c.train.batch_size));
    c.train.lr = t.get_double("train.lr", c.train.lr);
    c.train.gamma = t.get_double("train.gamma", c.train.gamma);
    c.train.weight_decay = t.get_double("train.weight_decay", c.train.weight_decay);
    c.train.loss_on_prompt = t.get_bool("train.loss_on_prompt", c.train.loss_on_prompt);
    c.train.penalty_on_prompt = t.get_bool("train.penalty_on_prompt", c.train.penalty_on_prompt);
    c.train.lambda_penalty = t.get_double("train.lambda_penalty", c.train.lambda_penalty);
    c.train.threads = static_cast<int>(t.get_int("train.threads", c.train.threads));
    c.train.seed = c.seed;
    c.dpo_epochs = static_cast<int>(t.get_int("train.dpo_epochs", c.dpo_epochs));
    c.dpo_lr = t.get_double("train.dpo_lr", c.dpo_lr);
    c.dpo_beta = t.get_double("train.beta", c.dpo_beta);

    c.detector.data_dir = c.data_dir;
    c.detector.name_lexicon = t.get_string("detector.name_lexicon", c.detector.name_lexicon);
    c.detector.org_lexicon = t.get_string("detector.org_lexicon", c.detector.org_lexicon);
    c.detector.url_pattern = t.get_string("detector.url_pattern", c.detector.url_pattern);
    c.detector.phone_pattern = t.get_string("detector.phone_pattern", c.detector.phone_pattern);
    c.detector.address_pattern =
        t.get_string("detector.address_pattern", c.detector.address_pattern);
    c.detector.holdout_fraction =
        t.get_double("detector.holdout_fraction", c.detector.holdout_fraction);
    if (t.has("detector.categories")) {
        c.detector.categories.clear();
        std::istringstream cats(t.get_string("detector.categories", ""));
        std::string cat;
        while (std::getline(cats, cat, ',')) {
            if (!cat.empty()) c.detector.categories.insert(pii_category_from_string(cat));
        }
    }

    c.max_new = static_cast<int>(t.get_int("eval.max_new", c.max_new));
    c.eval_every = static_cast<int>(t.get_int("eval.eval_every", c.eval_every));
    c.probe = static_cast<std::size_t>(t.get_int("eval.probe", static_cast<int64_t>(c.probe)));
    c.use_curated_refs = t.get_bool("eval.use_curated_refs", c.use_curated_refs);
    c.threshold = t.get_double("eval.threshold", c.threshold);
    return c;
}

std::string RunConfig::to_toml() const {
    std::ostringstream out;
    out << "[run]\n";
    out << "seed = " << seed << "\n";
    out << "out = \"" << out_dir << "\"\n";
    out << "corpus = \"" << corpus << "\"\n";
    out << "size = " << size << "\n";
    out << "pii_density = " << pii_density << "\n";
    out << "train_fraction = " << train_fraction << "\n";
    out << "data_dir = \"" << data_dir << "\"\n\n";
    out << "[model]\n";
    out << "layers = " << model.layers << "\n";
    out << "heads = " << model.heads << "\n";
    out << "width = " << model.width << "\n";
    out << "context = " << model.context << "\n\n";
    out << "[train]\n";
    out << "epochs = " << train.epochs << "\n";
    out << "batch = " << train.batch_size << "\n";
    out << "lr = " << train.lr << "\n";
    out << "gamma = " << train.gamma << "\n";
    out << "weight_decay = " << train.weight_decay << "\n";
    out << "loss_on_prompt = " << (train.loss_on_prompt ? "true" : "false") << "\n";
    out << "penalty_on_prompt = " << (train.penalty_on_prompt ? "true" : "false") << "\n";
    out << "lambda_penalty = " << train.lambda_penalty << "\n";
    out << "threads = " << train.threads << "\n";
    out << "dpo_epochs = " << dpo_epochs << "\n";
    out << "dpo_lr = " << dpo_lr << "\n";
    out << "beta = " << dpo_beta << "\n\n";
    out << "[detector]\n";
    out << "name_lexicon = \"" << detector.name_lexicon << "\"\n";
    out << "org_lexicon = \"" << detector.org_lexicon << "\"\n";
    out << "holdout_fraction = " << detector.holdout_fraction << "\n\n";
    out << "[eval]\n";
    out << "max_new = " << max_new << "\n";
    out << "eval_every = " << eval_every << "\n";
    out << "probe = " << probe << "\n";
    out << "use_curated_refs = " << (use_curated_refs ? "true" : "false") << "\n";
    out << "threshold = " << threshold << "\n";
    return out.str();
}

}  // namespace privlm
