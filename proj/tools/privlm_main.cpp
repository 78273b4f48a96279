// privlm: desk-scale lab for privacy-protecting fine-tuning experiments.
//
// Pipeline commands operate on a run directory (--out). Exit codes:
// 0 ok, 2 config error, 3 missing prerequisite, 4 training divergence.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "privlm/common.hpp"
#include "privlm/pipeline.hpp"

using namespace privlm;

namespace {

int exit_code_for(const Error& e) {
    switch (e.kind()) {
        case ErrorKind::Config:
        case ErrorKind::Parse:
        case ErrorKind::Schema:
            return 2;
        case ErrorKind::Prerequisite:
            return 3;
        case ErrorKind::Divergence:
            return 4;
        default:
            return 1;
    }
}

struct CommonFlags {
    std::string config_path;
    std::string out;
    std::string corpus;
    std::optional<uint64_t> seed;
    std::optional<int> eval_every;
    std::optional<double> beta;
    std::optional<double> lambda_penalty;
    std::optional<double> threshold;
    std::string data_dir;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("--config", flags.config_path, "Run config file (TOML)");
    cmd->add_option("--out", flags.out, "Run directory");
    cmd->add_option("--corpus", flags.corpus, "\"synthetic\" or a JSONL path");
    cmd->add_option("--seed", flags.seed, "Master seed");
    cmd->add_option("--eval-every", flags.eval_every, "Curve evaluation period (steps)");
    cmd->add_option("--beta", flags.beta, "DPO beta");
    cmd->add_option("--lambda-penalty", flags.lambda_penalty, "Penalty loss weight");
    cmd->add_option("--threshold", flags.threshold, "Classifier decision threshold");
    cmd->add_option("--data", flags.data_dir, "Data directory (lexicons, templates)");
}

RunConfig resolve_config(const CommonFlags& flags) {
    RunConfig cfg = flags.config_path.empty()
                        ? RunConfig::defaults()
                        : RunConfig::from_toml(TomlFile::parse_file(flags.config_path));
    if (!flags.out.empty()) cfg.out_dir = flags.out;
    if (!flags.corpus.empty()) cfg.corpus = flags.corpus;
    if (flags.seed) {
        cfg.seed = *flags.seed;
        cfg.train.seed = *flags.seed;
        cfg.model.seed = *flags.seed;
    }
    if (flags.eval_every) cfg.eval_every = *flags.eval_every;
    if (flags.beta) cfg.dpo_beta = *flags.beta;
    if (flags.lambda_penalty) cfg.train.lambda_penalty = *flags.lambda_penalty;
    if (flags.threshold) cfg.threshold = *flags.threshold;
    if (!flags.data_dir.empty()) {
        cfg.data_dir = flags.data_dir;
        cfg.detector.data_dir = flags.data_dir;
    }
    return cfg;
}

std::vector<Strategy> parse_strategies(const std::string& arg) {
    if (arg.empty() || arg == "all") return all_strategies();
    std::vector<Strategy> out;
    std::string cur;
    for (char c : arg + ",") {
        if (c == ',') {
            if (!cur.empty()) out.push_back(strategy_from_string(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"desk-scale privacy-protection fine-tuning lab"};
    app.require_subcommand(1);

    CommonFlags flags;
    std::string strategy_arg = "Vanilla";
    int trials = 1000;
    int max_alphabet = 4;
    int max_length = 2;
    bool parallel = false;

    auto* synth = app.add_subcommand("synth", "Generate (or import) and split a corpus");
    add_common(synth, flags);
    auto* annotate = app.add_subcommand("annotate", "Tag PII and extract the n-gram sets");
    add_common(annotate, flags);
    auto* curate = app.add_subcommand("curate", "Write the Removal/Substitution corpora");
    add_common(curate, flags);
    auto* render = app.add_subcommand("render", "Write the rendered training set");
    add_common(render, flags);
    render->add_option("--strategy", strategy_arg, "Strategy name");
    auto* train_cmd = app.add_subcommand("train", "Train one strategy");
    add_common(train_cmd, flags);
    train_cmd->add_option("--strategy", strategy_arg, "Strategy name");
    auto* dpo = app.add_subcommand("dpo", "Preference-tune from the Vanilla checkpoint");
    add_common(dpo, flags);
    auto* classify = app.add_subcommand("classify", "Train the PII probe on the frozen LM");
    add_common(classify, flags);
    auto* eval = app.add_subcommand("eval", "Evaluate one strategy checkpoint");
    add_common(eval, flags);
    eval->add_option("--strategy", strategy_arg, "Strategy name");
    auto* curves = app.add_subcommand("curves", "Train with periodic metric snapshots");
    add_common(curves, flags);
    curves->add_option("--strategy", strategy_arg, "Strategy name");
    auto* theory = app.add_subcommand("theory-check", "Verify the masking inequality");
    add_common(theory, flags);
    theory->add_option("--trials", trials, "Number of random trials");
    theory->add_option("--max-alphabet", max_alphabet, "Largest alphabet size");
    theory->add_option("--max-length", max_length, "Longest sequence length");
    auto* matrix = app.add_subcommand("matrix", "Run the full strategy matrix");
    add_common(matrix, flags);
    matrix->add_option("--strategy", strategy_arg, "Comma list or \"all\"")->default_val("all");
    matrix->add_flag("--parallel", parallel, "Run independent strategies concurrently");

    CLI11_PARSE(app, argc, argv);

    try {
        RunConfig cfg = resolve_config(flags);
        Pipeline pipeline(cfg);

        if (synth->parsed()) {
            pipeline.build_corpus();
            auto st = pipeline.corpus().stats();
            std::printf("corpus: %zu samples (train %zu / test %zu), L_Q=%.2f L_A=%.2f\n",
                        st.count, pipeline.corpus().train_ids.size(),
                        pipeline.corpus().test_ids.size(), st.mean_question_tokens,
                        st.mean_answer_tokens);
        } else if (annotate->parsed()) {
            pipeline.annotate();
            std::printf("annotated %zu samples; |theta1|=%zu |theta2|=%zu\n",
                        pipeline.annotations().size(), pipeline.ngrams().unigrams.size(),
                        pipeline.ngrams().bigrams.size());
        } else if (curate->parsed()) {
            pipeline.curate();
            std::printf("curated corpora written under %s/curated\n", cfg.out_dir.c_str());
        } else if (render->parsed()) {
            Strategy s = strategy_from_string(strategy_arg);
            pipeline.render_strategy(s);
            std::printf("rendered %s training set\n", to_string(s).c_str());
        } else if (train_cmd->parsed()) {
            Strategy s = strategy_from_string(strategy_arg);
            pipeline.train_strategy(s);
            std::printf("trained %s -> %s\n", to_string(s).c_str(),
                        pipeline.paths().checkpoint(s).c_str());
        } else if (dpo->parsed()) {
            pipeline.train_dpo_strategy();
            std::printf("dpo checkpoint written\n");
        } else if (classify->parsed()) {
            pipeline.train_classifier_head();
            std::printf("classifier head written\n");
        } else if (eval->parsed()) {
            Strategy s = strategy_from_string(strategy_arg);
            std::optional<double> baseline;
            if (s != Strategy::Vanilla &&
                file_exists(pipeline.paths().report_json(Strategy::Vanilla))) {
                baseline = EvalReport::from_json(
                               read_text_file(pipeline.paths().report_json(Strategy::Vanilla)))
                               .s_priv;
            }
            EvalReport r = pipeline.eval_strategy(s, baseline);
            std::printf("%s", render_report_table({r}).c_str());
        } else if (curves->parsed()) {
            Strategy s = strategy_from_string(strategy_arg);
            pipeline.train_strategy(s, true);
            std::printf("curve written to %s\n", pipeline.paths().curve_csv(s).c_str());
        } else if (theory->parsed()) {
            DpiReport r = pipeline.theory_check(trials, max_alphabet, max_length);
            std::printf("trials=%d violations=%d max_violation=%.3e mean_gap=%.6f\n", r.trials,
                        r.violations, r.max_violation, r.mean_gap);
            if (r.violations > 0) return 1;
        } else if (matrix->parsed()) {
            pipeline.run_matrix(parse_strategies(strategy_arg), parallel);
            std::printf("%s", read_text_file(pipeline.paths().table_txt()).c_str());
        }
        pipeline.write_manifest();
        return 0;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return exit_code_for(e);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
