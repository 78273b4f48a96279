// Acceptance suite: runs every acceptance criterion at its stated tolerance
// and prints one PASS/FAIL line per criterion (sub-checks included).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "privlm/classifier.hpp"
#include "privlm/common.hpp"
#include "privlm/config.hpp"
#include "privlm/curation.hpp"
#include "privlm/detector.hpp"
#include "privlm/evaluate.hpp"
#include "privlm/metrics.hpp"
#include "privlm/model.hpp"
#include "privlm/pipeline.hpp"
#include "privlm/templates.hpp"
#include "privlm/theory.hpp"
#include "privlm/train.hpp"

using namespace privlm;

namespace {

int g_failures = 0;

void report(const std::string& criterion, bool pass, const std::string& detail) {
    std::printf("%s  %s: %s\n", pass ? "PASS" : "FAIL", criterion.c_str(), detail.c_str());
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

// --- criterion 1: masking inequality -----------------------------------------

void criterion_theory() {
    auto start = std::chrono::steady_clock::now();
    DpiReport r = check_dpi(1000, 4, 2, 7);
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    report("criterion 1 (masking inequality)",
           r.trials == 1000 && r.violations == 0 && r.max_violation <= 1e-12 && secs < 10.0,
           "1000 trials, violations=" + std::to_string(r.violations) +
               ", max_violation=" + fmt(r.max_violation) + ", " + fmt(secs) + "s");
}

// --- criterion 2: loss correctness -------------------------------------------

ModelConfig oracle_config(int vocab, uint64_t seed, int width = 16) {
    ModelConfig cfg;
    cfg.layers = 2;
    cfg.heads = 2;
    cfg.width = width;
    cfg.context = 32;
    cfg.vocab = vocab;
    cfg.seed = seed;
    return cfg;
}

std::vector<long double> probs_at(const Mat& logits, Eigen::Index row) {
    std::vector<long double> p(static_cast<std::size_t>(logits.cols()));
    long double z = 0.0;
    for (Eigen::Index j = 0; j < logits.cols(); ++j) {
        p[static_cast<std::size_t>(j)] = std::exp(static_cast<long double>(logits(row, j)));
        z += p[static_cast<std::size_t>(j)];
    }
    for (auto& v : p) v /= z;
    return p;
}

void criterion_losses() {
    bool ok = true;
    std::string detail;
    double worst = 0.0;
    Rng rng(2026);
    for (int trial = 0; trial < 6 && ok; ++trial) {
        int vocab = 6 + static_cast<int>(rng.next_u64() % 6);  // <= 11
        LmParams params = LmParams::init(oracle_config(vocab, rng.next_u64()));
        int len = 2 + static_cast<int>(rng.next_u64() % 4);  // |s| <= 5
        TrainItem item;
        item.ids.push_back(1);
        for (int t = 0; t < len; ++t) {
            item.ids.push_back(static_cast<int>(rng.next_u64() % static_cast<uint64_t>(vocab)));
        }
        item.completion_begin = 1;
        PiiNGramSet theta;
        theta.unigrams = {vocab - 1, vocab - 2};
        theta.bigrams = {{vocab - 1, vocab - 2}, {0, 1}};

        ForwardCache cache;
        forward_cached(params, item.ids, cache);
        const auto rows = static_cast<Eigen::Index>(item.ids.size()) - 1;
        long double ce = 0.0, p1 = 0.0, p2 = 0.0;
        for (Eigen::Index t = 0; t < rows; ++t) {
            auto p = probs_at(cache.logits, t);
            ce += -std::log(p[static_cast<std::size_t>(item.ids[static_cast<std::size_t>(t) + 1])]);
            for (int u : theta.unigrams) p1 += p[static_cast<std::size_t>(u)];
        }
        for (Eigen::Index t = 0; t + 1 < rows; ++t) {
            auto pa = probs_at(cache.logits, t);
            auto pb = probs_at(cache.logits, t + 1);
            for (const auto& [a, b] : theta.bigrams) {
                p2 += pa[static_cast<std::size_t>(a)] * pb[static_cast<std::size_t>(b)];
            }
        }
        ce /= rows;

        TrainConfig tc;
        tc.mode = LossMode::Penalty;
        LossBreakdown got = total_penalty_loss(params, item, theta, tc);
        auto rel = [](double a, long double b) {
            return std::abs(a - static_cast<double>(b)) /
                   std::max(1e-12, std::abs(static_cast<double>(b)));
        };
        worst = std::max({worst, rel(got.l0, ce), rel(got.penalty1, p1), rel(got.penalty2, p2)});
        if (worst > 1e-6) ok = false;

        // dpo against an independently summed oracle
        LmParams ref = LmParams::init(oracle_config(vocab, rng.next_u64()));
        DpoItem pair;
        pair.prompt_ids = {0};
        pair.w_ids = {vocab - 1, 1};
        pair.l_ids = {2};
        auto seq_lp = [&](const LmParams& model, const std::vector<int>& completion) {
            std::vector<int> ids = {1, 0};
            ids.insert(ids.end(), completion.begin(), completion.end());
            ids.push_back(2);
            ForwardCache c2;
            forward_cached(model, ids, c2);
            long double total = 0.0;
            for (std::size_t t = 1; t + 1 < ids.size(); ++t) {
                auto p = probs_at(c2.logits, static_cast<Eigen::Index>(t));
                total += std::log(p[static_cast<std::size_t>(ids[t + 1])]);
            }
            return total;
        };
        long double u = 0.1L * ((seq_lp(params, pair.w_ids) - seq_lp(ref, pair.w_ids)) -
                                (seq_lp(params, pair.l_ids) - seq_lp(ref, pair.l_ids)));
        long double dpo_expected = -std::log(1.0L / (1.0L + std::exp(-u)));
        double dpo_got = dpo_loss(params, ref, pair, 0.1);
        worst = std::max(worst, rel(dpo_got, dpo_expected));
        if (worst > 1e-6) ok = false;
    }
    detail = "oracle max rel err " + fmt(worst);

    // analytic anchors
    LmParams uniform = LmParams::init(oracle_config(11, 3));
    uniform.zero();
    TrainItem anchor;
    anchor.ids = {1, 4, 7, 2, 9};
    anchor.completion_begin = 1;
    double ce_uniform = cross_entropy_loss(uniform, anchor, false);
    bool anchors = std::abs(ce_uniform - std::log(11.0)) <= 1e-12;

    LmParams some = LmParams::init(oracle_config(11, 4));
    DpoItem pair;
    pair.prompt_ids = {3};
    pair.w_ids = {4, 5};
    pair.l_ids = {6};
    anchors = anchors && std::abs(dpo_loss(some, some, pair, 0.1) - std::log(2.0)) <= 1e-12;

    PiiNGramSet empty;
    TrainConfig tc;
    tc.mode = LossMode::Penalty;
    LossBreakdown nb = total_penalty_loss(some, anchor, empty, tc);
    anchors = anchors && nb.total() == cross_entropy_loss(some, anchor, false);

    report("criterion 2 (loss correctness)", ok && anchors,
           detail + "; anchors: uniform CE=lnV, dpo@init=ln2, empty theta => L=L0 " +
               (anchors ? "hold" : "VIOLATED"));
}

// --- criterion 3: gradient checks ---------------------------------------------

void criterion_gradients() {
    LmParams params = LmParams::init(oracle_config(13, 21));
    TrainItem item;
    item.ids = {1, 4, 7, 2, 9, 5, 11};
    item.completion_begin = 2;
    PiiNGramSet theta;
    theta.unigrams = {4, 9, 11};
    theta.bigrams = {{4, 9}, {11, 4}};
    TrainConfig tc;
    tc.mode = LossMode::Penalty;
    LmParams ref = LmParams::init(oracle_config(13, 22));
    DpoItem pair;
    pair.prompt_ids = {4, 10};
    pair.w_ids = {6, 7};
    pair.l_ids = {8, 9, 3};

    LossFn ce = [&](const LmParams& p, LmParams* g) {
        return cross_entropy_loss(p, item, false, g);
    };
    LossFn pen = [&](const LmParams& p, LmParams* g) {
        return total_penalty_loss(p, item, theta, tc, g).total();
    };
    LossFn dpo = [&](const LmParams& p, LmParams* g) {
        return dpo_loss(p, ref, pair, 0.1, g);
    };
    GradCheckResult rce = grad_check(params, ce, 1e-5);
    GradCheckResult rpen = grad_check(params, pen, 1e-5);
    GradCheckResult rdpo = grad_check(params, dpo, 1e-5);
    double worst = std::max({rce.max_rel_error, rpen.max_rel_error, rdpo.max_rel_error});
    report("criterion 3 (gradient checks)", worst <= 1e-3,
           "max rel err over " + std::to_string(rce.checked) + " params/loss: ce=" +
               fmt(rce.max_rel_error) + " penalty=" + fmt(rpen.max_rel_error) +
               " dpo=" + fmt(rdpo.max_rel_error));
}

// --- criterion 4: metric correctness ------------------------------------------

std::size_t lcs_oracle(const std::vector<std::string>& a, const std::vector<std::string>& b,
                       std::size_t i = 0, std::size_t j = 0) {
    if (i == a.size() || j == b.size()) return 0;
    if (a[i] == b[j]) return 1 + lcs_oracle(a, b, i + 1, j + 1);
    return std::max(lcs_oracle(a, b, i + 1, j), lcs_oracle(a, b, i, j + 1));
}

void criterion_metrics() {
    bool ok = true;
    Rng rng(777);
    auto random_tokens = [&](int max_len) {
        int len = rng.uniform_int(1, max_len);
        std::vector<std::string> out;
        for (int i = 0; i < len; ++i) {
            out.push_back(std::string(1, static_cast<char>('a' + rng.uniform_int(0, 3))));
        }
        return out;
    };
    for (int t = 0; t < 500 && ok; ++t) {
        auto g = random_tokens(6);
        auto r = random_tokens(6);
        if (r.size() < 2) r.push_back("b");
        std::map<std::string, int> counts;
        for (const auto& x : r) counts[x]++;
        int overlap = 0;
        for (const auto& x : g) {
            if (counts[x] > 0) {
                counts[x]--;
                overlap++;
            }
        }
        double r1_oracle = static_cast<double>(overlap) / static_cast<double>(r.size());
        std::map<std::pair<std::string, std::string>, int> bg;
        for (std::size_t i = 0; i + 1 < r.size(); ++i) bg[{r[i], r[i + 1]}]++;
        int overlap2 = 0;
        for (std::size_t i = 0; i + 1 < g.size(); ++i) {
            auto key = std::make_pair(g[i], g[i + 1]);
            if (bg[key] > 0) {
                bg[key]--;
                overlap2++;
            }
        }
        double r2_oracle = static_cast<double>(overlap2) / static_cast<double>(r.size() - 1);
        double rl_oracle = static_cast<double>(lcs_oracle(g, r)) /
                           static_cast<double>(std::max(g.size(), r.size()));
        ok = ok && std::abs(rouge1(g, r) - r1_oracle) <= 1e-12;
        ok = ok && std::abs(rouge2(g, r) - r2_oracle) <= 1e-12;
        ok = ok && std::abs(rouge_l(g, r) - rl_oracle) <= 1e-12;
    }
    std::vector<std::string> same = {"a", "b", "c"};
    ok = ok && rouge1(same, same) == 1.0 && rouge2(same, same) == 1.0 &&
         rouge_l(same, same) == 1.0;

    Detector det(DetectorConfig::defaults(PRIVLM_DATA_DIR));
    Tokenizer tok = Tokenizer::build(
        {"alan gates visited the clinic and rested quietly after treatment"});
    double sp =
        s_priv_value("alan gates visited the clinic and rested quietly after treatment", det, tok);
    ok = ok && std::abs(sp - 0.2) <= 1e-12;

    double d1 = delta(0.013, 0.023);
    double d2 = delta(0.012, 0.023);
    bool spot = std::abs(d1 - (-0.427)) <= 0.015 && std::abs(d2 - (-0.484)) <= 0.015;
    report("criterion 4 (metric correctness)", ok && spot,
           "500 rouge oracle pairs, s_priv(2/10)=" + fmt(sp) + ", delta spot checks " +
               fmt(d1) + "/" + fmt(d2) + " vs -0.427/-0.484");
}

// --- criteria 5 and 6: qualitative reproduction + classifier -------------------

struct MatrixRun {
    RunConfig cfg;
    std::map<Strategy, EvalReport> reports;
    std::vector<CurvePoint> vanilla_curve;
    F1Score classifier_f1;
    uint64_t vanilla_checksum = 0;
    uint64_t classifier_base_checksum = 0;
};

MatrixRun run_default_experiment(const std::string& out_dir) {
    RunConfig cfg = RunConfig::defaults();
    cfg.out_dir = out_dir;
    cfg.data_dir = PRIVLM_DATA_DIR;
    cfg.detector.data_dir = PRIVLM_DATA_DIR;
    std::filesystem::remove_all(out_dir);

    Pipeline pipeline(cfg);
    std::vector<Strategy> arms = {Strategy::Vanilla,  Strategy::Removal, Strategy::Substitution,
                                  Strategy::Penalty,  Strategy::ItNp1,   Strategy::ItNp2,
                                  Strategy::Classifier};
    pipeline.run_matrix(arms, false, true);

    MatrixRun run;
    run.cfg = cfg;
    for (Strategy s : arms) {
        run.reports[s] = EvalReport::from_json(
            read_text_file(pipeline.paths().report_json(s)));
    }
    run.vanilla_curve = pipeline.load_curve(Strategy::Vanilla);

    Checkpoint vanilla = pipeline.load_strategy_checkpoint(Strategy::Vanilla);
    Checkpoint classifier = pipeline.load_strategy_checkpoint(Strategy::Classifier);
    run.vanilla_checksum = vanilla.params.checksum();
    run.classifier_base_checksum = classifier.params.checksum();

    ClassifierHead head;
    head.w = classifier.extra.at("classifier.w").row(0).transpose();
    head.b = classifier.extra.at("classifier.b")(0, 0);
    head.tau = cfg.threshold;
    run.classifier_f1 = evaluate_head(vanilla.params, head, pipeline.annotations(),
                                      pipeline.corpus().test_ids);
    return run;
}

void criteria_qualitative_and_classifier(const std::string& out_dir) {
    auto start = std::chrono::steady_clock::now();
    MatrixRun run = run_default_experiment(out_dir);
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    const EvalReport& vanilla = run.reports.at(Strategy::Vanilla);
    const EvalReport& removal = run.reports.at(Strategy::Removal);
    const EvalReport& substitution = run.reports.at(Strategy::Substitution);
    const EvalReport& penalty = run.reports.at(Strategy::Penalty);
    const EvalReport& np1 = run.reports.at(Strategy::ItNp1);
    const EvalReport& np2 = run.reports.at(Strategy::ItNp2);
    const EvalReport& classifier = run.reports.at(Strategy::Classifier);

    // 5a: leakage grows with memorization
    const auto& curve = run.vanilla_curve;
    bool curve_ok = !curve.empty();
    double early = 0.0, final_priv = 0.0;
    if (curve_ok) {
        uint64_t total = curve.back().step;
        uint64_t tenth = std::max<uint64_t>(1, total / 10);
        const CurvePoint* at_tenth = &curve.front();
        for (const auto& p : curve) {
            if (p.step <= tenth) at_tenth = &p;
        }
        early = at_tenth->s_priv;
        final_priv = curve.back().s_priv;
        curve_ok = final_priv > 0.0 && final_priv >= 2.0 * early;
    }
    report("criterion 5a (vanilla leakage grows)", curve_ok,
           "s_priv " + fmt(early) + " at ~10% -> " + fmt(final_priv) + " at end");

    // 5b: curation protects but costs knowledge
    bool b_ok = removal.s_priv <= 0.5 * vanilla.s_priv &&
                substitution.s_priv <= 0.5 * vanilla.s_priv &&
                removal.rouge1 < vanilla.rouge1 && substitution.rouge1 < vanilla.rouge1;
    report("criterion 5b (curation trade-off)", b_ok,
           "s_priv removal=" + fmt(removal.s_priv) + " substitution=" + fmt(substitution.s_priv) +
               " vanilla=" + fmt(vanilla.s_priv) + "; rouge1 " + fmt(removal.rouge1) + "/" +
               fmt(substitution.rouge1) + " vs " + fmt(vanilla.rouge1));

    // 5c: instruction tuning with cases keeps knowledge while protecting
    auto c_holds = [&](const EvalReport& r) {
        return r.s_priv <= 0.6 * vanilla.s_priv && r.rouge1 >= 0.9 * vanilla.rouge1;
    };
    bool c_ok = c_holds(np1) || c_holds(np2);
    report("criterion 5c (case instruction tuning)", c_ok,
           "np1 s_priv=" + fmt(np1.s_priv) + " rouge1=" + fmt(np1.rouge1) + "; np2 s_priv=" +
               fmt(np2.s_priv) + " rouge1=" + fmt(np2.rouge1) + "; vanilla s_priv=" +
               fmt(vanilla.s_priv) + " rouge1=" + fmt(vanilla.rouge1));

    // 5d: penalty suppresses leakage
    report("criterion 5d (penalty suppresses leakage)", penalty.s_priv <= 0.8 * vanilla.s_priv,
           "penalty s_priv=" + fmt(penalty.s_priv) + " vs 0.8*vanilla=" +
               fmt(0.8 * vanilla.s_priv) + " (total run " + fmt(secs) + "s)");

    // 6: classifier quality + guarded generation + frozen base
    bool f1_ok = run.classifier_f1.f1 >= 0.9;
    bool guard_ok = classifier.s_priv < vanilla.s_priv;
    bool frozen_ok = run.vanilla_checksum == run.classifier_base_checksum;
    report("criterion 6 (classifier)", f1_ok && guard_ok && frozen_ok,
           "held-out F1=" + fmt(run.classifier_f1.f1) + ", guarded s_priv=" +
               fmt(classifier.s_priv) + " < vanilla " + fmt(vanilla.s_priv) +
               (frozen_ok ? ", base checksum unchanged" : ", BASE CHECKSUM CHANGED"));
}

// --- criterion 7: determinism ---------------------------------------------------

void criterion_determinism(const std::string& out_dir) {
    std::string bin = PRIVLM_BIN;
    std::string cfg_path = out_dir + "_config.toml";
    RunConfig cfg = RunConfig::defaults();
    cfg.out_dir = out_dir;
    cfg.data_dir = PRIVLM_DATA_DIR;
    cfg.detector.data_dir = PRIVLM_DATA_DIR;
    cfg.size = 64;
    cfg.train.epochs = 2;
    cfg.model.layers = 2;
    cfg.model.width = 64;
    cfg.max_new = 16;
    cfg.probe = 4;
    write_text_file(cfg_path, cfg.to_toml());

    auto run_once = [&]() -> std::map<std::string, uint64_t> {
        std::filesystem::remove_all(out_dir);
        std::string cmd = bin + " matrix --config " + cfg_path + " > /dev/null 2>&1";
        int status = std::system(cmd.c_str());
        if (WEXITSTATUS(status) != 0) return {};
        std::map<std::string, uint64_t> hashes;
        for (const auto& entry : std::filesystem::recursive_directory_iterator(out_dir)) {
            if (entry.is_regular_file()) {
                std::string rel = std::filesystem::relative(entry.path(), out_dir).string();
                hashes[rel] = fnv64_file(entry.path().string());
            }
        }
        return hashes;
    };

    auto first = run_once();
    std::string table_first =
        first.empty() ? "" : read_text_file(out_dir + "/reports/combined_table.txt");
    auto second = run_once();
    bool ok = !first.empty() && first == second;

    // structural check: 11 strategy rows, six metric columns
    bool table_ok = false;
    if (!second.empty()) {
        std::string table = read_text_file(out_dir + "/reports/combined_table.txt");
        table_ok = table == table_first;
        std::size_t rows = 0;
        for (Strategy s : all_strategies()) {
            if (table.find(to_string(s) + " ") != std::string::npos) ++rows;
        }
        table_ok = table_ok && rows == 11 && table.find("ROUGE-1/2/L") != std::string::npos &&
                   table.find("S_embed") != std::string::npos &&
                   table.find("S_Priv") != std::string::npos &&
                   table.find("Delta") != std::string::npos;
    }
    report("criterion 7 (byte-reproducible matrix)", ok && table_ok,
           ok ? std::to_string(first.size()) + " artifacts identical across reruns; table has " +
                    "11 strategy rows"
              : "artifact hashes differ between reruns");
}

// --- criterion 8: template goldens ----------------------------------------------

void criterion_goldens() {
    TemplateLibrary lib(PRIVLM_DATA_DIR);
    const char* kQ = "{{Question filled in there}}";
    const char* kA = "{{Answer filled in there}}";
    const char* kAsub = "{{Answer with PII substituted filled in there}}";
    std::map<Strategy, std::string> files = {
        {Strategy::It, "it.golden.txt"},
        {Strategy::ItPn1, "it_pn1.golden.txt"},
        {Strategy::ItPn2, "it_pn2.golden.txt"},
        {Strategy::ItNp1, "it_np1.golden.txt"},
        {Strategy::ItNp2, "it_np2.golden.txt"},
    };
    bool ok = true;
    std::string bad;
    for (const auto& [strategy, file] : files) {
        std::string golden = read_text_file(std::string(PRIVLM_GOLDEN_DIR) + "/" + file);
        if (!golden.empty() && golden.back() == '\n') golden.pop_back();
        auto r = lib.instantiate(strategy, kQ, kA, kAsub);
        if (r.prompt + r.completion != golden) {
            ok = false;
            bad += file + " ";
        }
    }
    report("criterion 8 (template goldens)", ok,
           ok ? "all five templates byte-exact" : "mismatch: " + bad);
}

}  // namespace

int main() {
    std::string work = std::filesystem::temp_directory_path().string() + "/privlm_acceptance";
    criterion_theory();
    criterion_losses();
    criterion_gradients();
    criterion_metrics();
    criteria_qualitative_and_classifier(work + "/default_run");
    criterion_determinism(work + "/repro_run");
    criterion_goldens();
    if (g_failures == 0) {
        std::printf("acceptance: all criteria passed\n");
        return 0;
    }
    std::printf("acceptance: %d criterion(s) FAILED\n", g_failures);
    return 1;
}
