#include "privlm/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "privlm/common.hpp"
#include "privlm/curation.hpp"

namespace privlm {

using nlohmann::json;

std::string EvalReport::to_json() const {
    json j{{"strategy", privlm::to_string(strategy)},
           {"rouge1", rouge1},
           {"rouge2", rouge2},
           {"rougeL", rouge_l},
           {"embed_score", embed_score},
           {"s_priv", s_priv},
           {"baseline", baseline},
           {"samples", samples},
           {"extraction_fallbacks", extraction_fallbacks},
           {"generated_tokens", generated_tokens},
           {"pii_tokens", pii_tokens}};
    if (delta) j["delta"] = *delta;
    return j.dump(2) + "\n";
}

EvalReport EvalReport::from_json(const std::string& text) {
    json j = json::parse(text);
    EvalReport r;
    r.strategy = strategy_from_string(j.at("strategy").get<std::string>());
    r.rouge1 = j.at("rouge1").get<double>();
    r.rouge2 = j.at("rouge2").get<double>();
    r.rouge_l = j.at("rougeL").get<double>();
    r.embed_score = j.at("embed_score").get<double>();
    r.s_priv = j.at("s_priv").get<double>();
    r.baseline = j.at("baseline").get<std::string>();
    r.samples = j.at("samples").get<std::size_t>();
    r.extraction_fallbacks = j.at("extraction_fallbacks").get<std::size_t>();
    r.generated_tokens = j.at("generated_tokens").get<std::size_t>();
    r.pii_tokens = j.at("pii_tokens").get<std::size_t>();
    if (j.contains("delta")) r.delta = j.at("delta").get<double>();
    return r;
}

Eigen::VectorXd sequence_embedding(const LmParams& embedder, const std::vector<int>& ids) {
    if (ids.empty()) return Eigen::VectorXd::Zero(embedder.config.width);
    std::vector<int> with_bos;
    with_bos.reserve(ids.size() + 1);
    with_bos.push_back(1 /* bos */);
    for (int id : ids) {
        if (static_cast<int>(with_bos.size()) >= embedder.config.context) break;
        with_bos.push_back(id);
    }
    ForwardResult out = forward(embedder, with_bos);
    Eigen::VectorXd pooled = Eigen::VectorXd::Zero(embedder.config.width);
    for (Eigen::Index t = 1; t < out.hidden.rows(); ++t) pooled += out.hidden.row(t).transpose();
    pooled /= static_cast<double>(out.hidden.rows() - 1);
    return pooled;
}

double embed_score(const LmParams& embedder, const std::vector<int>& g_ids,
                   const std::vector<int>& r_ids) {
    Eigen::VectorXd g = sequence_embedding(embedder, g_ids);
    Eigen::VectorXd r = sequence_embedding(embedder, r_ids);
    double ng = g.norm(), nr = r.norm();
    if (ng == 0.0 || nr == 0.0) return 0.0;
    return g.dot(r) / (ng * nr);
}

EvalReport evaluate(const LmParams& params, Strategy strategy,
                    const std::vector<const Sample*>& test_samples, const EvalContext& ctx) {
    require(ctx.tokenizer && ctx.templates && ctx.detector && ctx.embedder,
            ErrorKind::Precondition, "evaluate: context is incomplete");
    require(!test_samples.empty(), ErrorKind::Precondition, "evaluate: empty test set");
    if (ctx.use_curated_refs) {
        require(ctx.annotations != nullptr, ErrorKind::Precondition,
                "evaluate: curated references need annotations");
    }
    const Tokenizer& tok = *ctx.tokenizer;

    EvalReport report;
    report.strategy = strategy;
    double r1 = 0.0, r2 = 0.0, rl = 0.0, emb = 0.0;
    for (const Sample* sample : test_samples) {
        std::string prompt = ctx.templates->inference_prompt(sample->question, strategy);
        std::vector<int> prompt_ids;
        prompt_ids.push_back(tok.bos_id());
        for (int id : tok.encode(prompt)) prompt_ids.push_back(id);
        if (static_cast<int>(prompt_ids.size()) > params.config.context - 1) {
            prompt_ids.resize(static_cast<std::size_t>(params.config.context - 1));
        }
        GenerateOptions opts;
        opts.max_new = ctx.max_new;
        opts.mode = DecodeMode::Greedy;
        opts.eos_id = tok.eos_id();
        std::vector<int> gen = strategy == Strategy::Classifier && ctx.guard != nullptr
                                   ? guarded_generate(params, *ctx.guard, prompt_ids,
                                                      tok.anon_id(), opts)
                                   : generate(params, prompt_ids, opts);
        std::string full_text = tok.decode(gen);
        ExtractedAnswer extracted = ctx.templates->extract_protected_answer(full_text, strategy);
        if (extracted.used_fallback) report.extraction_fallbacks++;

        std::string reference = sample->answer;
        if (ctx.use_curated_refs && strategy == Strategy::Substitution) {
            const auto& ann = ctx.annotations->at(sample->id).answer;
            reference = tok.decode(substitute_pii(ann, tok));
        }
        std::vector<std::string> g_tokens = Tokenizer::split(extracted.text);
        std::vector<std::string> r_tokens = Tokenizer::split(reference);

        r1 += g_tokens.empty() ? 0.0 : rouge1(g_tokens, r_tokens);
        r2 += g_tokens.empty() ? 0.0 : rouge2(g_tokens, r_tokens);
        rl += g_tokens.empty() ? 0.0 : rouge_l(g_tokens, r_tokens);
        emb += embed_score(*ctx.embedder, tok.encode_tokens(g_tokens),
                           tok.encode_tokens(r_tokens));

        PrivacyScore ps = s_priv(extracted.text, *ctx.detector, tok);
        report.pii_tokens += ps.pii_tokens;
        report.generated_tokens += ps.total_tokens;
        report.samples++;
    }
    double inv = 1.0 / static_cast<double>(report.samples);
    report.rouge1 = r1 * inv;
    report.rouge2 = r2 * inv;
    report.rouge_l = rl * inv;
    report.embed_score = emb * inv;
    report.s_priv = report.generated_tokens == 0
                        ? 0.0
                        : static_cast<double>(report.pii_tokens) /
                              static_cast<double>(report.generated_tokens);
    return report;
}

TrainLog curve_run(LmParams& params, const std::vector<TrainItem>& items,
                   const PiiNGramSet* theta, const TrainConfig& cfg, Strategy strategy,
                   const std::vector<const Sample*>& test_samples, const EvalContext& ctx,
                   const CurveConfig& curve_cfg, std::vector<CurvePoint>& points) {
    std::vector<const Sample*> probe = test_samples;
    if (probe.size() > curve_cfg.probe) probe.resize(curve_cfg.probe);

    std::size_t steps_per_epoch =
        (items.size() + static_cast<std::size_t>(cfg.batch_size) - 1) /
        static_cast<std::size_t>(cfg.batch_size);
    uint64_t total_steps = static_cast<uint64_t>(steps_per_epoch) *
                           static_cast<uint64_t>(cfg.epochs);

    auto snapshot = [&](uint64_t step, const LmParams& p) {
        EvalReport r = evaluate(p, strategy, probe, ctx);
        points.push_back({step, r.rouge1, r.rouge2, r.rouge_l, r.embed_score, r.s_priv});
    };
    StepCallback cb = [&](uint64_t step, const LmParams& p) {
        bool periodic = curve_cfg.eval_every > 0 &&
                        step % static_cast<uint64_t>(curve_cfg.eval_every) == 0;
        if (periodic || step == total_steps) snapshot(step, p);
    };
    TrainLog log = train(params, items, theta, cfg, cb);
    if (points.empty() || points.back().step != total_steps) snapshot(total_steps, params);
    return log;
}

void save_curve_csv(const std::vector<CurvePoint>& points, const std::string& path) {
    std::ostringstream out;
    out << "step,metric,value\n";
    for (const auto& p : points) {
        out << p.step << ",rouge1," << p.rouge1 << '\n';
        out << p.step << ",rouge2," << p.rouge2 << '\n';
        out << p.step << ",rougeL," << p.rouge_l << '\n';
        out << p.step << ",embed_score," << p.embed_score << '\n';
        out << p.step << ",s_priv," << p.s_priv << '\n';
    }
    write_text_file(path, out.str());
}

void svg_line_plot(const std::string& path, const std::string& title,
                   const std::vector<double>& xs, const std::vector<double>& ys) {
    require(xs.size() == ys.size() && !xs.empty(), ErrorKind::Precondition,
            "svg plot: need matching non-empty series");
    const double w = 640.0, h = 360.0, ml = 60.0, mr = 20.0, mt = 40.0, mb = 40.0;
    double xmin = *std::min_element(xs.begin(), xs.end());
    double xmax = *std::max_element(xs.begin(), xs.end());
    double ymin = *std::min_element(ys.begin(), ys.end());
    double ymax = *std::max_element(ys.begin(), ys.end());
    if (xmax == xmin) xmax = xmin + 1.0;
    if (ymax == ymin) ymax = ymin + 1.0;
    auto sx = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (w - ml - mr); };
    auto sy = [&](double y) { return h - mb - (y - ymin) / (ymax - ymin) * (h - mt - mb); };

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
        << "\" viewBox=\"0 0 " << w << ' ' << h << "\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg << "<text x=\"" << w / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"16\">" << title << "</text>\n";
    svg << "<line x1=\"" << ml << "\" y1=\"" << h - mb << "\" x2=\"" << w - mr << "\" y2=\""
        << h - mb << "\" stroke=\"black\"/>\n";
    svg << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << h - mb
        << "\" stroke=\"black\"/>\n";
    svg << std::setprecision(4);
    svg << "<text x=\"" << ml - 6 << "\" y=\"" << sy(ymin) << "\" text-anchor=\"end\" "
           "font-family=\"sans-serif\" font-size=\"11\">" << ymin << "</text>\n";
    svg << "<text x=\"" << ml - 6 << "\" y=\"" << sy(ymax) << "\" text-anchor=\"end\" "
           "font-family=\"sans-serif\" font-size=\"11\">" << ymax << "</text>\n";
    svg << "<text x=\"" << sx(xmin) << "\" y=\"" << h - mb + 16 << "\" text-anchor=\"middle\" "
           "font-family=\"sans-serif\" font-size=\"11\">" << xmin << "</text>\n";
    svg << "<text x=\"" << sx(xmax) << "\" y=\"" << h - mb + 16 << "\" text-anchor=\"middle\" "
           "font-family=\"sans-serif\" font-size=\"11\">" << xmax << "</text>\n";
    svg << "<polyline fill=\"none\" stroke=\"#1f6fb2\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < xs.size(); ++i) {
        svg << sx(xs[i]) << ',' << sy(ys[i]) << ' ';
    }
    svg << "\"/>\n";
    for (std::size_t i = 0; i < xs.size(); ++i) {
        svg << "<circle cx=\"" << sx(xs[i]) << "\" cy=\"" << sy(ys[i])
            << "\" r=\"3\" fill=\"#1f6fb2\"/>\n";
    }
    svg << "</svg>\n";
    write_text_file(path, svg.str());
}

void save_curve_svgs(const std::vector<CurvePoint>& points, const std::string& dir,
                     const std::string& prefix) {
    if (points.empty()) return;
    std::vector<double> xs;
    for (const auto& p : points) xs.push_back(static_cast<double>(p.step));
    auto emit = [&](const std::string& metric, auto getter) {
        std::vector<double> ys;
        for (const auto& p : points) ys.push_back(getter(p));
        svg_line_plot(dir + "/" + prefix + "." + metric + ".svg", prefix + " " + metric, xs, ys);
    };
    emit("rouge1", [](const CurvePoint& p) { return p.rouge1; });
    emit("rouge2", [](const CurvePoint& p) { return p.rouge2; });
    emit("rougeL", [](const CurvePoint& p) { return p.rouge_l; });
    emit("embed_score", [](const CurvePoint& p) { return p.embed_score; });
    emit("s_priv", [](const CurvePoint& p) { return p.s_priv; });
}

std::string render_report_table(const std::vector<EvalReport>& reports) {
    std::ostringstream out;
    out << std::left << std::setw(14) << "Strategy"
        << "  ROUGE-1/2/L          S_embed  S_Priv   Delta(%)\n";
    out << std::string(66, '-') << '\n';
    for (const auto& r : reports) {
        std::ostringstream rouges;
        rouges << std::fixed << std::setprecision(3) << r.rouge1 << '/' << r.rouge2 << '/'
               << r.rouge_l;
        out << std::left << std::setw(14) << to_string(r.strategy) << "  " << std::setw(19)
            << rouges.str() << "  " << std::fixed << std::setprecision(3) << std::setw(7)
            << r.embed_score << "  " << std::setw(7) << std::setprecision(4) << r.s_priv << "  ";
        if (r.delta) {
            out << std::showpos << std::setprecision(1) << (*r.delta * 100.0) << std::noshowpos;
        } else {
            out << "-";
        }
        out << '\n';
    }
    return out.str();
}

}  // namespace privlm
