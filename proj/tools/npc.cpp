// npc: decision-path coverage tooling.

#include "npc/abstraction.hpp"
#include "npc/cdp.hpp"
#include "npc/comparators.hpp"
#include "npc/coverage.hpp"
#include "npc/dataset.hpp"
#include "npc/error.hpp"
#include "npc/metrics.hpp"
#include "npc/rng.hpp"
#include "npc/trainkit.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>

namespace {

using namespace npc;
using nlohmann::json;

void emit(const std::string& text, const std::string& path) {
    if (path.empty() || path == "-") {
        std::cout << text << '\n';
        return;
    }
    std::ofstream out(path);
    if (!out) throw Error("cannot open " + path + " for writing");
    out << text << '\n';
    if (!out) throw Error("failed writing " + path);
}

std::string sibling(const std::string& model_path, const std::string& suffix) {
    std::filesystem::path p(model_path);
    return (p.parent_path() / (p.stem().string() + suffix)).string();
}

const std::map<std::string, double> kAlphaPresets = {
    {"mnist-sadl1", 0.8}, {"cifar-sadl2", 0.7}, {"cifar-vgg16", 0.9}, {"svhn-alexnet", 0.7}, {"imagenet-vgg16", 0.7},
};

std::vector<std::size_t> predictions(const Model& m, const LabeledDataset& d) {
    std::vector<std::size_t> out;
    for (const auto& x : d.inputs) out.push_back(predict(m, x).label);
    return out;
}

// ---------------------------------------------------------------------------

struct TrainFixtureArgs {
    std::string out, dataset = "blobs";
    std::size_t dims = 2, classes = 3, samples = 500, epochs = 50;
    std::vector<std::size_t> hidden{16, 16};
    double lr = 0.1;
    std::uint64_t seed = 0;
};

void train_fixture(const TrainFixtureArgs& a) {
    BlobsConfig blobs;
    blobs.dims = a.dims;
    blobs.classes = a.classes;
    blobs.samples_per_class = (a.samples + a.classes - 1) / a.classes;
    blobs.seed = a.seed;
    std::vector<std::size_t> idx(a.samples);
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    const auto train = make_blobs(blobs).subset(idx);
    const auto test = make_blobs_split(blobs, 0).subset(idx);

    TrainConfig cfg;
    cfg.learning_rate = a.lr;
    cfg.epochs = a.epochs;
    cfg.seed = a.seed;
    const auto result = train_sgd(Architecture::mlp(a.dims, a.hidden, a.classes), train, cfg);

    const auto train_path = sibling(a.out, ".train.npct");
    const auto test_path = sibling(a.out, ".test.npct");
    save_model_file(result.model, a.out);
    save_dataset_file(train, train_path);
    save_dataset_file(test, test_path);
    std::printf("model      %s (hash %s)\n", a.out.c_str(), to_hex(result.model.content_hash()).c_str());
    std::printf("train data %s\n", train_path.c_str());
    std::printf("test data  %s\n", test_path.c_str());
    std::printf("train accuracy %.4f\n", result.train_accuracy);
    std::printf("test accuracy  %.4f\n", accuracy(result.model, test));
}

struct BuildArgs {
    std::string model, data, out, preset;
    double alpha = 0.8, beta = 0.8;
    std::size_t clusters = 4;
    std::uint64_t seed = 0;
    bool include_input = false;
    std::string rule = "epsilon";
};

LrpRule rule_of(const std::string& s) { return s == "zplus" ? LrpRule::ZPlus : LrpRule::Epsilon; }

void build_dg(BuildArgs a) {
    if (!a.preset.empty()) a.alpha = kAlphaPresets.at(a.preset);
    const auto m = load_model_file(a.model);
    const auto data = load_dataset_file(a.data);
    GraphParams p;
    p.alpha = a.alpha;
    p.k = a.clusters;
    p.beta = a.beta;
    p.seed = a.seed;
    p.include_input = a.include_input;
    p.lrp_rule = rule_of(a.rule);
    const auto g = build_decision_graph(m, data, p);
    save_graph_file(g, a.out);
    std::printf("graph %s: %zu classes x %zu clusters, %zu layers, alpha %.3f beta %.3f\n", a.out.c_str(),
                g.class_count(), p.k, g.layer_count(), p.alpha, p.beta);
    for (const auto& clusters : g.classes) {
        for (const auto& cl : clusters) {
            std::printf("  class %zu cluster %zu: %zu members, abstract width %.4f%s\n", cl.class_id, cl.cluster_id,
                        cl.members.size(), abstract_width(cl.abstract, g), cl.empty() ? " (empty)" : "");
        }
    }
}

struct CoverArgs {
    std::string model, dg, suite, criterion = "snpc", report;
    std::size_t buckets = 200;
    double ubound = 2.0;
};

void cover(const CoverArgs& a) {
    const auto m = load_model_file(a.model);
    const auto g = load_graph_file(a.dg, m);
    const auto suite = load_dataset_file(a.suite);
    CoverageState state(g, parse_criterion(a.criterion), CoverageConfig{a.buckets, a.ubound});
    cover_suite(state, m, suite.inputs);
    emit(coverage_report_json(state), a.report);
}

struct MaskArgs {
    std::string model, data, dg, target = "both", report;
    double alpha = 0.8;
    bool quintiles = false;
};

void mask_eval_cmd(const MaskArgs& a) {
    const auto m = load_model_file(a.model);
    const auto data = load_dataset_file(a.data);
    json out;
    if (!a.dg.empty()) {
        const auto g = load_graph_file(a.dg, m);
        const auto c = abstract_mask_eval(m, g, data, MaskTarget::Cdp);
        const auto nc = abstract_mask_eval(m, g, data, MaskTarget::Ncdp);
        out = {{"mode", "abstract"}, {"width", c.mean_width}, {"inc_c", c.overall}, {"inc_nc", nc.overall}};
    } else {
        out = {{"mode", "per_sample"}, {"alpha", a.alpha}};
        if (a.target == "cdp" || a.target == "both") {
            const auto r = mask_eval(m, data, a.alpha, MaskTarget::Cdp);
            out["width"] = r.mean_width;
            out["inc_c"] = r.rate;
        }
        if (a.target == "ncdp" || a.target == "both") {
            const auto r = mask_eval(m, data, a.alpha, MaskTarget::Ncdp);
            out["width"] = r.mean_width;
            out["inc_nc"] = r.rate;
        }
        if (a.quintiles) out["quintiles"] = quintile_mask_eval(m, data, a.alpha);
    }
    emit(out.dump(2), a.report);
}

struct TuneArgs {
    std::string model, data, report;
    std::vector<double> alphas{0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
    std::vector<std::size_t> clusters{1, 2, 4, 6};
    std::vector<double> betas{0.5, 0.6, 0.7, 0.8, 0.9};
    double width_cap = 0.5;
    std::uint64_t seed = 0;
};

void tune(const TuneArgs& a) {
    const auto m = load_model_file(a.model);
    const auto data = load_dataset_file(a.data);
    std::vector<TuneRow> alpha_rows;
    std::printf("%-8s %-8s %-8s\n", "alpha", "width", "Inc.C-Inc.NC");
    for (double alpha : a.alphas) {
        const auto c = mask_eval(m, data, alpha, MaskTarget::Cdp);
        const auto nc = mask_eval(m, data, alpha, MaskTarget::Ncdp);
        alpha_rows.push_back({alpha, 0, 0.0, c.mean_width, c.rate, nc.rate});
        std::printf("%-8.3f %-8.4f %.4f (Inc.C %.4f, Inc.NC %.4f)\n", alpha, c.mean_width, c.rate - nc.rate, c.rate,
                    nc.rate);
    }
    const auto best_alpha = recommend(alpha_rows, a.width_cap);
    if (best_alpha == alpha_rows.size()) throw Error("no alpha meets the width cap");
    const double alpha = alpha_rows[best_alpha].alpha;

    std::vector<TuneRow> graph_rows;
    std::printf("\n%-4s %-6s %-8s %s\n", "k", "beta", "width", "Inc.C-Inc.NC");
    for (auto k : a.clusters) {
        for (double beta : a.betas) {
            GraphParams p;
            p.alpha = alpha;
            p.k = k;
            p.beta = beta;
            p.seed = a.seed;
            const auto g = build_decision_graph(m, data, p);
            const auto c = abstract_mask_eval(m, g, data, MaskTarget::Cdp);
            const auto nc = abstract_mask_eval(m, g, data, MaskTarget::Ncdp);
            graph_rows.push_back({alpha, k, beta, c.mean_width, c.overall, nc.overall});
            std::printf("%-4zu %-6.2f %-8.4f %.4f (Inc.C %.4f, Inc.NC %.4f)\n", k, beta, c.mean_width,
                        c.overall - nc.overall, c.overall, nc.overall);
        }
    }
    const auto best_graph = recommend(graph_rows, a.width_cap);

    auto rows_json = [](const std::vector<TuneRow>& rows) {
        json arr = json::array();
        for (const auto& r : rows) {
            arr.push_back({{"alpha", r.alpha}, {"k", r.k}, {"beta", r.beta}, {"width", r.width}, {"inc_c", r.inc_c},
                           {"inc_nc", r.inc_nc}});
        }
        return arr;
    };
    json out = {{"width_cap", a.width_cap}, {"alpha_rows", rows_json(alpha_rows)},
                {"graph_rows", rows_json(graph_rows)}, {"recommended_alpha", alpha}};
    if (best_graph < graph_rows.size()) {
        out["recommended_k"] = graph_rows[best_graph].k;
        out["recommended_beta"] = graph_rows[best_graph].beta;
        std::printf("\nrecommended: alpha %.3f, k %zu, beta %.2f\n", alpha, graph_rows[best_graph].k,
                    graph_rows[best_graph].beta);
    } else {
        std::printf("\nrecommended: alpha %.3f; no (k, beta) meets the width cap\n", alpha);
    }
    if (!a.report.empty()) emit(out.dump(2), a.report);
}

struct BaselineArgs {
    std::string model, train, suite, criterion = "nc", report;
    double threshold = 0.0;
    std::size_t k = 1000, sections = 1;
};

void baseline(const BaselineArgs& a) {
    const auto m = load_model_file(a.model);
    const auto suite = load_dataset_file(a.suite);
    BaselineResult r;
    if (a.criterion == "nc") {
        r = nc(m, suite.inputs, a.threshold);
    } else {
        if (a.train.empty()) throw InvalidArgument(a.criterion + " needs --train to profile activation ranges");
        const auto ranges = profile_ranges(m, load_dataset_file(a.train));
        r = a.criterion == "kmnc" ? kmnc(m, suite.inputs, ranges, a.k) : nbc(m, suite.inputs, ranges, a.sections);
    }
    emit(baseline_report_json(r), a.report);
}

struct AttackArgs {
    std::string model, data, out;
    double eps = 0.1, step = -1.0;
    std::size_t iters = 20;
    std::uint64_t seed = 0;
    bool errors_only = false;
};

void attack(const AttackArgs& a) {
    const auto m = load_model_file(a.model);
    const auto data = load_dataset_file(a.data);
    if (!data.has_labels()) throw InvalidArgument("attack needs a labeled dataset");
    LabeledDataset adv;
    adv.sample_shape = data.sample_shape;
    std::size_t flipped = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        PgdConfig cfg;
        cfg.eps = a.eps;
        cfg.step = a.step;
        cfg.iters = a.iters;
        cfg.seed = Rng::stream(a.seed, "attack", i).next_u64();
        const auto r = pgd_attack(m, data.inputs[i], data.labels[i], cfg);
        flipped += r.misclassified;
        if (a.errors_only && !r.misclassified) continue;
        adv.inputs.push_back(r.adversarial);
        adv.labels.push_back(data.labels[i]);
    }
    save_dataset_file(adv, a.out);
    std::printf("%zu of %zu inputs misclassified after attack; wrote %zu samples to %s\n", flipped, data.size(),
                adv.size(), a.out.c_str());
}

struct ImpartialityArgs {
    std::string model, dg, criterion = "snpc", report, csv;
    std::vector<std::string> suites;
    std::size_t buckets = 200;
    double ubound = 2.0;
};

void impartiality(const ImpartialityArgs& a) {
    const auto m = load_model_file(a.model);
    std::optional<DecisionGraph> g;
    if (!a.dg.empty()) g = load_graph_file(a.dg, m);
    std::vector<SuiteRow> rows;
    json suites = json::array();
    for (const auto& path : a.suites) {
        const auto d = load_dataset_file(path);
        const auto preds = predictions(m, d);
        SuiteRow row{path, 0.0, output_impartiality(preds, m.class_count())};
        json entry = {{"suite", path}, {"impartiality", row.impartiality}};
        if (g) {
            CoverageState state(*g, parse_criterion(a.criterion), CoverageConfig{a.buckets, a.ubound});
            cover_suite(state, m, d.inputs);
            row.coverage = coverage(state);
            entry["coverage"] = row.coverage;
        }
        rows.push_back(row);
        suites.push_back(entry);
    }
    json out = {{"normalization", "entropy / ln(class_count)"}, {"suites", suites}};
    if (g && rows.size() >= 2) {
        std::vector<double> cov, imp;
        for (const auto& r : rows) {
            cov.push_back(r.coverage);
            imp.push_back(r.impartiality);
        }
        const double p = pearson(cov, imp), s = spearman(cov, imp);
        out["pearson"] = std::isnan(p) ? json(nullptr) : json(p);
        out["spearman"] = std::isnan(s) ? json(nullptr) : json(s);
    }
    emit(out.dump(2), a.report);
    if (!a.csv.empty()) emit(suite_rows_csv(rows), a.csv);
}

struct SimilarityArgs {
    std::string model, dg, data, report;
    std::size_t cap = 100;
    std::uint64_t seed = 0;
};

void similarity(const SimilarityArgs& a) {
    const auto m = load_model_file(a.model);
    const auto g = load_graph_file(a.dg, m);
    const auto data = load_dataset_file(a.data);
    const auto view = model_for_graph(m, g);
    const LrpOptions lrp{g.params.lrp_rule, 1e-6};
    std::vector<CriticalPath> paths;
    paths.reserve(data.size());
    for (const auto& x : data.inputs) paths.push_back(analyze(view, x, g.params.alpha, lrp).path);
    emit(similarity_report_json(similarity_stats(g, paths, a.cap, a.seed)), a.report);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Decision-path coverage for feed-forward networks"};
    app.require_subcommand(1);

    TrainFixtureArgs tf;
    auto* c_tf = app.add_subcommand("train-fixture", "Train a small network on seeded blobs");
    c_tf->add_option("--out", tf.out, "Model path (.npcm); datasets are written next to it")->required();
    c_tf->add_option("--dataset", tf.dataset, "Fixture dataset")->check(CLI::IsMember({"blobs"}));
    c_tf->add_option("--dims", tf.dims, "Input dimensions")->check(CLI::Range(1, 1024));
    c_tf->add_option("--classes", tf.classes, "Class count")->check(CLI::Range(2, 1024));
    c_tf->add_option("--samples", tf.samples, "Samples per split")->check(CLI::Range(1, 10000000));
    c_tf->add_option("--hidden", tf.hidden, "Hidden layer widths");
    c_tf->add_option("--epochs", tf.epochs)->check(CLI::PositiveNumber);
    c_tf->add_option("--lr", tf.lr)->check(CLI::PositiveNumber);
    c_tf->add_option("--seed", tf.seed);

    BuildArgs bd;
    auto* c_bd = app.add_subcommand("build-dg", "Build a decision graph from training data");
    c_bd->add_option("--model", bd.model)->required();
    c_bd->add_option("--data", bd.data)->required();
    c_bd->add_option("--out", bd.out)->required();
    c_bd->add_option("--alpha", bd.alpha, "CDP relevance fraction in (0, 1]")->check(CLI::Range(0.0, 1.0));
    c_bd->add_option("--preset", bd.preset, "Alpha preset: mnist-sadl1 0.8, cifar-sadl2 0.7, cifar-vgg16 0.9, "
                                            "svhn-alexnet 0.7, imagenet-vgg16 0.7")
        ->check(CLI::IsMember({"mnist-sadl1", "cifar-sadl2", "cifar-vgg16", "svhn-alexnet", "imagenet-vgg16"}))
        ->excludes("--alpha");
    c_bd->add_option("--clusters", bd.clusters, "Clusters per class")->check(CLI::Range(1, 100000));
    c_bd->add_option("--beta", bd.beta, "Abstract path threshold in [0, 1)")->check(CLI::Range(0.0, 1.0));
    c_bd->add_option("--seed", bd.seed);
    c_bd->add_flag("--include-input", bd.include_input, "Treat the input as a coverage layer");
    c_bd->add_option("--lrp-rule", bd.rule)->check(CLI::IsMember({"epsilon", "zplus"}));

    CoverArgs cv;
    auto* c_cv = app.add_subcommand("cover", "Measure SNPC or ANPC of a test suite");
    c_cv->add_option("--model", cv.model)->required();
    c_cv->add_option("--dg", cv.dg)->required();
    c_cv->add_option("--suite", cv.suite)->required();
    c_cv->add_option("--criterion", cv.criterion)->check(CLI::IsMember({"snpc", "anpc"}));
    c_cv->add_option("--buckets", cv.buckets)->check(CLI::Range(1, 1000000));
    c_cv->add_option("--ubound", cv.ubound)->check(CLI::PositiveNumber);
    c_cv->add_option("--report", cv.report, "JSON report path (stdout if omitted)");

    MaskArgs mk;
    auto* c_mk = app.add_subcommand("mask-eval", "Inconsistency rates of masking CDP and NCDP neurons");
    c_mk->add_option("--model", mk.model)->required();
    c_mk->add_option("--data", mk.data)->required();
    c_mk->add_option("--dg", mk.dg, "Mask abstract paths of this graph instead of per-sample CDPs");
    c_mk->add_option("--alpha", mk.alpha)->check(CLI::Range(0.0, 1.0));
    c_mk->add_option("--target", mk.target)->check(CLI::IsMember({"cdp", "ncdp", "both"}));
    c_mk->add_flag("--quintiles", mk.quintiles, "Also mask relevance bands one at a time");
    c_mk->add_option("--report", mk.report);

    TuneArgs tn;
    auto* c_tn = app.add_subcommand("tune", "Sweep alpha, clusters and beta");
    c_tn->add_option("--model", tn.model)->required();
    c_tn->add_option("--data", tn.data)->required();
    c_tn->add_option("--alphas", tn.alphas)->check(CLI::Range(0.0, 1.0));
    c_tn->add_option("--clusters", tn.clusters)->check(CLI::Range(1, 100000));
    c_tn->add_option("--betas", tn.betas)->check(CLI::Range(0.0, 1.0));
    c_tn->add_option("--width-cap", tn.width_cap)->check(CLI::Range(0.0, 1.0));
    c_tn->add_option("--seed", tn.seed);
    c_tn->add_option("--report", tn.report);

    BaselineArgs bl;
    auto* c_bl = app.add_subcommand("baseline", "Neuron, k-multisection or boundary coverage");
    c_bl->add_option("--model", bl.model)->required();
    c_bl->add_option("--suite", bl.suite)->required();
    c_bl->add_option("--train", bl.train, "Training data for activation ranges");
    c_bl->add_option("--criterion", bl.criterion)->check(CLI::IsMember({"nc", "kmnc", "nbc"}));
    c_bl->add_option("--threshold", bl.threshold);
    c_bl->add_option("--k", bl.k)->check(CLI::Range(1, 1000000));
    c_bl->add_option("--sections", bl.sections, "Sections per NBC corner")->check(CLI::Range(1, 1000000));
    c_bl->add_option("--report", bl.report);

    AttackArgs at;
    auto* c_at = app.add_subcommand("attack", "PGD adversarial inputs");
    c_at->add_option("--model", at.model)->required();
    c_at->add_option("--data", at.data)->required();
    c_at->add_option("--out", at.out)->required();
    c_at->add_option("--eps", at.eps)->check(CLI::NonNegativeNumber);
    c_at->add_option("--step", at.step, "Step size (default eps/8)");
    c_at->add_option("--iters", at.iters);
    c_at->add_option("--seed", at.seed);
    c_at->add_flag("--errors-only", at.errors_only, "Keep only misclassified outputs");

    ImpartialityArgs im;
    auto* c_im = app.add_subcommand("impartiality", "Output impartiality of suites");
    c_im->add_option("--model", im.model)->required();
    c_im->add_option("--suite", im.suites)->required();
    c_im->add_option("--dg", im.dg, "Also report coverage and its correlation with impartiality");
    c_im->add_option("--criterion", im.criterion)->check(CLI::IsMember({"snpc", "anpc"}));
    c_im->add_option("--buckets", im.buckets)->check(CLI::Range(1, 1000000));
    c_im->add_option("--ubound", im.ubound)->check(CLI::PositiveNumber);
    c_im->add_option("--report", im.report);
    c_im->add_option("--csv", im.csv);

    SimilarityArgs sm;
    auto* c_sm = app.add_subcommand("similarity", "Intra/inter class and cluster CDP similarity");
    c_sm->add_option("--model", sm.model)->required();
    c_sm->add_option("--dg", sm.dg)->required();
    c_sm->add_option("--data", sm.data, "Training data the graph was built from")->required();
    c_sm->add_option("--cap", sm.cap, "Samples per class")->check(CLI::Range(2, 100000000));
    c_sm->add_option("--seed", sm.seed);
    c_sm->add_option("--report", sm.report);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*c_tf) train_fixture(tf);
        else if (*c_bd) build_dg(bd);
        else if (*c_cv) cover(cv);
        else if (*c_mk) mask_eval_cmd(mk);
        else if (*c_tn) tune(tn);
        else if (*c_bl) baseline(bl);
        else if (*c_at) attack(at);
        else if (*c_im) impartiality(im);
        else if (*c_sm) similarity(sm);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "npc: %s\n", e.what());
        return 1;
    }
    return 0;
}
