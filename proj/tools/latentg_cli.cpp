// latentg: teacher-student text classification pipeline.
//
// Subcommands: prep | stats | tfidf | train-teacher | algorithm1 |
// train-student | evaluate | kfold | baseline | synth
// Exit codes: 0 success, 1 validation error, 2 runtime error.

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "latentg/baselines.hpp"
#include "latentg/config.hpp"
#include "latentg/corpus.hpp"
#include "latentg/distill.hpp"
#include "latentg/gmm.hpp"
#include "latentg/metrics.hpp"
#include "latentg/net.hpp"
#include "latentg/synth.hpp"
#include "latentg/trainer.hpp"
#include "latentg/vectorize.hpp"

namespace fs = std::filesystem;
using namespace latentg;

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_dir = "out";
    std::int64_t seed = -1;  // -1: keep config value
    std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "config file (section.key = value)");
    cmd->add_option("--out", args.out_dir, "output directory");
    cmd->add_option("--seed", args.seed, "override global.seed");
    cmd->add_option("--set", args.overrides,
                    "override a config key, e.g. --set loss.alpha=0.5");
}

RunConfig make_config(const CommonArgs& args) {
    RunConfig cfg = args.config_path.empty() ? RunConfig()
                                             : RunConfig::from_file(args.config_path);
    for (const auto& kv : args.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw ConfigError("--set expects key=value, got '" + kv + "'");
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (args.seed >= 0) cfg.set("global.seed", std::to_string(args.seed));
    return cfg;
}

std::string prepare_out(const CommonArgs& args, const RunConfig& cfg) {
    fs::create_directories(args.out_dir);
    cfg.write_effective(args.out_dir + "/effective_config.txt");
    return args.out_dir;
}

void require_artifact(const std::string& path, const std::string& producer) {
    if (!fs::exists(path))
        throw ValidationError("missing artifact " + path + "; run `" + producer +
                              "` first");
}

Corpus load_prepared(const std::string& out_dir, const std::string& override_path) {
    std::string path = override_path.empty() ? out_dir + "/corpus.csv" : override_path;
    require_artifact(path, "prep");
    return load_corpus_csv(path, LabelSet::default_mental_health());
}

nlohmann::json label_json(const LabelSet& labels) {
    return nlohmann::json(labels.names());
}

// ---------------------------------------------------------------------------

int cmd_synth(const CommonArgs& args, std::int64_t total_n) {
    RunConfig cfg = make_config(args);
    SynthOptions opts = cfg.synth();
    if (total_n > 0)
        opts.samples_per_class =
            std::max<int>(1, static_cast<int>(total_n) / opts.num_classes);
    const std::string out = prepare_out(args, cfg);
    Corpus corpus = synth_corpus(opts);
    CsvWriter w(out + "/synth.csv");
    w.row({"id", "statement", "status"});
    for (const auto& s : corpus.samples())
        w.row({std::to_string(s.id), s.raw_text, corpus.labels().name(s.label)});
    std::cout << "wrote " << corpus.size() << " samples to " << out << "/synth.csv\n";
    return 0;
}

int cmd_prep(const CommonArgs& args, const std::string& input) {
    RunConfig cfg = make_config(args);
    const std::string out = prepare_out(args, cfg);
    Corpus corpus = load_csv(input, cfg.csv_schema(), LabelSet::default_mental_health());
    corpus.clean_all();
    const std::string stoplist = cfg.get("corpus.stopwords");
    if (!stoplist.empty()) {
        auto stop = load_stoplist(stoplist);
        Corpus filtered(corpus.labels());
        for (Sample s : corpus.samples()) {
            s.clean_text = remove_stopwords(s.clean_text, stop);
            filtered.add(std::move(s));
        }
        corpus = std::move(filtered);
    }
    save_corpus_csv(corpus, out + "/corpus.csv");
    auto st = stats(corpus);
    save_stats_csv(st, corpus.labels(), out + "/class_counts.csv",
                   out + "/length_hist.csv");
    std::cout << "prepared " << corpus.size() << " samples -> " << out
              << "/corpus.csv\n";
    return 0;
}

int cmd_stats(const CommonArgs& args, const std::string& corpus_path) {
    RunConfig cfg = make_config(args);
    const std::string out = prepare_out(args, cfg);
    Corpus corpus = load_prepared(out, corpus_path);
    auto st = stats(corpus);
    save_stats_csv(st, corpus.labels(), out + "/class_counts.csv",
                   out + "/length_hist.csv");
    std::cout << "stats written for " << corpus.size() << " samples\n";
    return 0;
}

int cmd_tfidf(const CommonArgs& args, const std::string& corpus_path) {
    RunConfig cfg = make_config(args);
    const std::string out = prepare_out(args, cfg);
    Corpus corpus = load_prepared(out, corpus_path);
    auto [train, test] = stratified_split(corpus, cfg.split_spec());
    auto table = TfidfTable::fit(train);
    std::vector<TfidfVector> vectors;
    for (const auto& s : corpus.samples())
        vectors.push_back(table.transform(s.clean_text, s.id));
    save_tfidf_csv(vectors, out + "/tfidf.csv");
    std::cout << "tf-idf: " << table.num_terms() << " terms over " << corpus.size()
              << " documents\n";
    return 0;
}

int cmd_train_teacher(const CommonArgs& args, const std::string& corpus_path) {
    RunConfig cfg = make_config(args);
    const std::string out = prepare_out(args, cfg);
    Corpus corpus = load_prepared(out, corpus_path);
    auto [train, test] = stratified_split(corpus, cfg.split_spec());

    auto vocab = Vocabulary::build(train, static_cast<int>(cfg.get_int("vocab.min_freq")));
    vocab.save(out + "/vocab.txt");
    NetworkConfig net = cfg.network(vocab.size(), corpus.labels().size());

    LossConfig loss = cfg.loss();
    TrainOptions opts = cfg.teacher_options();
    Parameters<float> params;
    TrainRun run = train_teacher(train, vocab, net, loss, opts, &params);
    run.config_digest = cfg.digest_hex();
    save_training_log(run, out + "/teacher_training_log.csv");
    save_checkpoint(params, net, out + "/teacher.ckpt",
                    {{"config_digest", cfg.digest_hex()},
                     {"labels", label_json(corpus.labels())},
                     {"vocab_digest", hex64(vocab.digest())},
                     {"role", "teacher"}});
    std::cout << "teacher trained for " << opts.epochs << " epochs; final total loss "
              << run.log.back().total << '\n';
    return 0;
}

int cmd_algorithm1(const CommonArgs& args, const std::string& corpus_path) {
    RunConfig cfg = make_config(args);
    const std::string out = prepare_out(args, cfg);
    Corpus corpus = load_prepared(out, corpus_path);
    require_artifact(out + "/teacher.ckpt", "train-teacher");
    require_artifact(out + "/vocab.txt", "train-teacher");
    auto [train, test] = stratified_split(corpus, cfg.split_spec());
    auto vocab = Vocabulary::load(out + "/vocab.txt");
    nlohmann::json extra;
    auto [teacher, net] = load_checkpoint(out + "/teacher.ckpt", &extra);

    auto result = run_algorithm1(teacher, net, train, vocab, cfg.seed(),
                                 cfg.gmm_components(net.num_classes),
                                 extra.value("config_digest", ""));
    save_feature_store(result.store, out + "/teacher_features.bin");
    gmm_save(result.gmm, out + "/gmm.bin");
    gmm_report(result.gmm, out + "/gmm_report.json");
    std::cout << "algorithm1: " << result.store.size() << " teacher features, GMM with "
              << result.gmm.num_components << " components, LL "
              << result.gmm.final_log_likelihood << '\n';
    return 0;
}

int cmd_train_student(const CommonArgs& args, const std::string& corpus_path) {
    RunConfig cfg = make_config(args);
    const std::string out = prepare_out(args, cfg);
    Corpus corpus = load_prepared(out, corpus_path);
    require_artifact(out + "/teacher_features.bin", "algorithm1");
    require_artifact(out + "/gmm.bin", "algorithm1");
    require_artifact(out + "/vocab.txt", "train-teacher");
    auto [train, test] = stratified_split(corpus, cfg.split_spec());
    auto vocab = Vocabulary::load(out + "/vocab.txt");
    NetworkConfig net = cfg.network(vocab.size(), corpus.labels().size());

    auto store = load_feature_store(out + "/teacher_features.bin");
    auto gmm = gmm_load(out + "/gmm.bin");
    DistillContext ctx{&store, &gmm, cfg.distill()};

    LossConfig loss = cfg.loss();
    TrainOptions opts = cfg.student_options();
    if (opts.log_signals) {
        opts.signals_dir = out;
    }
    Parameters<float> params;
    TrainRun run = train_student(train, vocab, net, loss, opts, ctx, &params);
    run.config_digest = cfg.digest_hex();
    save_training_log(run, out + "/student_training_log.csv");
    save_checkpoint(params, net, out + "/student.ckpt",
                    {{"config_digest", cfg.digest_hex()},
                     {"labels", label_json(corpus.labels())},
                     {"vocab_digest", hex64(vocab.digest())},
                     {"role", "student"}});
    std::cout << "student trained for " << opts.epochs << " epochs; final total loss "
              << run.log.back().total << '\n';
    return 0;
}

int cmd_evaluate(const CommonArgs& args, const std::string& corpus_path,
                 std::string checkpoint, const std::string& split) {
    RunConfig cfg = make_config(args);
    const std::string out = prepare_out(args, cfg);
    Corpus corpus = load_prepared(out, corpus_path);
    if (checkpoint.empty()) checkpoint = out + "/student.ckpt";
    require_artifact(checkpoint, "train-student");
    require_artifact(out + "/vocab.txt", "train-teacher");
    nlohmann::json extra;
    auto [params, net] = load_checkpoint(checkpoint, &extra);
    if (extra.contains("labels") &&
        extra["labels"].get<std::vector<std::string>>() != corpus.labels().names())
        throw ValidationError("checkpoint label set differs from corpus label set");
    auto vocab = Vocabulary::load(out + "/vocab.txt");
    if (extra.contains("vocab_digest") &&
        extra["vocab_digest"].get<std::string>() != hex64(vocab.digest()))
        throw ValidationError("checkpoint was trained with a different vocabulary");

    Corpus target(corpus.labels());
    if (split == "all") {
        target = corpus;
    } else {
        auto [train, test] = stratified_split(corpus, cfg.split_spec());
        target = split == "train" ? std::move(train) : std::move(test);
    }
    auto report = evaluate(params, net, target, vocab);
    save_metrics_json(report, out + "/metrics.json",
                      {{"config_digest", cfg.digest_hex()},
                       {"checkpoint", fs::path(checkpoint).filename().string()},
                       {"split", split},
                       {"labels", label_json(corpus.labels())}});
    save_confusion_csv(report, out + "/confusion.csv");
    std::cout << "accuracy " << report.accuracy << ", weighted F1 "
              << report.weighted_f1 << " on " << target.size() << " samples\n";
    return 0;
}

int cmd_kfold(const CommonArgs& args, const std::string& corpus_path) {
    RunConfig cfg = make_config(args);
    const std::string out = prepare_out(args, cfg);
    Corpus corpus = load_prepared(out, corpus_path);

    KFoldConfig kf;
    kf.k = static_cast<int>(cfg.get_int("kfold.k"));
    kf.min_freq = static_cast<int>(cfg.get_int("vocab.min_freq"));
    kf.net = cfg.network(1, corpus.labels().size());  // vocab_size filled per fold
    kf.teacher_loss = cfg.loss();
    kf.teacher_loss.alpha = 0.0;
    kf.teacher_loss.beta = 0.0;
    kf.student_loss = cfg.loss();
    kf.teacher_opts = cfg.teacher_options();
    kf.student_opts = cfg.student_options();
    kf.distill = cfg.distill();

    auto summary = run_kfold(corpus, kf, cfg.seed());
    nlohmann::json j = kfold_summary_to_json(summary);
    j["config_digest"] = cfg.digest_hex();
    std::ofstream js(out + "/kfold_summary.json");
    if (!js) throw FormatError("cannot write kfold summary");
    js << j.dump(2) << '\n';
    std::cout << "k-fold accuracy " << summary.mean_accuracy << " +/- "
              << summary.std_accuracy << '\n';
    return 0;
}

int cmd_baseline(const CommonArgs& args, const std::string& corpus_path) {
    RunConfig cfg = make_config(args);
    const std::string out = prepare_out(args, cfg);
    Corpus corpus = load_prepared(out, corpus_path);
    auto [train, test] = stratified_split(corpus, cfg.split_spec());
    auto table = TfidfTable::fit(train);

    std::vector<SparseVector> train_x, test_x, train_counts, test_counts;
    std::vector<int> train_y, test_y;
    for (const auto& s : train.samples()) {
        train_x.push_back(table.transform(s.clean_text, s.id).entries);
        train_counts.push_back(table.counts(s.clean_text));
        train_y.push_back(s.label);
    }
    for (const auto& s : test.samples()) {
        test_x.push_back(table.transform(s.clean_text, s.id).entries);
        test_counts.push_back(table.counts(s.clean_text));
        test_y.push_back(s.label);
    }
    const int k = corpus.labels().size();
    const int v = table.num_terms();

    LogRegOptions lr_opts;
    lr_opts.lr = cfg.get_double("baseline.lr");
    lr_opts.l2 = cfg.get_double("baseline.l2");
    lr_opts.epochs = static_cast<int>(cfg.get_int("baseline.epochs"));
    lr_opts.seed = cfg.seed();
    if (cfg.get_bool("baseline.grid_search")) {
        auto grid = grid_search_logreg(train_x, train_y, k, v, {0.1, 0.5, 1.0},
                                       {1e-5, 1e-4, 1e-3}, cfg.seed());
        lr_opts.lr = grid.best.lr;
        lr_opts.l2 = grid.best.l2;
    }
    auto logreg = train_logreg(train_x, train_y, k, v, lr_opts);
    auto nb = train_nb(train_counts, train_y, k, v);

    auto eval_model = [&](auto& model, const std::vector<SparseVector>& xs) {
        std::vector<int> preds;
        for (const auto& x : xs) preds.push_back(predict_class(model, x));
        return compute_metrics(preds, test_y, k);
    };
    auto lr_report = eval_model(logreg, test_x);
    auto nb_report = eval_model(nb, test_counts);

    nlohmann::json j = {{"config_digest", cfg.digest_hex()},
                        {"logreg", metrics_to_json(lr_report)},
                        {"naive_bayes", metrics_to_json(nb_report)},
                        {"logreg_lr", lr_opts.lr},
                        {"logreg_l2", lr_opts.l2}};
    std::ofstream js(out + "/baseline_metrics.json");
    if (!js) throw FormatError("cannot write baseline metrics");
    js << j.dump(2) << '\n';
    std::cout << "logreg accuracy " << lr_report.accuracy << ", naive bayes accuracy "
              << nb_report.accuracy << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"latentg: teacher-student text classification pipeline"};
    app.require_subcommand(1);

    CommonArgs common;
    std::string input, corpus_path, checkpoint, split = "test";
    std::int64_t synth_n = 0;

    auto* synth = app.add_subcommand("synth", "generate the seeded synthetic corpus");
    add_common(synth, common);
    synth->add_option("--n", synth_n, "total sample count (overrides samples_per_class)");

    auto* prep = app.add_subcommand("prep", "clean a raw CSV into a prepared corpus");
    add_common(prep, common);
    prep->add_option("--input", input, "raw input CSV")->required();

    auto* stats_cmd = app.add_subcommand("stats", "class counts and length histogram");
    add_common(stats_cmd, common);
    stats_cmd->add_option("--corpus", corpus_path, "prepared corpus file");

    auto* tfidf = app.add_subcommand("tfidf", "export tf-idf vectors");
    add_common(tfidf, common);
    tfidf->add_option("--corpus", corpus_path, "prepared corpus file");

    auto* teacher = app.add_subcommand("train-teacher", "train the teacher network");
    add_common(teacher, common);
    teacher->add_option("--corpus", corpus_path, "prepared corpus file");

    auto* alg1 = app.add_subcommand("algorithm1",
                                    "extract teacher features and fit the GMM");
    add_common(alg1, common);
    alg1->add_option("--corpus", corpus_path, "prepared corpus file");

    auto* student = app.add_subcommand("train-student",
                                       "train the student with latentG modulation");
    add_common(student, common);
    student->add_option("--corpus", corpus_path, "prepared corpus file");

    auto* eval_cmd = app.add_subcommand("evaluate", "evaluate a checkpoint");
    add_common(eval_cmd, common);
    eval_cmd->add_option("--corpus", corpus_path, "prepared corpus file");
    eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint file (default student)");
    eval_cmd->add_option("--split", split, "test | train | all")
        ->check(CLI::IsMember({"test", "train", "all"}));

    auto* kfold_cmd = app.add_subcommand("kfold", "k-fold cross-validated pipeline");
    add_common(kfold_cmd, common);
    kfold_cmd->add_option("--corpus", corpus_path, "prepared corpus file");

    auto* baseline = app.add_subcommand("baseline",
                                        "tf-idf logistic regression and naive Bayes");
    add_common(baseline, common);
    baseline->add_option("--corpus", corpus_path, "prepared corpus file");

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) return cmd_synth(common, synth_n);
        if (prep->parsed()) return cmd_prep(common, input);
        if (stats_cmd->parsed()) return cmd_stats(common, corpus_path);
        if (tfidf->parsed()) return cmd_tfidf(common, corpus_path);
        if (teacher->parsed()) return cmd_train_teacher(common, corpus_path);
        if (alg1->parsed()) return cmd_algorithm1(common, corpus_path);
        if (student->parsed()) return cmd_train_student(common, corpus_path);
        if (eval_cmd->parsed()) return cmd_evaluate(common, corpus_path, checkpoint, split);
        if (kfold_cmd->parsed()) return cmd_kfold(common, corpus_path);
        if (baseline->parsed()) return cmd_baseline(common, corpus_path);
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const RuntimeFailure& e) {
        std::cerr << "failure: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "failure: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
