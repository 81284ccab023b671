// abandon: command-line front end for the abandonment classifier.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "abandon/abandon.hpp"

using nlohmann::json;
namespace ab = abandon;

namespace {

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::string sha256_hex(std::string_view bytes) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr);
    std::string out;
    char buf[3];
    for (unsigned int i = 0; i < len; ++i) {
        std::snprintf(buf, sizeof buf, "%02x", md[i]);
        out += buf;
    }
    return out;
}

std::string read_input(const std::string& path) {
    if (path.empty() || path == "-") {
        std::ostringstream ss;
        ss << std::cin.rdbuf();
        return ss.str();
    }
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ab::ValidationError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Records what a command consumed and produced; written beside each artifact.
struct Manifest {
    std::string command;
    json config = json::object();
    json seeds = json::object();
    json inputs = json::array();
    std::vector<std::string> artifacts;

    void input(const std::string& path, std::string_view bytes) {
        inputs.push_back({{"path", path.empty() ? "-" : path}, {"sha256", sha256_hex(bytes)}, {"bytes", bytes.size()}});
    }

    json to_json() const {
        return {{"command", command},  {"config", config},       {"seeds", seeds},
                {"inputs", inputs},    {"artifacts", artifacts}, {"tool_version", ab::kVersion}};
    }
};

void write_artifact(const std::string& path, std::string_view content, Manifest& m) {
    if (path.empty() || path == "-") {
        std::cout << content;
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ab::Error("cannot write '" + path + "'");
    out << content;
    m.artifacts.push_back(path);
}

/// One manifest per artifact, named <artifact>.manifest.json.
void write_manifests(const Manifest& m) {
    const auto j = m.to_json();
    for (const auto& a : m.artifacts) {
        auto mj = j;
        mj["artifact"] = a;
        std::ofstream out(a + ".manifest.json");
        out << mj.dump(2) << '\n';
    }
}

ab::ParsedDataset load_dataset(const std::string& path, Manifest& m, bool quiet = false) {
    const auto bytes = read_input(path);
    m.input(path, bytes);
    auto parsed = ab::parse_dataset(std::string_view(bytes));
    if (!quiet)
        for (const auto& e : parsed.errors) std::cerr << "line " << e.line << ": " << e.message << '\n';
    return parsed;
}

std::string summary(const ab::ParsedDataset& d) {
    return std::to_string(d.sequences.size()) + " sequences, " + std::to_string(d.count(ab::Label::bad)) + " bad / " +
           std::to_string(d.count(ab::Label::good)) + " good";
}

json forest_config_json(const ab::ForestConfig& c) {
    return {{"n_trees", c.n_trees}, {"max_depth", c.max_depth}, {"min_samples_leaf", c.min_samples_leaf},
            {"features_per_split", c.features_per_split}, {"bootstrap", c.bootstrap}};
}

json network_json(const ab::ModelConfig& n, const ab::TrainConfig& t) {
    return {{"num_layers", n.num_layers}, {"units", n.units},          {"dropout", n.dropout},
            {"batch_size", t.batch_size}, {"learning_rate", t.learning_rate}, {"max_epochs", t.max_epochs},
            {"patience", t.patience}};
}

json balance_json(const ab::BalanceStrategy& b) {
    return {{"strategy", ab::to_string(b.kind)}, {"k_neighbors", b.k_neighbors}, {"target_per_class", b.target_per_class}};
}

json experiment_json(const ab::ExperimentConfig& c) {
    json j = {{"id", ab::experiment_id(c)}, {"balance", balance_json(c.balance)}};
    if (c.model == ab::ModelKind::bilstm) {
        j["scheme"] = ab::scheme_to_json(c.scheme);
        j["network"] = network_json(c.network, c.training);
    } else if (c.model == ab::ModelKind::rf) {
        j["forest"] = forest_config_json(c.forest);
    }
    return j;
}

std::string features_csv(const std::vector<ab::MouseSequence>& seqs) {
    std::string out;
    for (auto name : ab::kFeatureNames) out += std::string(name) + ",";
    out += "session_id,label\n";
    char buf[64];
    for (const auto& s : seqs) {
        for (double v : ab::extract_features(s).as_array()) {
            std::snprintf(buf, sizeof buf, "%.17g,", v);
            out += buf;
        }
        out += s.session_id + "," + ab::to_string(s.label()) + "\n";
    }
    return out;
}

// Scale knobs shared by train / evaluate / grid.
struct ModelFlags {
    int units = 100;
    int layers = 2;
    int max_epochs = 100;
    int patience = 5;
    std::size_t target = 128;
    int k = 5;
    int trees = 100;

    void add(CLI::App* app) {
        app->add_option("--units", units, "LSTM units per direction")->check(CLI::PositiveNumber)->capture_default_str();
        app->add_option("--layers", layers, "stacked BiLSTM layers")->check(CLI::Range(1, 3))->capture_default_str();
        app->add_option("--max-epochs", max_epochs, "epoch cap")->check(CLI::PositiveNumber)->capture_default_str();
        app->add_option("--patience", patience, "early-stopping patience")->check(CLI::PositiveNumber)->capture_default_str();
        app->add_option("--target", target, "augmentation target per class")->check(CLI::PositiveNumber)->capture_default_str();
        app->add_option("--k", k, "SMOTE/ADASYN neighbours")->check(CLI::PositiveNumber)->capture_default_str();
        app->add_option("--trees", trees, "random forest size")->check(CLI::PositiveNumber)->capture_default_str();
    }

    ab::ExperimentConfig base() const {
        ab::ExperimentConfig c;
        c.network.units = units;
        c.network.num_layers = layers;
        c.training.max_epochs = max_epochs;
        c.training.patience = std::min(patience, std::max(1, max_epochs - 1));
        c.balance.target_per_class = target;
        c.balance.k_neighbors = k;
        c.forest.n_trees = trees;
        return c;
    }
};

// -- commands -------------------------------------------------------------------------

int cmd_ingest(const std::string& data, const std::string& out, Manifest& m) {
    const auto d = load_dataset(data, m);
    std::cout << summary(d) << '\n';
    if (!d.errors.empty()) std::cerr << d.errors.size() << " line(s) rejected\n";
    if (!out.empty()) {
        write_artifact(out, ab::serialize_dataset(d.sequences), m);
        m.config = {{"rejected_lines", d.errors.size()}};
        write_manifests(m);
    }
    return 0;
}

int cmd_featurize(const std::string& data, const std::string& out, Manifest& m) {
    const auto d = load_dataset(data, m);
    write_artifact(out, features_csv(d.sequences), m);
    m.config = {{"feature_order", ab::kFeatureNames}};
    write_manifests(m);
    return 0;
}

int cmd_augment(const std::string& data, const std::string& out, const std::string& strategy, std::uint64_t seed,
                std::size_t target, Manifest& m) {
    const auto d = load_dataset(data, m);
    const auto kind = ab::balance_kind_from_string(strategy);
    ab::Rng rng(seed);
    std::vector<ab::MouseSequence> items;
    if (ab::is_augmentation(kind))
        items = ab::augment_training_set(d.sequences, kind, target, rng).items;
    else if (kind == ab::BalanceKind::random_oversample)
        items = ab::random_resample(d.sequences, ab::ResampleKind::over, rng).items;
    else if (kind == ab::BalanceKind::random_undersample)
        items = ab::random_resample(d.sequences, ab::ResampleKind::under, rng).items;
    else if (kind == ab::BalanceKind::none || kind == ab::BalanceKind::class_weighted)
        items = d.sequences;
    else
        throw UsageError(strategy + " synthesises representation vectors, not sequences; use it through train/evaluate");
    write_artifact(out, ab::serialize_dataset(items), m);
    m.config = {{"strategy", strategy}, {"target_per_class", target}};
    m.seeds = {{"seed", seed}};
    write_manifests(m);
    std::size_t bad = 0;
    for (const auto& s : items) bad += s.label() == ab::Label::bad;
    std::cerr << items.size() << " sequences, " << bad << " bad / " << items.size() - bad << " good\n";
    return 0;
}

int cmd_generate(std::uint64_t seed, std::size_t n_good, std::size_t n_bad, const std::string& out, Manifest& m) {
    ab::GeneratorParams p;
    p.rng_seed = seed;
    p.n_good = n_good;
    p.n_bad = n_bad;
    write_artifact(out, ab::serialize_dataset(ab::generate_dataset(p)), m);
    m.config = {{"n_good", n_good}, {"n_bad", n_bad}};
    m.seeds = {{"seed", seed}};
    write_manifests(m);
    return 0;
}

int cmd_train(const std::string& data, const std::string& out, const std::string& model, const std::string& scheme,
              const std::string& strategy, std::uint64_t seed, const ModelFlags& flags, Manifest& m) {
    const auto d = load_dataset(data, m);
    ab::ExperimentConfig cfg = flags.base();
    cfg.balance.kind = ab::balance_kind_from_string(strategy);
    cfg.balance.rng_seed = ab::derive_seed(seed, {1});
    json ckpt = {{"format", "abandon.checkpoint"}, {"version", 1}};

    if (model == "rf") {
        auto bal = ab::balance_training_set<ab::LabeledFeatures>(d.sequences, cfg.balance, ab::labeled_features);
        cfg.forest.rng_seed = ab::derive_seed(seed, {2});
        const auto forest = ab::train_forest(bal.items, cfg.forest, bal.class_weights);
        ckpt["model"] = "rf";
        ckpt["forest"] = ab::forest_to_json(forest);
        cfg.model = ab::ModelKind::rf;
    } else {
        cfg.scheme = ab::scheme_from_name(scheme);
        // hold out one stratified fifth for early stopping
        std::vector<ab::Label> labels;
        for (const auto& s : d.sequences) labels.push_back(s.label());
        ab::Rng split_rng(ab::derive_seed(seed, {0}));
        const auto folds = ab::stratified_kfold(labels, 5, split_rng);
        std::vector<bool> is_val(d.sequences.size(), false);
        for (auto i : folds.front()) is_val[i] = true;
        std::vector<ab::MouseSequence> tr;
        std::vector<ab::RepresentedSequence> val;
        for (std::size_t i = 0; i < d.sequences.size(); ++i) {
            if (is_val[i])
                val.push_back(ab::to_representation(d.sequences[i], cfg.scheme));
            else
                tr.push_back(d.sequences[i]);
        }
        auto represent = [&](const ab::MouseSequence& s) { return ab::to_representation(s, cfg.scheme); };
        auto bal = ab::balance_training_set<ab::RepresentedSequence>(tr, cfg.balance, represent);
        cfg.network.input_dim = cfg.scheme.dim();
        cfg.network.max_len = cfg.scheme.max_len;
        cfg.network.rng_seed = ab::derive_seed(seed, {2});
        cfg.training.rng_seed = ab::derive_seed(seed, {3});
        auto result = ab::train(ab::init_model(cfg.network), bal.items, val, cfg.training, bal.class_weights);
        ckpt["model"] = "bilstm";
        ckpt["scheme"] = ab::scheme_to_json(cfg.scheme);
        ckpt["network"] = ab::model_to_json(result.model);
        json hist = json::array();
        for (const auto& e : result.history.epochs) hist.push_back({{"train_loss", e.train_loss}, {"val_f1", e.val_f1}});
        ckpt["history"] = {{"best_epoch", result.history.best_epoch}, {"epochs", hist}};
        std::cerr << "best epoch " << result.history.best_epoch << " of " << result.history.epochs.size()
                  << ", validation F " << result.history.epochs[static_cast<std::size_t>(result.history.best_epoch - 1)].val_f1
                  << '\n';
    }
    ckpt["balance"] = balance_json(cfg.balance);
    m.config = experiment_json(cfg);
    m.seeds = {{"seed", seed}};
    ckpt["manifest"] = out + ".manifest.json";
    write_artifact(out, ckpt.dump() + "\n", m);
    write_manifests(m);
    return 0;
}

int cmd_predict(const std::string& model_path, const std::string& data, const std::string& out, Manifest& m) {
    const auto bytes = read_input(model_path);
    m.input(model_path, bytes);
    json ckpt;
    try {
        ckpt = json::parse(bytes);
    } catch (const json::exception& e) {
        throw ab::ValidationError(std::string("malformed checkpoint: ") + e.what());
    }
    if (ckpt.value("format", "") != "abandon.checkpoint") throw ab::ValidationError("not an abandon checkpoint");
    const auto d = load_dataset(data, m);

    std::vector<double> scores;
    if (ckpt.at("model") == "rf") {
        const auto forest = ab::forest_from_json(ckpt.at("forest"));
        for (const auto& s : d.sequences) scores.push_back(ab::forest_predict(forest, ab::extract_features(s)));
    } else {
        const auto scheme = ab::scheme_from_json(ckpt.at("scheme"));
        const auto net = ab::model_from_json(ckpt.at("network"));
        std::vector<ab::RepresentedSequence> items;
        for (const auto& s : d.sequences) items.push_back(ab::to_representation(s, scheme));
        scores = ab::predict_batch(net, items);
    }
    std::string csv = "session_id,score,prediction,label\n";
    char buf[64];
    for (std::size_t i = 0; i < scores.size(); ++i) {
        std::snprintf(buf, sizeof buf, ",%.17g,", scores[i]);
        csv += d.sequences[i].session_id + buf + (scores[i] >= 0.5 ? "good" : "bad") + "," +
               ab::to_string(d.sequences[i].label()) + "\n";
    }
    write_artifact(out, csv, m);
    m.config = {{"model", ckpt.at("model")}, {"threshold", 0.5}};
    write_manifests(m);
    return 0;
}

void write_tables(const std::vector<ab::EvalReport>& reports, const std::string& out, Manifest& m) {
    const auto md = ab::render_markdown(reports);
    std::cout << md;
    if (out.empty()) return;
    json rj = json::array();
    for (const auto& r : reports) rj.push_back(ab::report_to_json(r));
    write_artifact(out + ".md", md, m);
    write_artifact(out + ".csv", ab::render_csv(reports), m);
    write_artifact(out + ".json", json{{"manifest", out + ".json.manifest.json"}, {"experiments", rj}}.dump(2) + "\n", m);
    write_manifests(m);
}

int cmd_evaluate(const std::string& data, const std::string& config, std::uint64_t seed, const ModelFlags& flags,
                 const std::string& out, Manifest& m) {
    const auto d = load_dataset(data, m);
    const auto base = flags.base();
    std::vector<ab::EvalReport> reports;
    if (config == "all") {
        reports = ab::run_grid(d.sequences, seed, {10, 5, 1}, base);
    } else {
        reports.push_back(ab::nested_cv(d.sequences, ab::parse_experiment(config, base), seed, {10, 5, 1}));
    }
    json cfgs = json::array();
    for (const auto& r : reports) cfgs.push_back(experiment_json(r.config));
    m.config = {{"experiments", cfgs}, {"outer_folds", 10}, {"inner_folds", 5}};
    m.seeds = {{"seed", seed}};
    write_tables(reports, out, m);
    return 0;
}

int cmd_grid(const std::string& data, std::uint64_t seed, int jobs, const ModelFlags& flags, const std::string& out,
             Manifest& m) {
    const auto d = load_dataset(data, m);
    const auto reports = ab::run_grid(d.sequences, seed, {10, 5, jobs}, flags.base());
    json cfgs = json::array();
    for (const auto& r : reports) cfgs.push_back(experiment_json(r.config));
    m.config = {{"experiments", cfgs}, {"outer_folds", 10}, {"inner_folds", 5}};
    m.seeds = {{"seed", seed}};
    write_tables(reports, out, m);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Good vs. bad query abandonment from mouse-cursor sequences"};
    app.set_version_flag("--version", ab::kVersion);
    app.require_subcommand(1);

    Manifest manifest;
    for (int i = 0; i < argc; ++i) manifest.command += (i ? " " : "") + std::string(argv[i]);

    std::string data, out, model = "bilstm", scheme = "std-time", strategy = "distortion_or_trimming", config,
                                  model_path;
    std::uint64_t seed = 0;
    std::size_t n_good = 77, n_bad = 30, target = 128;
    int jobs = 1;
    ModelFlags flags;

    auto* ingest = app.add_subcommand("ingest", "validate a dataset and print class counts");
    ingest->add_option("--data", data, "JSONL dataset (default: stdin)");
    ingest->add_option("--out", out, "write the accepted sequences here");

    auto* featurize = app.add_subcommand("featurize", "write the 10 session features as CSV");
    featurize->add_option("--data", data, "JSONL dataset")->required();
    featurize->add_option("--out", out, "CSV output (default: stdout)");

    auto* augment = app.add_subcommand("augment", "balance a dataset in sequence space");
    augment->add_option("--data", data, "JSONL dataset")->required();
    augment->add_option("--out", out, "JSONL output (default: stdout)");
    augment->add_option("--strategy", strategy, "balancing strategy")->capture_default_str();
    augment->add_option("--seed", seed, "random seed")->required();
    augment->add_option("--target", target, "augmentation target per class")->capture_default_str();

    auto* generate = app.add_subcommand("generate", "emit a synthetic dataset");
    generate->add_option("--seed", seed, "random seed")->required();
    generate->add_option("--out", out, "JSONL output (default: stdout)");
    generate->add_option("--n-good", n_good, "good abandonments")->capture_default_str();
    generate->add_option("--n-bad", n_bad, "bad abandonments")->capture_default_str();

    auto* train = app.add_subcommand("train", "train one model and write a checkpoint");
    train->add_option("--data", data, "JSONL dataset")->required();
    train->add_option("--out", out, "checkpoint path")->required();
    train->add_option("--model", model, "bilstm or rf")->check(CLI::IsMember({"bilstm", "rf"}))->capture_default_str();
    train->add_option("--scheme", scheme, "representation: raw, std, raw-time, std-time, speed, speed-km")
        ->capture_default_str();
    train->add_option("--strategy", strategy, "balancing strategy")->capture_default_str();
    train->add_option("--seed", seed, "random seed")->required();
    flags.add(train);

    auto* predict = app.add_subcommand("predict", "score a dataset with a checkpoint");
    predict->add_option("--model", model_path, "checkpoint from train")->required();
    predict->add_option("--data", data, "JSONL dataset")->required();
    predict->add_option("--out", out, "CSV output (default: stdout)");

    auto* evaluate = app.add_subcommand("evaluate", "nested 10x5 cross-validation of one cell or the whole grid");
    evaluate->add_option("--data", data, "JSONL dataset")->required();
    evaluate->add_option("--config", config, "cell id (e.g. std-time:smote, rf:adasyn, constant_bad) or all")
        ->required();
    evaluate->add_option("--seed", seed, "random seed")->required();
    evaluate->add_option("--out", out, "prefix for .md/.csv/.json reports");
    flags.add(evaluate);

    auto* grid = app.add_subcommand("grid", "run baselines and all 36 BiLSTM cells, ranked by F");
    grid->add_option("--data", data, "JSONL dataset")->required();
    grid->add_option("--seed", seed, "random seed")->required();
    grid->add_option("--jobs", jobs, "parallel workers")->check(CLI::PositiveNumber)->capture_default_str();
    grid->add_option("--out", out, "prefix for .md/.csv/.json reports");
    flags.add(grid);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*ingest) return cmd_ingest(data, out, manifest);
        if (*featurize) return cmd_featurize(data, out, manifest);
        if (*augment) return cmd_augment(data, out, strategy, seed, target, manifest);
        if (*generate) return cmd_generate(seed, n_good, n_bad, out, manifest);
        if (*train) return cmd_train(data, out, model, scheme, strategy, seed, flags, manifest);
        if (*predict) return cmd_predict(model_path, data, out, manifest);
        if (*evaluate) return cmd_evaluate(data, config, seed, flags, out, manifest);
        if (*grid) return cmd_grid(data, seed, jobs, flags, out, manifest);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const ab::ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}
