#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <set>
#include <sstream>

#include "attribution.hpp"
#include "cluster.hpp"
#include "cohort.hpp"
#include "error.hpp"
#include "io.hpp"
#include "svg.hpp"
#include "train.hpp"

namespace exbehrt {

namespace {

struct KeySpec {
    const char* name;
    const char* def;
    bool required = false;
};

using KeyTable = std::vector<KeySpec>;

const KeyTable& keys_for(const std::string& command) {
    static const std::map<std::string, KeyTable> tables = {
        {"generate",
         {{"seed", "", false},      // empty = keep the spec's seed
          {"threads", "1"},
          {"out", "."},
          {"patients", ""},         // empty = keep the spec's value
          {"min_visits", ""},
          {"short_rate", ""},
          {"spec", ""}}},
        {"pretrain",
         {{"seed", "7"},
          {"threads", "1"},
          {"out", "."},
          {"journeys", "", true},
          {"objective", "mlm"},
          {"d_model", "32"},
          {"n_layers", "2"},
          {"n_heads", "4"},
          {"m", "64"},
          {"lr", "3e-5"},
          {"epochs", "5"},
          {"batch", "32"},
          {"min_visits", "5"},
          {"split_seed", "1234"},
          {"warmup", "0"}}},
        {"adapt",
         {{"seed", "7"},
          {"threads", "1"},
          {"out", "."},
          {"journeys", "", true},
          {"checkpoint", "", true},
          {"prefix", "C"},
          {"lr", "3e-5"},
          {"epochs", "3"},
          {"batch", "32"},
          {"min_visits", "5"},
          {"split_seed", "1234"},
          {"warmup", "0"}}},
        {"finetune",
         {{"seed", "7"},
          {"threads", "1"},
          {"out", "."},
          {"journeys", "", true},
          {"labels", "", true},
          {"checkpoint", "", true},
          {"task", "death_6m"},
          {"lr", "3e-5"},
          {"gamma", "0"},
          {"alpha", "1"},
          {"warmup", "0"},
          {"epochs", "5"},
          {"batch", "32"},
          {"split_seed", "1234"}}},
        {"gridsearch",
         {{"seed", "7"},
          {"threads", "1"},
          {"out", "."},
          {"journeys", "", true},
          {"labels", "", true},
          {"checkpoint", "", true},
          {"task", "death_6m"},
          {"epochs", "2"},
          {"batch", "32"},
          {"split_seed", "1234"}}},
        {"attribute",
         {{"seed", "7"},
          {"threads", "1"},
          {"out", "."},
          {"journeys", "", true},
          {"checkpoint", "", true},
          {"patient", "", true},
          {"task", "none"},
          {"k", "200"},
          {"background", "200"},
          {"layer", "-1"}}},
        {"cluster",
         {{"seed", "7"},
          {"threads", "1"},
          {"out", "."},
          {"journeys", "", true},
          {"checkpoint", "", true},
          {"dim", "10"},
          {"min_cluster_size", "20"},
          {"min_samples", "10"},
          {"neighborhood", "100"},
          {"min_distance", "0"},
          {"subcluster", ""},
          {"sub_min_cluster_size", "10"},
          {"sub_min_samples", "5"}}},
        {"ablate",
         {{"seed", "7"},
          {"threads", "1"},
          {"out", "."},
          {"journeys", "", true},
          {"labels", "", true},
          {"task", "proc_event"},
          {"d_model", "32"},
          {"n_layers", "2"},
          {"n_heads", "4"},
          {"m", "64"},
          {"lr", "3e-5"},
          {"gamma", "0"},
          {"alpha", "1"},
          {"warmup", "0"},
          {"epochs", "3"},
          {"batch", "32"},
          {"split_seed", "1234"}}},
        {"eval",
         {{"seed", "7"},
          {"threads", "1"},
          {"out", "."},
          {"journeys", "", true},
          {"labels", "", true},
          {"checkpoint", "", true},
          {"task", "death_6m"},
          {"group_by", "cancer"},
          {"split", "test"},
          {"split_seed", "1234"},
          {"purity_repeats", "0"}}},
    };
    const auto it = tables.find(command);
    if (it == tables.end()) throw usage_error("unknown command: " + command);
    return it->second;
}

int parse_int(const std::map<std::string, std::string>& cfg, const std::string& key) {
    const std::string& v = cfg.at(key);
    try {
        size_t pos = 0;
        const int out = std::stoi(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw usage_error("key '" + key + "': not an integer: " + v);
    }
}

uint64_t parse_u64(const std::map<std::string, std::string>& cfg, const std::string& key) {
    const std::string& v = cfg.at(key);
    try {
        size_t pos = 0;
        const uint64_t out = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw usage_error("key '" + key + "': not a non-negative integer: " + v);
    }
}

double parse_double(const std::map<std::string, std::string>& cfg, const std::string& key) {
    const std::string& v = cfg.at(key);
    try {
        size_t pos = 0;
        const double out = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw usage_error("key '" + key + "': not a number: " + v);
    }
}

bool parse_bool(const std::map<std::string, std::string>& cfg, const std::string& key) {
    const std::string& v = cfg.at(key);
    if (v == "0" || v == "false") return false;
    if (v == "1" || v == "true") return true;
    throw usage_error("key '" + key + "': expected 0/1/true/false, got " + v);
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

void log_line(std::ostream& os, const std::string& command, const std::string& msg) {
    const std::time_t t = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    os << '[' << buf << "] " << command << ": " << msg << std::endl;
}

std::string join_path(const std::string& dir, const std::string& name) {
    return (std::filesystem::path(dir) / name).string();
}

std::string basename_of(const std::string& path) {
    return std::filesystem::path(path).filename().string();
}

std::vector<PatientJourney> load_normalized(const std::string& path) {
    const auto raw = read_journeys(path);
    std::vector<PatientJourney> out;
    out.reserve(raw.size());
    for (const auto& j : raw) out.push_back(normalize_journey(j));
    return out;
}

ModelConfig model_config_from(const std::map<std::string, std::string>& cfg) {
    ModelConfig mc;
    mc.d_model = parse_int(cfg, "d_model");
    mc.n_layers = parse_int(cfg, "n_layers");
    mc.n_heads = parse_int(cfg, "n_heads");
    mc.m = parse_int(cfg, "m");
    return mc;
}

TrainConfig train_config_from(const std::map<std::string, std::string>& cfg) {
    TrainConfig tc;
    if (cfg.count("lr")) tc.lr = parse_double(cfg, "lr");
    if (cfg.count("gamma")) tc.gamma = parse_double(cfg, "gamma");
    if (cfg.count("alpha")) tc.alpha = parse_double(cfg, "alpha");
    if (cfg.count("warmup")) tc.warmup = parse_bool(cfg, "warmup");
    tc.epochs = parse_int(cfg, "epochs");
    tc.batch_size = parse_int(cfg, "batch");
    tc.seed = parse_u64(cfg, "seed");
    tc.split_seed = parse_u64(cfg, "split_seed");
    if (cfg.count("min_visits")) tc.min_visits = parse_int(cfg, "min_visits");
    return tc;
}

std::string metrics_json(const MetricsRow& r) {
    std::ostringstream os;
    os << "{\"auroc\": " << (r.auroc ? fmt(*r.auroc) : "null") << ", \"aps\": " << fmt(r.aps)
       << ", \"precision_at_05\": " << fmt(r.precision_at_05) << ", \"balanced_accuracy\": "
       << fmt(r.balanced_accuracy) << ", \"n\": " << r.n << ", \"n_pos\": " << r.n_pos << '}';
    return os.str();
}

std::string predictions_csv(const std::vector<std::string>& ids, const std::vector<double>& scores,
                            const std::vector<int>& labels) {
    std::ostringstream os;
    os << "patient_id,score,label\n";
    for (size_t i = 0; i < ids.size(); ++i)
        os << ids[i] << ',' << fmt(scores[i]) << ',' << labels[i] << '\n';
    return os.str();
}

// The resolved config is written next to the artifacts so every run can be
// reproduced from its own outputs.
void write_resolved_config(const std::string& command,
                           const std::map<std::string, std::string>& cfg) {
    write_text_file(join_path(cfg.at("out"), command + ".config"), config_to_text(cfg));
}

std::string cancer_group(const PatientJourney& j) {
    for (const auto& v : j.visits)
        for (const auto& d : v.diagnoses)
            if (!d.empty() && d[0] == 'C') return d;
    return "none";
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

CommandResult cmd_generate(std::map<std::string, std::string>& cfg, std::ostream& log) {
    CohortSpec spec =
        cfg.at("spec").empty() ? default_cohort_spec() : read_cohort_spec(cfg.at("spec"));
    if (!cfg.at("patients").empty()) spec.patient_count = parse_int(cfg, "patients");
    if (!cfg.at("seed").empty()) spec.seed = parse_u64(cfg, "seed");
    if (!cfg.at("min_visits").empty()) spec.min_visits = parse_int(cfg, "min_visits");
    if (!cfg.at("short_rate").empty()) spec.short_journey_rate = parse_double(cfg, "short_rate");
    cfg["patients"] = std::to_string(spec.patient_count);
    cfg["seed"] = std::to_string(spec.seed);
    cfg["min_visits"] = std::to_string(spec.min_visits);
    cfg["short_rate"] = fmt(spec.short_journey_rate);

    log_line(log, "generate", "sampling " + cfg["patients"] + " patients");
    const Cohort cohort = generate_cohort(spec);

    const std::string& out = cfg.at("out");
    write_journeys(join_path(out, "journeys.jsonl"), cohort.journeys);
    write_labels(join_path(out, "labels.csv"), cohort.labels);
    write_archetypes(join_path(out, "archetypes.csv"), cohort.archetypes);
    write_text_file(join_path(out, "spec.json"), cohort_spec_to_json(spec));
    log_line(log, "generate", "wrote journeys.jsonl, labels.csv, archetypes.csv, spec.json");

    return {"generate: " + std::to_string(cohort.journeys.size()) + " patients, " +
            std::to_string(cohort.labels.size()) + " label rows -> " + out};
}

CommandResult cmd_pretrain(std::map<std::string, std::string>& cfg, std::ostream& log) {
    const std::string& objective_str = cfg.at("objective");
    Objective objective;
    if (objective_str == "mlm")
        objective = Objective::Mlm;
    else if (objective_str == "mlm_plos")
        objective = Objective::MlmPlos;
    else
        throw usage_error("key 'objective': expected mlm or mlm_plos, got " + objective_str);

    const auto journeys = load_normalized(cfg.at("journeys"));
    log_line(log, "pretrain", "loaded " + std::to_string(journeys.size()) + " journeys");

    PretrainResult result = pretrain(journeys, model_config_from(cfg), train_config_from(cfg), objective);
    log_line(log, "pretrain",
             "best epoch " + std::to_string(result.best_epoch) + ", val micro precision " +
                 fmt(result.best_metric));

    const std::string& out = cfg.at("out");
    save_checkpoint(join_path(out, "pretrain.ckpt"), result.checkpoint.params,
                    result.checkpoint.vocab, result.checkpoint.encoder);
    write_text_file(join_path(out, "pretrain_log.csv"), epochs_to_csv(result.log));

    return {"pretrain: best epoch " + std::to_string(result.best_epoch) +
            ", val micro precision " + fmt(result.best_metric) + " -> " + out};
}

CommandResult cmd_adapt(std::map<std::string, std::string>& cfg, std::ostream& log) {
    const Checkpoint start = load_checkpoint(cfg.at("checkpoint"));
    const auto journeys = load_normalized(cfg.at("journeys"));
    log_line(log, "adapt", "loaded " + std::to_string(journeys.size()) + " journeys");

    PretrainResult result = adapt_pretrain(start, journeys, cfg.at("prefix"), train_config_from(cfg));
    log_line(log, "adapt",
             "best epoch " + std::to_string(result.best_epoch) + ", val micro precision " +
                 fmt(result.best_metric));

    const std::string& out = cfg.at("out");
    save_checkpoint(join_path(out, "adapt.ckpt"), result.checkpoint.params, result.checkpoint.vocab,
                    result.checkpoint.encoder);
    write_text_file(join_path(out, "adapt_log.csv"), epochs_to_csv(result.log));

    return {"adapt: prefix " + cfg.at("prefix") + ", best epoch " + std::to_string(result.best_epoch) +
            ", val micro precision " + fmt(result.best_metric) + " -> " + out};
}

CommandResult cmd_finetune(std::map<std::string, std::string>& cfg, std::ostream& log) {
    const Checkpoint start = load_checkpoint(cfg.at("checkpoint"));
    const auto journeys = load_normalized(cfg.at("journeys"));
    const auto labels = labels_for_task(read_labels(cfg.at("labels")), cfg.at("task"));
    if (labels.empty()) throw data_error("no label rows for task: " + cfg.at("task"));
    log_line(log, "finetune",
             "loaded " + std::to_string(journeys.size()) + " journeys, " +
                 std::to_string(labels.size()) + " labels");

    const TaskWindow window = window_for_task(cfg.at("task"));
    FinetuneResult result = finetune(start, journeys, labels, window, train_config_from(cfg));
    log_line(log, "finetune",
             "best epoch " + std::to_string(result.best_epoch) + ", val APS " +
                 fmt(result.val_metrics.aps));

    const std::string& out = cfg.at("out");
    save_checkpoint(join_path(out, "finetune.ckpt"), result.checkpoint.params,
                    result.checkpoint.vocab, result.checkpoint.encoder);
    write_text_file(join_path(out, "finetune_log.csv"), epochs_to_csv(result.log));
    write_text_file(join_path(out, "finetune_predictions.csv"),
                    predictions_csv(result.test_ids, result.test_scores, result.test_labels));

    std::ostringstream ev;
    ev << "{\n  \"task\": \"" << cfg.at("task") << "\",\n";
    ev << "  \"best_epoch\": " << result.best_epoch << ",\n";
    ev << "  \"window_excluded\": " << result.window_excluded << ",\n";
    ev << "  \"label_missing\": " << result.label_missing << ",\n";
    ev << "  \"validation\": " << metrics_json(result.val_metrics) << ",\n";
    ev << "  \"test\": " << metrics_json(result.test_metrics) << "\n}\n";
    write_text_file(join_path(out, "finetune_eval.json"), ev.str());

    const std::string test_auroc =
        result.test_metrics.auroc ? fmt(*result.test_metrics.auroc) : "absent";
    return {"finetune: task " + cfg.at("task") + ", test AUROC " + test_auroc + ", test APS " +
            fmt(result.test_metrics.aps) + " -> " + out};
}

CommandResult cmd_gridsearch(std::map<std::string, std::string>& cfg, std::ostream& log) {
    const Checkpoint start = load_checkpoint(cfg.at("checkpoint"));
    const auto journeys = load_normalized(cfg.at("journeys"));
    const auto labels = labels_for_task(read_labels(cfg.at("labels")), cfg.at("task"));
    if (labels.empty()) throw data_error("no label rows for task: " + cfg.at("task"));
    log_line(log, "gridsearch", "24 configurations over lr x loss x warmup");

    TrainConfig base = train_config_from(cfg);
    const GridSearchResult result = grid_search(start, journeys, labels, window_for_task(cfg.at("task")), base);
    write_text_file(join_path(cfg.at("out"), "gridsearch.csv"), grid_to_csv(result.rows));

    return {"gridsearch: " + std::to_string(result.rows.size()) + " rows, best lr " +
            fmt(result.best.lr) + " loss " + result.best.loss_name() +
            (result.best.warmup ? " warmup" : " no-warmup") + ", val APS " +
            fmt(result.best_val_aps) + " -> " + cfg.at("out")};
}

CommandResult cmd_attribute(std::map<std::string, std::string>& cfg, std::ostream& log) {
    const Checkpoint ckpt = load_checkpoint(cfg.at("checkpoint"));
    auto journeys = load_normalized(cfg.at("journeys"));
    const std::string& patient = cfg.at("patient");
    const int k = parse_int(cfg, "k");
    const int n_background = parse_int(cfg, "background");
    const uint64_t seed = parse_u64(cfg, "seed");

    if (cfg.at("task") != "none") {
        const TaskWindow window = window_for_task(cfg.at("task"));
        std::vector<PatientJourney> windowed;
        for (const auto& j : journeys)
            if (auto w = apply_window(j, window)) windowed.push_back(std::move(*w));
        journeys = std::move(windowed);
    }

    const PatientJourney* target = nullptr;
    for (const auto& j : journeys)
        if (j.patient_id == patient) target = &j;
    if (!target) throw data_error("patient not found (or excluded by the task window): " + patient);

    std::vector<size_t> pool;
    for (size_t i = 0; i < journeys.size(); ++i)
        if (journeys[i].patient_id != patient) pool.push_back(i);
    if (pool.empty()) throw data_error("no background journeys besides the target patient");
    Rng rng(mix64(seed, 0xba5e11e5ULL));
    rng.shuffle(pool);
    if (static_cast<int>(pool.size()) > n_background) pool.resize(n_background);

    const SlotGrid grid = encode(*target, ckpt.vocab, ckpt.encoder);
    std::vector<SlotGrid> background;
    for (size_t i : pool) background.push_back(encode(journeys[i], ckpt.vocab, ckpt.encoder));
    log_line(log, "attribute",
             "patient " + patient + ", k=" + std::to_string(k) + ", background=" +
                 std::to_string(background.size()));

    ModelParams params = clone_params(ckpt.params);
    AttributionReport report = expected_gradients(params, grid, background, k, seed);
    report.patient_id = patient;
    report.checkpoint_id = basename_of(cfg.at("checkpoint"));

    int layer = parse_int(cfg, "layer");
    if (layer < 0) layer = params.config.n_layers - 1;
    const AttentionMap attn = attention_map(params, grid, layer);

    std::vector<std::string> row_labels;
    for (const auto& ref : report.row_refs) row_labels.push_back(channel_row_label(ref));
    std::vector<std::string> col_labels;
    for (int c = 0; c < grid.m; ++c)
        col_labels.push_back(ckpt.vocab.decode(GridChannel::Diagnosis, grid.diag[c]));

    const std::string& out = cfg.at("out");
    write_text_file(join_path(out, "attribution.json"), attribution_to_json(report));
    write_text_file(join_path(out, "attribution_slots.csv"), attribution_to_csv(report));
    write_text_file(join_path(out, "attribution_cells.svg"),
                    heatmap_svg(report.per_cell, row_labels, col_labels,
                                "expected gradients, patient " + patient));
    write_text_file(join_path(out, "attention_mean.svg"),
                    heatmap_svg(attn.mean, col_labels, col_labels,
                                "mean attention, layer " + std::to_string(layer)));

    return {"attribute: patient " + patient + ", f(x) " + fmt(report.f_x) + ", background mean " +
            fmt(report.f_background_mean) + " -> " + out};
}

CommandResult cmd_cluster(std::map<std::string, std::string>& cfg, std::ostream& log) {
    const Checkpoint ckpt = load_checkpoint(cfg.at("checkpoint"));
    const auto journeys = load_normalized(cfg.at("journeys"));
    const uint64_t seed = parse_u64(cfg, "seed");

    log_line(log, "cluster", "extracting embeddings for " + std::to_string(journeys.size()) + " journeys");
    const EmbeddingMatrix emb = extract_embeddings(ckpt, journeys);

    ReduceParams rp;
    rp.target_dim = std::min(parse_int(cfg, "dim"), emb.values.cols - 1);
    rp.neighborhood_size = parse_int(cfg, "neighborhood");
    rp.min_distance = parse_double(cfg, "min_distance");
    const ReduceResult reduced = reduce(emb.values, rp, seed);

    const std::vector<int> assignments = density_cluster(
        reduced.projected, parse_int(cfg, "min_cluster_size"), parse_int(cfg, "min_samples"));

    ReduceParams rp2 = rp;
    rp2.target_dim = 2;
    const ReduceResult planar = reduce(emb.values, rp2, seed);

    ClusterReport report = cluster_analytics(assignments, journeys);
    report.coords2d = planar.projected;
    log_line(log, "cluster",
             std::to_string(report.clusters.size()) + " clusters, " +
                 std::to_string(report.noise_count) + " noise patients");

    const std::string& out = cfg.at("out");
    write_text_file(join_path(out, "cluster.json"), cluster_report_to_json(report));
    write_text_file(join_path(out, "cluster_table.csv"), cluster_table_to_csv(report));
    write_text_file(join_path(out, "cluster_scatter.svg"),
                    scatter_svg(report.coords2d, assignments, "patient embeddings"));

    std::string sub_note;
    if (!cfg.at("subcluster").empty()) {
        const int cid = parse_int(cfg, "subcluster");
        const SubclusterResult sub =
            subcluster(emb, assignments, cid, journeys, rp, parse_int(cfg, "sub_min_cluster_size"),
                       parse_int(cfg, "sub_min_samples"), seed);
        write_text_file(join_path(out, "subcluster.json"), cluster_report_to_json(sub.report));
        write_text_file(join_path(out, "subcluster_table.csv"), cluster_table_to_csv(sub.report));
        sub_note = ", subcluster " + std::to_string(cid) + " -> " +
                   std::to_string(sub.report.clusters.size()) + " parts";
    }

    return {"cluster: " + std::to_string(report.clusters.size()) + " clusters, " +
            std::to_string(report.noise_count) + " noise" + sub_note + " -> " + out};
}

CommandResult cmd_ablate(std::map<std::string, std::string>& cfg, std::ostream& log) {
    const auto journeys = load_normalized(cfg.at("journeys"));
    const auto labels = labels_for_task(read_labels(cfg.at("labels")), cfg.at("task"));
    if (labels.empty()) throw data_error("no label rows for task: " + cfg.at("task"));
    log_line(log, "ablate", "5 channel configurations, task " + cfg.at("task"));

    const auto rows = ablation_run(journeys, labels, window_for_task(cfg.at("task")),
                                   model_config_from(cfg), train_config_from(cfg));
    write_text_file(join_path(cfg.at("out"), "ablation.csv"), ablation_to_csv(rows));

    std::string full = "absent", diag_only = "absent";
    for (const auto& r : rows) {
        if (r.name == "full" && r.test_auroc) full = fmt(*r.test_auroc);
        if (r.name == "diagnosis_only" && r.test_auroc) diag_only = fmt(*r.test_auroc);
    }
    return {"ablate: task " + cfg.at("task") + ", full AUROC " + full + ", diagnosis-only AUROC " +
            diag_only + " -> " + cfg.at("out")};
}

CommandResult cmd_eval(std::map<std::string, std::string>& cfg, std::ostream& log) {
    const Checkpoint ckpt = load_checkpoint(cfg.at("checkpoint"));
    const auto journeys = load_normalized(cfg.at("journeys"));
    const auto labels = labels_for_task(read_labels(cfg.at("labels")), cfg.at("task"));
    if (labels.empty()) throw data_error("no label rows for task: " + cfg.at("task"));

    const std::string& split = cfg.at("split");
    if (split != "test" && split != "all")
        throw usage_error("key 'split': expected test or all, got " + split);
    const std::string& group_by = cfg.at("group_by");
    if (group_by != "cancer" && group_by != "gender" && group_by != "none")
        throw usage_error("key 'group_by': expected cancer, gender or none, got " + group_by);

    const TaskWindow window = window_for_task(cfg.at("task"));
    const uint64_t split_seed = parse_u64(cfg, "split_seed");
    SplitRatios ratios;

    ModelParams params = clone_params(ckpt.params);
    std::vector<std::string> ids;
    std::vector<double> scores;
    std::vector<int> truth;
    std::vector<std::string> groups;
    std::vector<PatientJourney> windowed;
    int window_excluded = 0, label_missing = 0;
    for (const auto& j : journeys) {
        if (split == "test" && assign_split(j.patient_id, ratios, split_seed) != SplitLabel::Test)
            continue;
        const auto it = labels.find(j.patient_id);
        if (it == labels.end()) {
            ++label_missing;
            continue;
        }
        auto w = apply_window(j, window);
        if (!w) {
            ++window_excluded;
            continue;
        }
        const SlotGrid grid = encode(*w, ckpt.vocab, ckpt.encoder);
        Graph g;
        const EncodeResult er = encode_grid(g, params, grid);
        ids.push_back(j.patient_id);
        scores.push_back(sigmoid(g.value(cls_logit_node(g, params, er.hidden)).a[0]));
        truth.push_back(it->second);
        if (group_by == "cancer")
            groups.push_back(cancer_group(j));
        else if (group_by == "gender")
            groups.push_back(to_string(j.gender));
        else
            groups.push_back("all");
        windowed.push_back(std::move(*w));
    }
    if (ids.empty()) throw data_error("no patients to evaluate after split/label/window filters");
    log_line(log, "eval", "scoring " + std::to_string(ids.size()) + " patients");

    const MetricsRow overall = binary_metrics(scores, truth);
    std::ostringstream ev;
    ev << "{\n  \"task\": \"" << cfg.at("task") << "\",\n";
    ev << "  \"split\": \"" << split << "\",\n";
    ev << "  \"window_excluded\": " << window_excluded << ",\n";
    ev << "  \"label_missing\": " << label_missing << ",\n";
    ev << "  \"overall\": " << metrics_json(overall);

    if (group_by != "none") {
        ev << ",\n  \"groups\": [";
        bool first = true;
        for (const auto& [gid, row] : group_metrics(scores, truth, groups)) {
            if (!first) ev << ", ";
            first = false;
            ev << "{\"group\": \"" << gid << "\", \"metrics\": " << metrics_json(row) << '}';
        }
        ev << ']';
    }

    const int purity_repeats = parse_int(cfg, "purity_repeats");
    std::string purity_note;
    if (purity_repeats > 0) {
        const PurityResult purity =
            shuffle_purity(ckpt, windowed, purity_repeats, parse_u64(cfg, "seed"));
        std::ostringstream pc;
        pc << "patient_id,purity\n";
        for (size_t i = 0; i < purity.patient_ids.size(); ++i)
            pc << purity.patient_ids[i] << ',' << fmt(purity.per_patient[i]) << '\n';
        write_text_file(join_path(cfg.at("out"), "purity.csv"), pc.str());
        ev << ",\n  \"shuffle_purity\": " << fmt(purity.aggregate);
        purity_note = ", purity " + fmt(purity.aggregate);
    }
    ev << "\n}\n";

    const std::string& out = cfg.at("out");
    write_text_file(join_path(out, "eval.json"), ev.str());
    write_text_file(join_path(out, "eval_predictions.csv"), predictions_csv(ids, scores, truth));

    const std::string auroc = overall.auroc ? fmt(*overall.auroc) : "absent";
    return {"eval: task " + cfg.at("task") + ", n " + std::to_string(overall.n) + ", AUROC " + auroc +
            ", APS " + fmt(overall.aps) + purity_note + " -> " + out};
}

} // namespace

const std::vector<std::string>& command_names() {
    static const std::vector<std::string> names = {"generate", "pretrain",  "adapt",
                                                   "finetune", "gridsearch", "attribute",
                                                   "cluster",  "ablate",     "eval"};
    return names;
}

std::map<std::string, std::string> command_defaults(const std::string& command) {
    std::map<std::string, std::string> out;
    for (const auto& k : keys_for(command)) out.emplace(k.name, k.def);
    return out;
}

const std::vector<std::string>& command_required_keys(const std::string& command) {
    static std::map<std::string, std::vector<std::string>> cache;
    auto it = cache.find(command);
    if (it == cache.end()) {
        std::vector<std::string> req;
        for (const auto& k : keys_for(command))
            if (k.required) req.push_back(k.name);
        it = cache.emplace(command, std::move(req)).first;
    }
    return it->second;
}

CommandResult run_command(const std::string& command,
                          const std::map<std::string, std::string>& config, std::ostream& log) {
    const KeyTable& table = keys_for(command);
    std::map<std::string, std::string> cfg = command_defaults(command);
    for (const auto& [k, v] : config) {
        const auto it = cfg.find(k);
        if (it == cfg.end()) throw usage_error("unknown key '" + k + "' for command " + command);
        it->second = v;
    }
    for (const auto& k : table)
        if (k.required && cfg.at(k.name).empty())
            throw usage_error("missing required key '" + std::string(k.name) + "' for command " + command);
    if (parse_int(cfg, "threads") < 1) throw usage_error("key 'threads': must be at least 1");

    std::error_code ec;
    std::filesystem::create_directories(cfg.at("out"), ec);
    if (ec) throw data_error("cannot create output directory: " + cfg.at("out"));

    CommandResult result;
    if (command == "generate") result = cmd_generate(cfg, log);
    else if (command == "pretrain") result = cmd_pretrain(cfg, log);
    else if (command == "adapt") result = cmd_adapt(cfg, log);
    else if (command == "finetune") result = cmd_finetune(cfg, log);
    else if (command == "gridsearch") result = cmd_gridsearch(cfg, log);
    else if (command == "attribute") result = cmd_attribute(cfg, log);
    else if (command == "cluster") result = cmd_cluster(cfg, log);
    else if (command == "ablate") result = cmd_ablate(cfg, log);
    else result = cmd_eval(cfg, log);

    write_resolved_config(command, cfg);
    log_line(log, command, "done");
    return result;
}

} // namespace exbehrt
