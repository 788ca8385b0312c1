#include "train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "error.hpp"

namespace exbehrt {

void TrainConfig::validate() const {
    if (lr <= 0.0) throw usage_error("learning rate must be positive");
    if (gamma < 0.0) throw usage_error("focal gamma must be non-negative");
    if (!(alpha > 0.0 && alpha <= 1.0)) throw usage_error("focal alpha must lie in (0,1]");
    if (epochs < 1) throw usage_error("epochs must be at least 1");
    if (batch_size < 1) throw usage_error("batch size must be at least 1");
    if (min_visits < 1) throw usage_error("min_visits must be at least 1");
}

std::string TrainConfig::loss_name() const {
    if (gamma == 0.0 && alpha == 1.0) return "ce";
    char buf[64];
    std::snprintf(buf, sizeof buf, "focal(g=%g,a=%g)", gamma, alpha);
    return buf;
}

OptimConfig TrainConfig::optimizer(int total_steps) const {
    OptimConfig oc;
    oc.lr = lr;
    oc.warmup = warmup;
    oc.weight_decay = warmup ? 0.01 : 0.0;
    oc.warmup_proportion = 0.1;
    oc.total_steps = total_steps;
    return oc;
}

namespace {

std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

std::string fmt_opt(const std::optional<double>& v) { return v ? fmt_double(*v) : std::string(); }

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Adds a masked sample's top-1 predictions to the tally. The probability is
// the softmax mass of the predicted class at that position.
void tally_mlm(const Mat& logits, const MaskingPlan& plan, MlmTally& tally) {
    for (int r = 0; r < logits.rows; ++r) {
        const int target = plan.targets[r];
        if (target < 0) continue;
        const double* row = logits.row(r);
        int arg = 0;
        for (int c = 1; c < logits.cols; ++c)
            if (row[c] > row[arg]) arg = c;
        double total = 0.0;
        for (int c = 0; c < logits.cols; ++c) total += std::exp(row[c] - row[arg]);
        tally.add(target, arg, 1.0 / total);
    }
}

struct PretrainBundle {
    std::vector<SlotGrid> grids;
    std::vector<int> plos_labels;
    std::vector<size_t> train, val;
};

int plos_label(const PatientJourney& j) {
    for (const auto& v : j.visits)
        if (v.stay_days > 7) return 1;
    return 0;
}

PretrainResult pretrain_core(const std::vector<PatientJourney>& cohort, ModelParams params,
                             Vocabulary vocab, EncoderConfig enc, const TrainConfig& config,
                             Objective objective, const std::string* mask_prefix) {
    config.validate();

    PretrainBundle b;
    b.grids.reserve(cohort.size());
    for (size_t i = 0; i < cohort.size(); ++i) {
        b.grids.push_back(encode(cohort[i], vocab, enc));
        b.plos_labels.push_back(plos_label(cohort[i]));
        switch (assign_split(cohort[i].patient_id, config.ratios, config.split_seed)) {
            case SplitLabel::Train: b.train.push_back(i); break;
            case SplitLabel::Validation: b.val.push_back(i); break;
            case SplitLabel::Test: break; // reserved for downstream tasks
        }
    }
    if (b.train.empty()) throw data_error("empty cohort: no training patients after split");

    const int steps_per_epoch =
        static_cast<int>((b.train.size() + config.batch_size - 1) / config.batch_size);
    BertAdam optim(params, config.optimizer(config.epochs * steps_per_epoch));

    auto plan_for = [&](size_t idx, uint64_t seed) {
        return mask_prefix ? make_masking_plan(b.grids[idx], vocab, seed, *mask_prefix)
                           : make_masking_plan(b.grids[idx], vocab, seed);
    };

    PretrainResult result;
    ModelParams best;
    const bool with_plos = objective == Objective::MlmPlos;

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        std::vector<size_t> order = b.train;
        Rng shuffler(mix64(config.seed ^ 0x65706f6368ULL, static_cast<uint64_t>(epoch)));
        shuffler.shuffle(order);

        double mlm_sum = 0.0, plos_sum = 0.0;
        int mlm_n = 0;
        for (size_t start = 0; start < order.size(); start += config.batch_size) {
            const size_t stop = std::min(order.size(), start + config.batch_size);
            // Plans first: samples with nothing selected contribute no loss
            // and are skipped, and the rest split the batch weight evenly.
            std::vector<std::pair<size_t, MaskingPlan>> batch;
            for (size_t k = start; k < stop; ++k) {
                const size_t idx = order[k];
                auto plan = plan_for(idx, mix64(mix64(config.seed, static_cast<uint64_t>(epoch)),
                                                static_cast<uint64_t>(idx)));
                if (!plan.empty()) batch.emplace_back(idx, std::move(plan));
            }
            if (batch.empty()) continue;
            const double inv = 1.0 / static_cast<double>(batch.size());
            for (auto& [idx, plan] : batch) {
                Graph g;
                const SlotGrid masked = apply_masking(b.grids[idx], plan);
                const EncodeResult encd = encode_grid(g, params, masked);
                const int logits = mlm_logits_node(g, params, encd.hidden);
                int loss = g.masked_ce(logits, plan.targets);
                mlm_sum += g.value(loss).a[0];
                ++mlm_n;
                if (with_plos) {
                    const int pl = g.binary_focal(plos_logit_node(g, params, encd.hidden),
                                                  b.plos_labels[idx], 0.0, 1.0);
                    plos_sum += g.value(pl).a[0];
                    loss = g.add(loss, pl);
                }
                g.backward(g.scale(loss, inv));
            }
            optim.step();
        }

        EpochRow train_row;
        train_row.epoch = epoch;
        train_row.split = "train";
        train_row.mlm_loss = mlm_n ? mlm_sum / mlm_n : 0.0;
        if (with_plos) train_row.plos_loss = mlm_n ? plos_sum / mlm_n : 0.0;
        result.log.push_back(train_row);

        // Validation under per-patient fixed masking so epochs are comparable.
        MlmTally tally;
        double val_mlm = 0.0, val_plos = 0.0;
        int val_n = 0;
        std::vector<double> plos_scores;
        std::vector<int> plos_truth;
        for (size_t idx : b.val) {
            const auto plan = plan_for(idx, mix64(config.split_seed ^ 0x6576616cULL,
                                                  static_cast<uint64_t>(idx)));
            if (plan.empty()) continue;
            Graph g;
            const SlotGrid masked = apply_masking(b.grids[idx], plan);
            const EncodeResult encd = encode_grid(g, params, masked);
            const int logits = mlm_logits_node(g, params, encd.hidden);
            val_mlm += g.value(g.masked_ce(logits, plan.targets)).a[0];
            ++val_n;
            tally_mlm(g.value(logits), plan, tally);
            if (with_plos) {
                const int zl = plos_logit_node(g, params, encd.hidden);
                const double score = sigmoid(g.value(zl).a[0]);
                val_plos += g.value(g.binary_focal(zl, b.plos_labels[idx], 0.0, 1.0)).a[0];
                plos_scores.push_back(score);
                plos_truth.push_back(b.plos_labels[idx]);
            }
        }

        EpochRow val_row;
        val_row.epoch = epoch;
        val_row.split = "validation";
        val_row.mlm_loss = val_n ? val_mlm / val_n : 0.0;
        val_row.micro_precision = tally.micro_precision();
        val_row.thresholded_precision = tally.thresholded_precision();
        if (with_plos) {
            val_row.plos_loss = val_n ? val_plos / val_n : 0.0;
            const MetricsRow mr = binary_metrics(plos_scores, plos_truth);
            val_row.auroc = mr.auroc;
            val_row.aps = mr.aps;
        }
        result.log.push_back(val_row);

        if (result.best_epoch < 0 || val_row.micro_precision > result.best_metric) {
            result.best_epoch = epoch;
            result.best_metric = val_row.micro_precision;
            best = clone_params(params);
        }
    }

    result.checkpoint = Checkpoint{std::move(best), std::move(vocab), enc};
    return result;
}

} // namespace

PretrainResult pretrain(const std::vector<PatientJourney>& normalized, ModelConfig base_config,
                        const TrainConfig& config, Objective objective) {
    config.validate();
    const auto cohort = filter_pretrain_cohort(normalized, config.min_visits);
    if (cohort.empty()) throw data_error("empty cohort: no journeys pass the visit filter");

    std::vector<PatientJourney> train_only;
    for (const auto& j : cohort)
        if (assign_split(j.patient_id, config.ratios, config.split_seed) == SplitLabel::Train)
            train_only.push_back(j);
    if (train_only.empty()) throw data_error("empty cohort: no training patients after split");
    const Vocabulary vocab = build_vocabulary(train_only);

    EncoderConfig enc;
    enc.m = base_config.m;
    fit_encoder(enc, cohort);

    base_config.n_proc = enc.n_proc;
    base_config.n_lab = enc.n_lab;
    for (int ch = 0; ch < kNumChannels; ++ch)
        base_config.vocab_sizes[ch] = vocab.size(static_cast<GridChannel>(ch));

    ModelParams params = init_model(base_config, config.seed);
    return pretrain_core(cohort, std::move(params), vocab, enc, config, objective, nullptr);
}

PretrainResult adapt_pretrain(const Checkpoint& start, const std::vector<PatientJourney>& normalized,
                              const std::string& code_prefix, const TrainConfig& config) {
    config.validate();
    if (code_prefix.empty()) throw usage_error("adapt needs a non-empty code prefix");
    const auto cohort = filter_pretrain_cohort(normalized, config.min_visits);
    if (cohort.empty()) throw data_error("empty cohort: no journeys pass the visit filter");

    bool any = false;
    for (const auto& j : cohort)
        for (const auto& v : j.visits)
            for (const auto& d : v.diagnoses)
                if (d.rfind(code_prefix, 0) == 0) any = true;
    if (!any) throw data_error("no maskable codes: no diagnosis matches prefix " + code_prefix);

    return pretrain_core(cohort, clone_params(start.params), start.vocab, start.encoder, config,
                         Objective::Mlm, &code_prefix);
}

std::optional<PatientJourney> apply_window(const PatientJourney& journey, const TaskWindow& window) {
    if (window.kind == WindowKind::None) return journey;

    if (window.kind == WindowKind::ToFirstCodeInclusive) {
        for (size_t i = 0; i < journey.visits.size(); ++i) {
            for (const auto& d : journey.visits[i].diagnoses) {
                if (d.rfind(window.code, 0) != 0) continue;
                PatientJourney out = journey;
                out.visits.assign(journey.visits.begin(), journey.visits.begin() + i + 1);
                return out;
            }
        }
        return std::nullopt;
    }

    // OneYearBefore: visits within [index-365, index], index = first visit
    // carrying the exact code.
    for (const auto& v : journey.visits) {
        for (const auto& d : v.diagnoses) {
            if (d != window.code) continue;
            PatientJourney out = journey;
            out.visits.clear();
            for (const auto& w : journey.visits)
                if (w.date >= v.date - 365 && w.date <= v.date) out.visits.push_back(w);
            return out;
        }
    }
    return std::nullopt;
}

TaskWindow window_for_task(const std::string& task) {
    if (task == kTaskDeath6m || task == kTaskDeath12m) return {WindowKind::ToFirstCodeInclusive, "C"};
    if (task == kTaskHfReadmit) return {WindowKind::OneYearBefore, "I50"};
    return {WindowKind::None, ""};
}

namespace {

struct LabeledGrid {
    std::string pid;
    SlotGrid grid;
    int label = 0;
};

double cls_score(ModelParams& params, const SlotGrid& grid) {
    Graph g;
    const EncodeResult encd = encode_grid(g, params, grid);
    return sigmoid(g.value(cls_logit_node(g, params, encd.hidden)).a[0]);
}

MetricsRow eval_split(ModelParams& params, const std::vector<LabeledGrid>& samples,
                      const std::vector<size_t>& idx, std::vector<std::string>* ids,
                      std::vector<double>* scores_out, std::vector<int>* labels_out) {
    std::vector<double> scores;
    std::vector<int> labels;
    for (size_t i : idx) {
        scores.push_back(cls_score(params, samples[i].grid));
        labels.push_back(samples[i].label);
        if (ids) ids->push_back(samples[i].pid);
    }
    const MetricsRow row = binary_metrics(scores, labels);
    if (scores_out) *scores_out = std::move(scores);
    if (labels_out) *labels_out = std::move(labels);
    return row;
}

} // namespace

FinetuneResult finetune(const Checkpoint& start, const std::vector<PatientJourney>& normalized,
                        const std::map<std::string, int>& labels, const TaskWindow& window,
                        const TrainConfig& config) {
    config.validate();

    FinetuneResult result;
    std::vector<LabeledGrid> samples;
    std::vector<size_t> train, val, test;
    for (const auto& j : normalized) {
        const auto it = labels.find(j.patient_id);
        if (it == labels.end()) {
            ++result.label_missing;
            continue;
        }
        const auto windowed = apply_window(j, window);
        if (!windowed) {
            ++result.window_excluded;
            continue;
        }
        LabeledGrid lg;
        lg.pid = j.patient_id;
        lg.grid = encode(*windowed, start.vocab, start.encoder);
        lg.label = it->second;
        const size_t idx = samples.size();
        samples.push_back(std::move(lg));
        switch (assign_split(j.patient_id, config.ratios, config.split_seed)) {
            case SplitLabel::Train: train.push_back(idx); break;
            case SplitLabel::Validation: val.push_back(idx); break;
            case SplitLabel::Test: test.push_back(idx); break;
        }
    }
    if (train.empty()) throw data_error("empty cohort: no labeled training patients");

    ModelParams params = clone_params(start.params);
    const int steps_per_epoch =
        static_cast<int>((train.size() + config.batch_size - 1) / config.batch_size);
    BertAdam optim(params, config.optimizer(config.epochs * steps_per_epoch));

    ModelParams best;
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        std::vector<size_t> order = train;
        Rng shuffler(mix64(config.seed ^ 0x66696e65ULL, static_cast<uint64_t>(epoch)));
        shuffler.shuffle(order);

        double loss_sum = 0.0;
        int loss_n = 0;
        for (size_t s = 0; s < order.size(); s += config.batch_size) {
            const size_t stop = std::min(order.size(), s + config.batch_size);
            const double inv = 1.0 / static_cast<double>(stop - s);
            for (size_t k = s; k < stop; ++k) {
                const LabeledGrid& lg = samples[order[k]];
                Graph g;
                const EncodeResult encd = encode_grid(g, params, lg.grid);
                const int loss = g.binary_focal(cls_logit_node(g, params, encd.hidden), lg.label,
                                                config.gamma, config.alpha);
                loss_sum += g.value(loss).a[0];
                ++loss_n;
                g.backward(g.scale(loss, inv));
            }
            optim.step();
        }

        EpochRow train_row;
        train_row.epoch = epoch;
        train_row.split = "train";
        train_row.cls_loss = loss_n ? loss_sum / loss_n : 0.0;
        result.log.push_back(train_row);

        const MetricsRow val_row = eval_split(params, samples, val, nullptr, nullptr, nullptr);
        EpochRow vr;
        vr.epoch = epoch;
        vr.split = "validation";
        vr.auroc = val_row.auroc;
        vr.aps = val_row.aps;
        result.log.push_back(vr);

        if (result.best_epoch < 0 || val_row.aps > result.val_metrics.aps) {
            result.best_epoch = epoch;
            result.val_metrics = val_row;
            best = clone_params(params);
        }
    }

    result.test_metrics =
        eval_split(best, samples, test, &result.test_ids, &result.test_scores, &result.test_labels);
    result.checkpoint = Checkpoint{std::move(best), start.vocab, start.encoder};
    return result;
}

GridSearchResult grid_search(const Checkpoint& start, const std::vector<PatientJourney>& normalized,
                             const std::map<std::string, int>& labels, const TaskWindow& window,
                             const TrainConfig& base) {
    // Strip the test split from both journeys and labels before anything
    // trains: the search cannot read what it does not receive.
    std::vector<PatientJourney> searchable;
    std::map<std::string, int> search_labels;
    for (const auto& j : normalized) {
        if (assign_split(j.patient_id, base.ratios, base.split_seed) == SplitLabel::Test) continue;
        searchable.push_back(j);
        const auto it = labels.find(j.patient_id);
        if (it != labels.end()) search_labels.emplace(it->first, it->second);
    }

    static constexpr double kLrs[] = {3e-5, 4e-5, 5e-5};
    static constexpr std::pair<double, double> kLosses[] = {{0.0, 1.0}, {2.0, 1.0}, {5.0, 1.0}, {2.0, 0.75}};
    static constexpr bool kWarmups[] = {false, true};

    GridSearchResult result;
    result.best = base;
    bool have_best = false;
    for (const double lr : kLrs) {
        for (const auto& [gamma, alpha] : kLosses) {
            for (const bool warm : kWarmups) {
                TrainConfig cfg = base;
                cfg.lr = lr;
                cfg.gamma = gamma;
                cfg.alpha = alpha;
                cfg.warmup = warm;
                const FinetuneResult ft = finetune(start, searchable, search_labels, window, cfg);
                GridRow row;
                row.lr = lr;
                row.gamma = gamma;
                row.alpha = alpha;
                row.loss_name = cfg.loss_name();
                row.warmup = warm;
                row.val_aps = ft.val_metrics.aps;
                row.val_auroc = ft.val_metrics.auroc;
                result.rows.push_back(row);
                if (!have_best || row.val_aps > result.best_val_aps) {
                    have_best = true;
                    result.best_val_aps = row.val_aps;
                    result.best = cfg;
                }
            }
        }
    }
    return result;
}

std::vector<AblationRow> ablation_run(const std::vector<PatientJourney>& normalized,
                                      const std::map<std::string, int>& labels, const TaskWindow& window,
                                      ModelConfig base_config, const TrainConfig& config) {
    struct Flags {
        const char* name;
        bool proc, lab, obs;
    };
    static constexpr Flags kConfigs[] = {
        {"full", true, true, true},
        {"no_procedures", false, true, true},
        {"no_labs", true, false, true},
        {"no_observations", true, true, false},
        {"diagnosis_only", false, false, false},
    };

    std::vector<PatientJourney> train_only;
    for (const auto& j : normalized)
        if (assign_split(j.patient_id, config.ratios, config.split_seed) == SplitLabel::Train)
            train_only.push_back(j);
    if (train_only.empty()) throw data_error("empty cohort: no training patients after split");
    const Vocabulary vocab = build_vocabulary(train_only);

    std::vector<AblationRow> rows;
    for (const auto& fc : kConfigs) {
        EncoderConfig enc;
        enc.m = base_config.m;
        fit_encoder(enc, normalized);
        enc.include_procedures = fc.proc;
        enc.include_labs = fc.lab;
        enc.include_observations = fc.obs;

        ModelConfig mc = base_config;
        mc.n_proc = enc.n_proc;
        mc.n_lab = enc.n_lab;
        for (int ch = 0; ch < kNumChannels; ++ch)
            mc.vocab_sizes[ch] = vocab.size(static_cast<GridChannel>(ch));

        Checkpoint start{init_model(mc, config.seed), vocab, enc};
        const FinetuneResult ft = finetune(start, normalized, labels, window, config);

        AblationRow row;
        row.name = fc.name;
        row.procedures = fc.proc;
        row.labs = fc.lab;
        row.observations = fc.obs;
        row.test_auroc = ft.test_metrics.auroc;
        row.test_aps = ft.test_metrics.aps;
        rows.push_back(row);
    }
    return rows;
}

PurityResult shuffle_purity(const Checkpoint& checkpoint, const std::vector<PatientJourney>& normalized,
                            int repeats, uint64_t seed) {
    if (repeats < 1) throw usage_error("shuffle purity needs at least one repeat");
    PurityResult result;
    ModelParams params = clone_params(checkpoint.params);
    double total = 0.0;
    for (const auto& j : normalized) {
        int positive = 0;
        for (int r = 0; r < repeats; ++r) {
            const PatientJourney shuffled = shuffle_within_visits(j, mix64(seed, static_cast<uint64_t>(r)));
            const SlotGrid grid = encode(shuffled, checkpoint.vocab, checkpoint.encoder);
            positive += cls_score(params, grid) > 0.5 ? 1 : 0;
        }
        const int modal = std::max(positive, repeats - positive);
        const double purity = static_cast<double>(modal) / repeats;
        result.patient_ids.push_back(j.patient_id);
        result.per_patient.push_back(purity);
        total += purity;
    }
    result.aggregate = result.per_patient.empty() ? 0.0 : total / result.per_patient.size();
    return result;
}

std::string epochs_to_csv(const std::vector<EpochRow>& rows) {
    std::ostringstream os;
    os << "epoch,split,mlm_loss,plos_loss,cls_loss,micro_precision,thresholded_precision,auroc,aps\n";
    for (const auto& r : rows) {
        os << r.epoch << ',' << r.split << ',' << fmt_double(r.mlm_loss) << ',' << fmt_opt(r.plos_loss)
           << ',' << fmt_double(r.cls_loss) << ',' << fmt_double(r.micro_precision) << ','
           << fmt_double(r.thresholded_precision) << ',' << fmt_opt(r.auroc) << ',' << fmt_double(r.aps)
           << '\n';
    }
    return os.str();
}

std::string grid_to_csv(const std::vector<GridRow>& rows) {
    std::ostringstream os;
    os << "lr,loss,gamma,alpha,warmup,val_aps,val_auroc\n";
    for (const auto& r : rows) {
        os << fmt_double(r.lr) << ',' << r.loss_name << ',' << fmt_double(r.gamma) << ','
           << fmt_double(r.alpha) << ',' << (r.warmup ? 1 : 0) << ',' << fmt_double(r.val_aps) << ','
           << fmt_opt(r.val_auroc) << '\n';
    }
    return os.str();
}

std::string ablation_to_csv(const std::vector<AblationRow>& rows) {
    std::ostringstream os;
    os << "name,procedures,labs,observations,test_auroc,test_aps\n";
    for (const auto& r : rows) {
        os << r.name << ',' << (r.procedures ? 1 : 0) << ',' << (r.labs ? 1 : 0) << ','
           << (r.observations ? 1 : 0) << ',' << fmt_opt(r.test_auroc) << ',' << fmt_double(r.test_aps)
           << '\n';
    }
    return os.str();
}

} // namespace exbehrt
