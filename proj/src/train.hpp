#pragma once

// Training loops: MLM pre-training (optionally with the PLOS auxiliary
// head, optionally restricted to a code prefix), CLS fine-tuning with focal
// loss and observation windows, hyperparameter grid search, channel
// ablations, and the within-visit shuffle purity check.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cohort.hpp"
#include "journey.hpp"
#include "masking.hpp"
#include "metrics.hpp"
#include "model.hpp"
#include "optimizer.hpp"

namespace exbehrt {

enum class Objective { Mlm, MlmPlos };

struct TrainConfig {
    double lr = 3e-5;
    double gamma = 0.0;   // focal loss; gamma=0, alpha=1 is cross-entropy
    double alpha = 1.0;
    bool warmup = false;  // bundles weight decay 0.01 and warmup proportion 0.1
    int epochs = 5;
    int batch_size = 32;
    uint64_t seed = 7;
    uint64_t split_seed = 1234; // shared across cohorts so patients stay in one split
    SplitRatios ratios{};
    int min_visits = 5;

    void validate() const;
    std::string loss_name() const;
    OptimConfig optimizer(int total_steps) const;
};

struct EpochRow {
    int epoch = 0;
    std::string split;
    double mlm_loss = 0.0;
    std::optional<double> plos_loss;
    double cls_loss = 0.0;
    double micro_precision = 0.0;
    double thresholded_precision = 0.0;
    std::optional<double> auroc;
    double aps = 0.0;
};

std::string epochs_to_csv(const std::vector<EpochRow>& rows);

struct PretrainResult {
    Checkpoint checkpoint; // parameters of the best validation epoch
    std::vector<EpochRow> log;
    int best_epoch = -1;
    double best_metric = 0.0; // validation micro MLM precision
};

// Builds the vocabulary on the train split, fits the row caps on the whole
// filtered cohort, then trains. base_config carries the architecture; its
// m is kept, n_proc/n_lab/vocab_sizes are filled here.
PretrainResult pretrain(const std::vector<PatientJourney>& normalized, ModelConfig base_config,
                        const TrainConfig& config, Objective objective);

// Second pretraining pass that masks only codes with the given prefix.
// Continues from an existing checkpoint (same vocab and geometry). Throws a
// data error when no journey contains a matching code.
PretrainResult adapt_pretrain(const Checkpoint& start, const std::vector<PatientJourney>& normalized,
                              const std::string& code_prefix, const TrainConfig& config);

enum class WindowKind { None, ToFirstCodeInclusive, OneYearBefore };

struct TaskWindow {
    WindowKind kind = WindowKind::None;
    std::string code; // prefix for ToFirstCodeInclusive, exact code for OneYearBefore
};

// The observation window per task; empty result = no qualifying index event.
std::optional<PatientJourney> apply_window(const PatientJourney& journey, const TaskWindow& window);

// Standard windows for the generated label tasks.
TaskWindow window_for_task(const std::string& task);

struct FinetuneResult {
    Checkpoint checkpoint; // parameters of the best validation-APS epoch
    std::vector<EpochRow> log;
    int best_epoch = -1;
    MetricsRow val_metrics;
    MetricsRow test_metrics;
    std::vector<std::string> test_ids;
    std::vector<double> test_scores;
    std::vector<int> test_labels;
    int window_excluded = 0; // patients without a qualifying index event
    int label_missing = 0;   // patients without a label row
};

// Trains the CLS head (whole network trainable) on windowed journeys.
// Patients are split by id with config.split_seed; the test split is only
// evaluated, never trained on.
FinetuneResult finetune(const Checkpoint& start, const std::vector<PatientJourney>& normalized,
                        const std::map<std::string, int>& labels, const TaskWindow& window,
                        const TrainConfig& config);

struct GridRow {
    double lr = 0.0;
    double gamma = 0.0, alpha = 1.0;
    std::string loss_name;
    bool warmup = false;
    double val_aps = 0.0;
    std::optional<double> val_auroc;
};

struct GridSearchResult {
    std::vector<GridRow> rows;
    TrainConfig best;      // base config with the winning lr/loss/warmup
    double best_val_aps = 0.0;
};

std::string grid_to_csv(const std::vector<GridRow>& rows);

// Full sweep: lr {3e-5,4e-5,5e-5} x loss {ce, focal(2,1), focal(5,1),
// focal(2,0.75)} x warmup {off,on}. Selection is by validation APS only;
// test patients are removed from the inputs before any training, so test
// labels are unreachable here by construction.
GridSearchResult grid_search(const Checkpoint& start, const std::vector<PatientJourney>& normalized,
                             const std::map<std::string, int>& labels, const TaskWindow& window,
                             const TrainConfig& base);

struct AblationRow {
    std::string name;
    bool procedures = true, labs = true, observations = true;
    std::optional<double> test_auroc;
    double test_aps = 0.0;
};

std::string ablation_to_csv(const std::vector<AblationRow>& rows);

// Re-trains from scratch once per channel configuration (all-on, each
// channel off, diagnosis-only) and reports test metrics.
std::vector<AblationRow> ablation_run(const std::vector<PatientJourney>& normalized,
                                      const std::map<std::string, int>& labels, const TaskWindow& window,
                                      ModelConfig base_config, const TrainConfig& config);

struct PurityResult {
    std::vector<std::string> patient_ids;
    std::vector<double> per_patient;
    double aggregate = 0.0;
};

// Re-encodes each patient `repeats` times with independently shuffled
// within-visit code order and measures how stable the predicted label is.
PurityResult shuffle_purity(const Checkpoint& checkpoint, const std::vector<PatientJourney>& normalized,
                            int repeats, uint64_t seed);

} // namespace exbehrt
