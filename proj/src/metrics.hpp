#pragma once

// Evaluation metrics: rank-based AUROC with midrank tie handling, average
// precision as precision-weighted recall increments, thresholded precision,
// balanced accuracy, and the MLM precision tallies.

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace exbehrt {

struct MetricsRow {
    std::optional<double> auroc; // absent when labels are single-class
    double aps = 0.0;
    double precision_at_05 = 0.0;
    double balanced_accuracy = 0.0;
    int n = 0;
    int n_pos = 0;
};

// labels are 0/1; scores any real (higher = more positive). Predictions for
// the thresholded metrics use score > 0.5.
MetricsRow binary_metrics(const std::vector<double>& scores, const std::vector<int>& labels);

// One MetricsRow per distinct group id, keyed and ordered by group id.
std::map<std::string, MetricsRow> group_metrics(const std::vector<double>& scores,
                                                const std::vector<int>& labels,
                                                const std::vector<std::string>& groups);

// Accumulates masked-position predictions. Micro precision is top-1
// accuracy over selected positions; the thresholded variant additionally
// requires the predicted class's softmax probability to exceed 0.5; macro
// recall averages per-target-class recall.
class MlmTally {
public:
    void add(int target, int predicted, double predicted_prob);
    int selected() const { return n_; }
    double micro_precision() const;
    double thresholded_precision() const;
    double macro_recall() const;

private:
    int n_ = 0;
    int correct_ = 0;
    int confident_correct_ = 0;
    std::map<int, std::pair<int, int>> per_class_; // target -> (correct, total)
};

} // namespace exbehrt
