#include "metrics.hpp"

#include <algorithm>
#include <numeric>

#include "error.hpp"

namespace exbehrt {

MetricsRow binary_metrics(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) throw internal_error("metrics: scores/labels length mismatch");
    MetricsRow row;
    row.n = static_cast<int>(scores.size());
    for (int y : labels) row.n_pos += y ? 1 : 0;
    const int n_neg = row.n - row.n_pos;

    // AUROC by the rank statistic: midranks resolve ties, equivalent to
    // counting a half win for every tied positive/negative pair.
    if (row.n_pos > 0 && n_neg > 0) {
        std::vector<int> order(scores.size());
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](int a, int b) { return scores[a] < scores[b]; });
        double rank_sum_pos = 0.0;
        size_t i = 0;
        while (i < order.size()) {
            size_t j = i;
            while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
            const double midrank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
            for (size_t k = i; k < j; ++k)
                if (labels[order[k]]) rank_sum_pos += midrank;
            i = j;
        }
        row.auroc = (rank_sum_pos - 0.5 * row.n_pos * (row.n_pos + 1.0)) /
                    (static_cast<double>(row.n_pos) * n_neg);
    }

    // Average precision: walk distinct scores from high to low, adding
    // precision-weighted recall increments.
    if (row.n_pos > 0) {
        std::vector<int> order(scores.size());
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](int a, int b) { return scores[a] > scores[b]; });
        double ap = 0.0, prev_recall = 0.0;
        int tp = 0, fp = 0;
        size_t i = 0;
        while (i < order.size()) {
            size_t j = i;
            while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
            for (size_t k = i; k < j; ++k) {
                if (labels[order[k]]) ++tp;
                else ++fp;
            }
            const double precision = static_cast<double>(tp) / (tp + fp);
            const double recall = static_cast<double>(tp) / row.n_pos;
            ap += (recall - prev_recall) * precision;
            prev_recall = recall;
            i = j;
        }
        row.aps = ap;
    }

    int tp = 0, fp = 0, tn = 0, fn = 0;
    for (size_t k = 0; k < scores.size(); ++k) {
        const bool pred = scores[k] > 0.5;
        if (pred && labels[k]) ++tp;
        else if (pred) ++fp;
        else if (labels[k]) ++fn;
        else ++tn;
    }
    row.precision_at_05 = (tp + fp) > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;

    // Balanced accuracy = macro recall over the classes that actually occur.
    double recall_sum = 0.0;
    int classes = 0;
    if (row.n_pos > 0) {
        recall_sum += static_cast<double>(tp) / row.n_pos;
        ++classes;
    }
    if (n_neg > 0) {
        recall_sum += static_cast<double>(tn) / n_neg;
        ++classes;
    }
    row.balanced_accuracy = classes > 0 ? recall_sum / classes : 0.0;
    return row;
}

std::map<std::string, MetricsRow> group_metrics(const std::vector<double>& scores,
                                                const std::vector<int>& labels,
                                                const std::vector<std::string>& groups) {
    if (scores.size() != groups.size()) throw internal_error("metrics: scores/groups length mismatch");
    std::map<std::string, std::pair<std::vector<double>, std::vector<int>>> buckets;
    for (size_t i = 0; i < scores.size(); ++i) {
        auto& b = buckets[groups[i]];
        b.first.push_back(scores[i]);
        b.second.push_back(labels[i]);
    }
    std::map<std::string, MetricsRow> rows;
    for (const auto& [group, data] : buckets) rows.emplace(group, binary_metrics(data.first, data.second));
    return rows;
}

void MlmTally::add(int target, int predicted, double predicted_prob) {
    ++n_;
    const bool correct = predicted == target;
    if (correct) ++correct_;
    if (correct && predicted_prob > 0.5) ++confident_correct_;
    auto& cls = per_class_[target];
    if (correct) ++cls.first;
    ++cls.second;
}

double MlmTally::micro_precision() const {
    return n_ > 0 ? static_cast<double>(correct_) / n_ : 0.0;
}

double MlmTally::thresholded_precision() const {
    return n_ > 0 ? static_cast<double>(confident_correct_) / n_ : 0.0;
}

double MlmTally::macro_recall() const {
    if (per_class_.empty()) return 0.0;
    double total = 0.0;
    for (const auto& [cls, counts] : per_class_)
        total += static_cast<double>(counts.first) / counts.second;
    return total / per_class_.size();
}

} // namespace exbehrt
