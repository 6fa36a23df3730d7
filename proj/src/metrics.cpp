#include "imwa/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "imwa/errors.hpp"

namespace imwa {

namespace {

// Classes sorted by descending training count (index breaks ties) and split
// into three groups; remainders widen the earlier groups.
std::vector<int> tercile_groups(const std::vector<std::size_t>& counts) {
    const std::size_t c_total = counts.size();
    std::vector<std::size_t> order(c_total);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return counts[a] > counts[b];
    });
    std::vector<int> group(c_total, 0);
    const std::size_t base = c_total / 3;
    const std::size_t rem = c_total % 3;
    std::size_t sizes[3] = {base + (rem > 0 ? 1 : 0), base + (rem > 1 ? 1 : 0), base};
    std::size_t pos = 0;
    for (int g = 0; g < 3; ++g) {
        for (std::size_t i = 0; i < sizes[g]; ++i) {
            group[order[pos++]] = g;
        }
    }
    return group;
}

}  // namespace

EvalReport evaluate(const WeightVector& w, const Dataset& eval_set,
                    const std::vector<std::size_t>& group_counts, kernels::Exec exec) {
    if (eval_set.feature_dim != w.layout.input_dim()) {
        throw ConfigError("evaluate: eval set feature dim " +
                          std::to_string(eval_set.feature_dim) +
                          " does not match model input dim " +
                          std::to_string(w.layout.input_dim()));
    }
    const std::size_t c_total = w.layout.output_dim();
    if (eval_set.num_classes() > c_total) {
        throw ConfigError("evaluate: eval set has more classes than model outputs");
    }
    if (!group_counts.empty() && group_counts.size() != c_total) {
        throw ConfigError("evaluate: group_counts size does not match class count");
    }

    Batch all;
    all.rows = eval_set.size();
    all.dim = eval_set.feature_dim;
    all.inputs = eval_set.features;
    all.labels = eval_set.labels;
    const auto logits = forward(w, all, exec);

    EvalReport report;
    report.num_classes = c_total;
    report.confusion.assign(c_total * c_total, 0);
    for (std::size_t r = 0; r < all.rows; ++r) {
        const double* row = logits.data() + r * c_total;
        std::size_t best = 0;
        for (std::size_t j = 1; j < c_total; ++j) {
            if (row[j] > row[best]) {
                best = j;
            }
        }
        ++report.confusion[static_cast<std::size_t>(all.labels[r]) * c_total + best];
    }

    std::size_t correct = 0;
    report.per_class.assign(c_total, std::nullopt);
    for (std::size_t c = 0; c < c_total; ++c) {
        std::size_t row_sum = 0;
        for (std::size_t j = 0; j < c_total; ++j) {
            row_sum += report.confusion[c * c_total + j];
        }
        correct += report.confusion[c * c_total + c];
        if (row_sum > 0) {
            report.per_class[c] = static_cast<double>(report.confusion[c * c_total + c]) /
                                  static_cast<double>(row_sum);
        }
    }
    report.top1 = static_cast<double>(correct) / static_cast<double>(all.rows);

    const auto& counts = group_counts.empty() ? eval_set.class_counts : group_counts;
    std::vector<std::size_t> padded(counts);
    padded.resize(c_total, 0);
    const auto groups = tercile_groups(padded);
    double sums[3] = {0.0, 0.0, 0.0};
    std::size_t members[3] = {0, 0, 0};
    for (std::size_t c = 0; c < c_total; ++c) {
        if (report.per_class[c].has_value()) {
            sums[groups[c]] += *report.per_class[c];
            ++members[groups[c]];
        }
    }
    report.many_acc = members[0] ? sums[0] / static_cast<double>(members[0]) : 0.0;
    report.medium_acc = members[1] ? sums[1] / static_cast<double>(members[1]) : 0.0;
    report.few_acc = members[2] ? sums[2] / static_cast<double>(members[2]) : 0.0;
    return report;
}

double improvement(const EvalReport& arm, const EvalReport& baseline) {
    if (arm.num_classes != baseline.num_classes) {
        throw ConfigError("improvement: reports have different class counts");
    }
    return arm.top1 - baseline.top1;
}

}  // namespace imwa
