#pragma once

// Evaluation: top-1 accuracy, per-class accuracy, Many/Medium/Few group
// accuracy over class-count terciles, and improvement deltas between arms.

#include <optional>
#include <vector>

#include "imwa/data.hpp"
#include "imwa/nn.hpp"

namespace imwa {

struct EvalReport {
    double top1 = 0.0;
    std::vector<std::optional<double>> per_class;  // absent when a class has no eval rows
    double many_acc = 0.0;
    double medium_acc = 0.0;
    double few_acc = 0.0;
    std::vector<std::size_t> confusion;  // C x C, row = true class, col = predicted
    std::size_t num_classes = 0;

    std::size_t confusion_at(std::size_t truth, std::size_t pred) const {
        return confusion[truth * num_classes + pred];
    }
};

// Argmax of the forward logits per sample, ties broken toward the lowest
// class index. Group terciles are computed from group_counts (the training
// distribution) when given, else from the eval set's own counts.
EvalReport evaluate(const WeightVector& w, const Dataset& eval_set,
                    const std::vector<std::size_t>& group_counts = {},
                    kernels::Exec exec = kernels::Exec::parallel);

// Signed top-1 delta in accuracy points: arm - baseline.
double improvement(const EvalReport& arm, const EvalReport& baseline);

}  // namespace imwa
