#pragma once

#include "core/rng.h"

#include <opencv2/core.hpp>

#include <cstddef>
#include <vector>

namespace trapkit::finetune {

// Reference backbone: conv3x3(3->8) ReLU, avgpool 2, conv3x3(8->16) ReLU, global
// average pool, linear to the class logits. Same padding, double precision.
class TinyCnn {
public:
    static constexpr int kInputPx = 16;
    static constexpr int kChannels1 = 8;
    static constexpr int kChannels2 = 16;

    explicit TinyCnn(int classes);
    // He-normal weights, zero biases.
    static TinyCnn initialized(int classes, Rng& rng);

    int classes() const noexcept { return m_classes; }
    std::vector<double>& params() noexcept { return m_params; }
    const std::vector<double>& params() const noexcept { return m_params; }

    std::vector<double> logits(const std::vector<double>& input) const;
    std::vector<double> probabilities(const std::vector<double>& input) const;

    // Adds d(cross-entropy)/d(params) for one sample into `grad` (same size as params)
    // and returns the loss.
    double accumulate_gradient(const std::vector<double>& input, int label, std::vector<double>& grad) const;

    // 3 x 16 x 16 planar tensor of a BGR crop of any size, scaled to [-1, 1].
    static std::vector<double> preprocess(const cv::Mat& crop);

private:
    struct Activations;
    void forward(const std::vector<double>& input, Activations& act) const;

    int m_classes;
    std::vector<double> m_params;
};

}  // namespace trapkit::finetune
