#include "finetune/tiny_cnn.h"

#include "core/error.h"

#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>

namespace trapkit::finetune {

namespace {

constexpr int kIn = TinyCnn::kInputPx;
constexpr int kPooled = kIn / 2;
constexpr int kC0 = 3;
constexpr int kC1 = TinyCnn::kChannels1;
constexpr int kC2 = TinyCnn::kChannels2;

// Flat parameter layout.
constexpr std::size_t kW1 = 0;
constexpr std::size_t kB1 = kW1 + kC1 * kC0 * 9;
constexpr std::size_t kW2 = kB1 + kC1;
constexpr std::size_t kB2 = kW2 + kC2 * kC1 * 9;
constexpr std::size_t kW3 = kB2 + kC2;

// out[o][y][x] = b[o] + sum_c sum_k w[o][c][k] * in[c][y+ky-1][x+kx-1], zero padded.
void conv3x3(const double* in, int cin, int size, const double* w, const double* b, int cout, double* out) {
    for (int o = 0; o < cout; ++o) {
        double* dst = out + o * size * size;
        std::fill(dst, dst + size * size, b[o]);
        for (int c = 0; c < cin; ++c) {
            const double* src = in + c * size * size;
            const double* k = w + (o * cin + c) * 9;
            for (int y = 0; y < size; ++y) {
                for (int ky = 0; ky < 3; ++ky) {
                    const int sy = y + ky - 1;
                    if (sy < 0 || sy >= size) {
                        continue;
                    }
                    for (int x = 0; x < size; ++x) {
                        double acc = 0.0;
                        for (int kx = 0; kx < 3; ++kx) {
                            const int sx = x + kx - 1;
                            if (sx >= 0 && sx < size) {
                                acc += k[ky * 3 + kx] * src[sy * size + sx];
                            }
                        }
                        dst[y * size + x] += acc;
                    }
                }
            }
        }
    }
}

// Gradients of conv3x3 given d(out); din may be null.
void conv3x3_backward(const double* in, int cin, int size, const double* w, const double* dout, int cout,
                      double* dw, double* db, double* din) {
    for (int o = 0; o < cout; ++o) {
        const double* g = dout + o * size * size;
        for (int i = 0; i < size * size; ++i) {
            db[o] += g[i];
        }
        for (int c = 0; c < cin; ++c) {
            const double* src = in + c * size * size;
            const double* k = w + (o * cin + c) * 9;
            double* dk = dw + (o * cin + c) * 9;
            double* dsrc = din ? din + c * size * size : nullptr;
            for (int y = 0; y < size; ++y) {
                for (int ky = 0; ky < 3; ++ky) {
                    const int sy = y + ky - 1;
                    if (sy < 0 || sy >= size) {
                        continue;
                    }
                    for (int x = 0; x < size; ++x) {
                        const double gv = g[y * size + x];
                        if (gv == 0.0) {
                            continue;
                        }
                        for (int kx = 0; kx < 3; ++kx) {
                            const int sx = x + kx - 1;
                            if (sx >= 0 && sx < size) {
                                dk[ky * 3 + kx] += gv * src[sy * size + sx];
                                if (dsrc) {
                                    dsrc[sy * size + sx] += gv * k[ky * 3 + kx];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

std::vector<double> softmax(const std::vector<double>& z) {
    const double m = *std::max_element(z.begin(), z.end());
    std::vector<double> p(z.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        p[i] = std::exp(z[i] - m);
        sum += p[i];
    }
    for (double& v : p) {
        v /= sum;
    }
    return p;
}

}  // namespace

struct TinyCnn::Activations {
    std::vector<double> a1 = std::vector<double>(kC1 * kIn * kIn);
    std::vector<double> pooled = std::vector<double>(kC1 * kPooled * kPooled);
    std::vector<double> a2 = std::vector<double>(kC2 * kPooled * kPooled);
    std::vector<double> features = std::vector<double>(kC2);
    std::vector<double> logits;
};

TinyCnn::TinyCnn(int classes) : m_classes(classes) {
    if (classes < 2) {
        throw Error(ErrorCode::TooFewClasses, "a classifier needs at least 2 classes");
    }
    m_params.assign(kW3 + static_cast<std::size_t>(classes) * (kC2 + 1), 0.0);
}

TinyCnn TinyCnn::initialized(int classes, Rng& rng) {
    TinyCnn net(classes);
    auto fill = [&](std::size_t from, std::size_t count, double fan_in) {
        const double sd = std::sqrt(2.0 / fan_in);
        for (std::size_t i = 0; i < count; ++i) {
            net.m_params[from + i] = rng.normal(0.0, sd);
        }
    };
    fill(kW1, kB1 - kW1, kC0 * 9);
    fill(kW2, kB2 - kW2, kC1 * 9);
    fill(kW3, static_cast<std::size_t>(classes) * kC2, kC2);
    return net;
}

void TinyCnn::forward(const std::vector<double>& input, Activations& act) const {
    if (input.size() != static_cast<std::size_t>(kC0 * kIn * kIn)) {
        throw Error(ErrorCode::ShapeMismatch, "tiny-cnn input must be 3x16x16");
    }
    const double* p = m_params.data();
    conv3x3(input.data(), kC0, kIn, p + kW1, p + kB1, kC1, act.a1.data());
    for (int c = 0; c < kC1; ++c) {
        for (int y = 0; y < kPooled; ++y) {
            for (int x = 0; x < kPooled; ++x) {
                double s = 0.0;
                for (int d = 0; d < 4; ++d) {
                    s += std::max(0.0, act.a1[(c * kIn + 2 * y + d / 2) * kIn + 2 * x + d % 2]);
                }
                act.pooled[(c * kPooled + y) * kPooled + x] = s / 4.0;
            }
        }
    }
    conv3x3(act.pooled.data(), kC1, kPooled, p + kW2, p + kB2, kC2, act.a2.data());
    constexpr int area = kPooled * kPooled;
    for (int c = 0; c < kC2; ++c) {
        double s = 0.0;
        for (int i = 0; i < area; ++i) {
            s += std::max(0.0, act.a2[c * area + i]);
        }
        act.features[c] = s / area;
    }
    const std::size_t kB3 = kW3 + static_cast<std::size_t>(m_classes) * kC2;
    act.logits.assign(m_classes, 0.0);
    for (int k = 0; k < m_classes; ++k) {
        double z = p[kB3 + k];
        for (int c = 0; c < kC2; ++c) {
            z += p[kW3 + k * kC2 + c] * act.features[c];
        }
        act.logits[k] = z;
    }
}

std::vector<double> TinyCnn::logits(const std::vector<double>& input) const {
    Activations act;
    forward(input, act);
    return act.logits;
}

std::vector<double> TinyCnn::probabilities(const std::vector<double>& input) const {
    return softmax(logits(input));
}

double TinyCnn::accumulate_gradient(const std::vector<double>& input, int label, std::vector<double>& grad) const {
    Activations act;
    forward(input, act);
    const auto prob = softmax(act.logits);
    const double loss = -std::log(std::max(prob[label], 1e-300));

    const double* p = m_params.data();
    double* g = grad.data();
    const std::size_t kB3 = kW3 + static_cast<std::size_t>(m_classes) * kC2;
    std::vector<double> dfeat(kC2, 0.0);
    for (int k = 0; k < m_classes; ++k) {
        const double dz = prob[k] - (k == label ? 1.0 : 0.0);
        g[kB3 + k] += dz;
        for (int c = 0; c < kC2; ++c) {
            g[kW3 + k * kC2 + c] += dz * act.features[c];
            dfeat[c] += dz * p[kW3 + k * kC2 + c];
        }
    }
    constexpr int area = kPooled * kPooled;
    std::vector<double> da2(act.a2.size());
    for (int c = 0; c < kC2; ++c) {
        for (int i = 0; i < area; ++i) {
            da2[c * area + i] = act.a2[c * area + i] > 0.0 ? dfeat[c] / area : 0.0;
        }
    }
    std::vector<double> dpooled(act.pooled.size(), 0.0);
    conv3x3_backward(act.pooled.data(), kC1, kPooled, p + kW2, da2.data(), kC2, g + kW2, g + kB2, dpooled.data());
    std::vector<double> da1(act.a1.size(), 0.0);
    for (int c = 0; c < kC1; ++c) {
        for (int y = 0; y < kIn; ++y) {
            for (int x = 0; x < kIn; ++x) {
                const std::size_t i = (c * kIn + y) * kIn + x;
                if (act.a1[i] > 0.0) {
                    da1[i] = dpooled[(c * kPooled + y / 2) * kPooled + x / 2] / 4.0;
                }
            }
        }
    }
    conv3x3_backward(input.data(), kC0, kIn, p + kW1, da1.data(), kC1, g + kW1, g + kB1, nullptr);
    return loss;
}

std::vector<double> TinyCnn::preprocess(const cv::Mat& crop) {
    if (crop.empty() || crop.type() != CV_8UC3) {
        throw Error(ErrorCode::ShapeMismatch, "tiny-cnn expects a non-empty 8-bit BGR crop");
    }
    cv::Mat small;
    if (crop.cols == kIn && crop.rows == kIn) {
        small = crop;
    } else {
        cv::resize(crop, small, cv::Size(kIn, kIn), 0, 0, cv::INTER_AREA);
    }
    std::vector<double> out(kC0 * kIn * kIn);
    for (int y = 0; y < kIn; ++y) {
        for (int x = 0; x < kIn; ++x) {
            const auto px = small.at<cv::Vec3b>(y, x);
            for (int c = 0; c < kC0; ++c) {
                out[(c * kIn + y) * kIn + x] = px[c] / 127.5 - 1.0;
            }
        }
    }
    return out;
}

}  // namespace trapkit::finetune
