#include "backends/synthetic.h"

#include "core/checksum.h"
#include "core/error.h"
#include "core/rng.h"

#include <fmt/format.h>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace trapkit::backends {

namespace {

constexpr double kMinJitteredSize = 1e-3;

double clamp_unit(double v) { return std::clamp(v, 0.0, 1.0); }

BBox jitter_box(const BBox& box, double sigma, Rng& rng) {
    const double dx = rng.normal(0.0, sigma * box.width());
    const double dy = rng.normal(0.0, sigma * box.height());
    const double dw = rng.normal(0.0, sigma * box.width());
    const double dh = rng.normal(0.0, sigma * box.height());
    const double x = std::clamp(box.x_min() + dx, 0.0, 1.0 - kMinJitteredSize);
    const double y = std::clamp(box.y_min() + dy, 0.0, 1.0 - kMinJitteredSize);
    const double w = std::clamp(box.width() + dw, kMinJitteredSize, 1.0 - x);
    const double h = std::clamp(box.height() + dh, kMinJitteredSize, 1.0 - y);
    return BBox(x, y, w, h);
}

BBox random_box(Rng& rng) {
    const double w = rng.uniform(0.05, 0.3);
    const double h = rng.uniform(0.05, 0.3);
    const double x = rng.uniform(0.0, 1.0 - w);
    const double y = rng.uniform(0.0, 1.0 - h);
    return BBox(x, y, w, h);
}

BackendInfo make_info(const ModelManifest& manifest, bool concurrent) {
    BackendInfo info;
    info.manifest = manifest;
    info.supports_concurrent_inference = concurrent;
    info.parameter_count = manifest.parameter_count;
    return info;
}

// HSV of a BGR triple in [0,255]; hue in degrees [0,360).
void bgr_to_hue_saturation(double b, double g, double r, double& hue, double& saturation) {
    const double max = std::max({r, g, b});
    const double min = std::min({r, g, b});
    const double delta = max - min;
    saturation = max > 0.0 ? delta / max : 0.0;
    if (delta <= 0.0) {
        hue = 0.0;
        return;
    }
    if (max == r) {
        hue = 60.0 * std::fmod((g - b) / delta, 6.0);
    } else if (max == g) {
        hue = 60.0 * ((b - r) / delta + 2.0);
    } else {
        hue = 60.0 * ((r - g) / delta + 4.0);
    }
    if (hue < 0.0) {
        hue += 360.0;
    }
}

cv::Scalar hsv_to_bgr(double hue, double saturation, double value) {
    const double c = value * saturation;
    const double hp = hue / 60.0;
    const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
    double r = 0, g = 0, b = 0;
    if (hp < 1) {
        r = c, g = x;
    } else if (hp < 2) {
        r = x, g = c;
    } else if (hp < 3) {
        g = c, b = x;
    } else if (hp < 4) {
        g = x, b = c;
    } else if (hp < 5) {
        r = x, b = c;
    } else {
        r = c, b = x;
    }
    const double m = value - c;
    return cv::Scalar((b + m) * 255.0, (g + m) * 255.0, (r + m) * 255.0);
}

}  // namespace

std::filesystem::path sidecar_path(const std::filesystem::path& image_path) {
    return std::filesystem::path(image_path.string() + ".json");
}

std::vector<SceneObject> read_sidecar(const std::filesystem::path& image_path) {
    const auto path = sidecar_path(image_path);
    std::error_code ec;
    if (!std::filesystem::exists(path, ec)) {
        return {};
    }
    std::vector<SceneObject> objects;
    try {
        const auto doc = nlohmann::json::parse(read_file(path));
        for (const auto& item : doc) {
            const auto box = item.at("bbox").get<std::vector<double>>();
            if (box.size() != 4) {
                throw Error(ErrorCode::ParseError, "sidecar bbox must have 4 numbers");
            }
            objects.push_back({BBox(box[0], box[1], box[2], box[3]),
                               category_from_string(item.at("category").get<std::string>()),
                               item.value("label", "")});
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::BackendError,
                    fmt::format("malformed sidecar '{}': {}", path.string(), e.what()));
    } catch (const Error& e) {
        throw Error(ErrorCode::BackendError,
                    fmt::format("malformed sidecar '{}': {}", path.string(), e.what()));
    }
    return objects;
}

void write_sidecar(const std::filesystem::path& image_path, const std::vector<SceneObject>& objects) {
    nlohmann::ordered_json doc = nlohmann::ordered_json::array();
    for (const auto& obj : objects) {
        nlohmann::ordered_json item;
        item["bbox"] = {obj.bbox.x_min(), obj.bbox.y_min(), obj.bbox.width(), obj.bbox.height()};
        item["category"] = to_string(obj.category);
        item["label"] = obj.label;
        doc.push_back(std::move(item));
    }
    write_file(sidecar_path(image_path), doc.dump(2) + "\n");
}

SyntheticDetector::SyntheticDetector(BackendInfo info, SyntheticDetectorConfig config)
        : m_info(std::move(info)), m_config(config) {}

std::vector<Detection> SyntheticDetector::detect(const Image& image, double conf_threshold) const {
    check_detect_threshold(conf_threshold);
    if (image.pixels.empty()) {
        throw Error(ErrorCode::ImageDecodeError, "empty image");
    }
    const auto truth = read_sidecar(image.source);

    std::vector<Detection> out;
    if (m_config.noise_free()) {
        for (const auto& obj : truth) {
            out.emplace_back(obj.bbox, obj.category, 1.0);
        }
        return sort_and_filter(std::move(out), conf_threshold);
    }

    // The stream depends only on the seed and the file name, so results do not
    // depend on call order or on which directory the corpus was copied to.
    Rng rng(fnv1a64(image.source.filename().string(), m_config.seed ^ 0x9e3779b97f4a7c15ULL));
    for (const auto& obj : truth) {
        const bool dropped = rng.bernoulli(m_config.drop_rate);
        const BBox box = jitter_box(obj.bbox, m_config.jitter_sigma, rng);
        const double conf = rng.uniform(0.5, 1.0);
        if (!dropped) {
            out.emplace_back(box, obj.category, conf);
        }
    }
    const std::size_t slots = std::max<std::size_t>(1, truth.size());
    for (std::size_t i = 0; i < slots; ++i) {
        const bool spurious = rng.bernoulli(m_config.spurious_rate);
        const BBox box = random_box(rng);
        const auto category = kAllCategories[rng.below(3)];
        const double conf = rng.uniform(0.05, 0.9);
        if (spurious) {
            out.emplace_back(box, category, conf);
        }
    }
    return sort_and_filter(std::move(out), conf_threshold);
}

SyntheticClassifier::SyntheticClassifier(BackendInfo info, SyntheticClassifierConfig config)
        : m_info(std::move(info)), m_config(config) {
    if (m_info.manifest.class_labels.empty()) {
        throw Error(ErrorCode::InvalidArgument, "synthetic classifier needs class labels");
    }
}

ClassScores SyntheticClassifier::classify(const cv::Mat& crop) const {
    check_crop_shape(crop, m_info.manifest.input_size_px);
    const auto& labels = m_info.manifest.class_labels;
    const std::size_t k = labels.size();
    const cv::Scalar mean = cv::mean(crop);
    double hue = 0.0, saturation = 0.0;
    bgr_to_hue_saturation(mean[0], mean[1], mean[2], hue, saturation);

    std::vector<ClassScores::Entry> entries;
    entries.reserve(k);
    if (saturation <= m_config.uncertain_saturation || k == 1) {
        const double p = 1.0 / static_cast<double>(k);
        for (const auto& label : labels) {
            entries.emplace_back(label, k == 1 ? 1.0 : p);
        }
        return ClassScores(std::move(entries));
    }
    const auto top = std::min<std::size_t>(
            k - 1, static_cast<std::size_t>(hue / (360.0 / static_cast<double>(k))));
    const double t = std::min(1.0, (saturation - m_config.uncertain_saturation) /
                                           (m_config.full_saturation - m_config.uncertain_saturation));
    const double uniform = 1.0 / static_cast<double>(k);
    const double p_top = uniform + (1.0 - uniform) * t;
    const double p_rest = (1.0 - p_top) / static_cast<double>(k - 1);
    for (std::size_t i = 0; i < k; ++i) {
        entries.emplace_back(labels[i], i == top ? p_top : p_rest);
    }
    return ClassScores(std::move(entries));
}

BackendHandle load_synthetic_detector(const ModelManifest& manifest, const nlohmann::json& artifact) {
    SyntheticDetectorConfig config;
    config.jitter_sigma = artifact.value("jitter_sigma", 0.0);
    config.drop_rate = clamp_unit(artifact.value("drop_rate", 0.0));
    config.spurious_rate = clamp_unit(artifact.value("spurious_rate", 0.0));
    config.seed = artifact.value("seed", std::uint64_t{0});
    config.supports_concurrent_inference = artifact.value("supports_concurrent_inference", true);
    BackendHandle handle;
    handle.task = Task::detector;
    handle.detector = std::make_shared<SyntheticDetector>(
            make_info(manifest, config.supports_concurrent_inference), config);
    return handle;
}

BackendHandle load_synthetic_classifier(const ModelManifest& manifest,
                                        const nlohmann::json& artifact) {
    SyntheticClassifierConfig config;
    config.uncertain_saturation = artifact.value("uncertain_saturation", config.uncertain_saturation);
    config.full_saturation = artifact.value("full_saturation", config.full_saturation);
    config.supports_concurrent_inference = artifact.value("supports_concurrent_inference", true);
    BackendHandle handle;
    handle.task = Task::classifier;
    handle.classifier = std::make_shared<SyntheticClassifier>(
            make_info(manifest, config.supports_concurrent_inference), config);
    return handle;
}

namespace {

ModelManifest write_model(const std::filesystem::path& dir, const std::string& model_id,
                          const nlohmann::ordered_json& artifact, ModelManifest manifest) {
    std::filesystem::create_directories(dir);
    const std::string artifact_name = model_id + ".artifact.json";
    write_file(dir / artifact_name, artifact.dump(2) + "\n");
    manifest.model_id = model_id;
    manifest.artifact_path = artifact_name;
    manifest.checksum = sha256_file(dir / artifact_name);
    manifest.base_dir = dir;
    save_manifest(dir / (model_id + ".manifest.json"), manifest);
    return manifest;
}

}  // namespace

ModelManifest write_synthetic_detector_model(const std::filesystem::path& dir,
                                             const std::string& model_id,
                                             const SyntheticDetectorConfig& config) {
    nlohmann::ordered_json artifact;
    artifact["kind"] = kSyntheticDetectorKind;
    artifact["jitter_sigma"] = config.jitter_sigma;
    artifact["drop_rate"] = config.drop_rate;
    artifact["spurious_rate"] = config.spurious_rate;
    artifact["seed"] = config.seed;
    artifact["supports_concurrent_inference"] = config.supports_concurrent_inference;

    ModelManifest manifest;
    manifest.version = "1.0";
    manifest.task = Task::detector;
    manifest.class_labels = {"animal", "person", "vehicle"};
    manifest.input_size_px = 0;
    manifest.description = "Synthetic oracle detector reading sidecar ground truth";
    manifest.region_tags = {"synthetic"};
    return write_model(dir, model_id, artifact, manifest);
}

ModelManifest write_synthetic_classifier_model(const std::filesystem::path& dir,
                                               const std::string& model_id,
                                               const std::vector<std::string>& class_labels,
                                               int input_size_px,
                                               const SyntheticClassifierConfig& config) {
    nlohmann::ordered_json artifact;
    artifact["kind"] = kSyntheticClassifierKind;
    artifact["uncertain_saturation"] = config.uncertain_saturation;
    artifact["full_saturation"] = config.full_saturation;
    artifact["supports_concurrent_inference"] = config.supports_concurrent_inference;

    ModelManifest manifest;
    manifest.version = "1.0";
    manifest.task = Task::classifier;
    manifest.class_labels = class_labels;
    manifest.input_size_px = input_size_px;
    manifest.description = "Synthetic oracle classifier keyed on crop hue";
    manifest.region_tags = {"synthetic"};
    return write_model(dir, model_id, artifact, manifest);
}

cv::Scalar label_color(std::string_view label, const std::vector<std::string>& class_labels,
                       double saturation) {
    const auto it = std::find(class_labels.begin(), class_labels.end(), label);
    if (it == class_labels.end()) {
        throw Error(ErrorCode::InvalidArgument, fmt::format("label '{}' not in class list", label));
    }
    const double bin = 360.0 / static_cast<double>(class_labels.size());
    const double hue = (static_cast<double>(it - class_labels.begin()) + 0.5) * bin;
    return hsv_to_bgr(hue, saturation, 1.0);
}

cv::Mat render_scene(int width, int height, const std::vector<SceneObject>& objects,
                     const std::vector<std::string>& class_labels, std::uint64_t seed,
                     double saturation) {
    cv::Mat image(height, width, CV_8UC3);
    Rng rng(seed);
    for (int y = 0; y < height; ++y) {
        auto* row = image.ptr<cv::Vec3b>(y);
        for (int x = 0; x < width; ++x) {
            const auto v = static_cast<uchar>(108 + rng.below(41));
            row[x] = cv::Vec3b(v, v, v);
        }
    }
    for (const auto& obj : objects) {
        cv::Scalar color;
        switch (obj.category) {
        case DetectionCategory::animal:
            color = label_color(obj.label, class_labels, saturation);
            break;
        case DetectionCategory::person:
            color = cv::Scalar(70, 70, 70);
            break;
        case DetectionCategory::vehicle:
            color = cv::Scalar(190, 190, 190);
            break;
        }
        const int x0 = static_cast<int>(std::lround(obj.bbox.x_min() * width));
        const int y0 = static_cast<int>(std::lround(obj.bbox.y_min() * height));
        const int x1 = static_cast<int>(std::lround(obj.bbox.x_max() * width));
        const int y1 = static_cast<int>(std::lround(obj.bbox.y_max() * height));
        const cv::Rect rect = cv::Rect(cv::Point(x0, y0), cv::Point(x1, y1)) &
                              cv::Rect(0, 0, width, height);
        image(rect).setTo(color);
    }
    return image;
}

void write_synthetic_image(const std::filesystem::path& path, int width, int height,
                           const std::vector<SceneObject>& objects,
                           const std::vector<std::string>& class_labels, std::uint64_t seed,
                           double saturation) {
    save_image(path, render_scene(width, height, objects, class_labels, seed, saturation));
    write_sidecar(path, objects);
}

std::vector<std::filesystem::path> write_synthetic_corpus(const std::filesystem::path& dir,
                                                          const std::vector<std::string>& class_labels,
                                                          const CorpusSpec& spec) {
    if (spec.image_count < 1 || spec.max_objects < 0 || spec.max_objects > 12 || class_labels.empty()) {
        throw Error(ErrorCode::InvalidArgument, "corpus needs images, labels and at most 12 objects per image");
    }
    Rng rng(spec.seed);
    std::vector<std::filesystem::path> paths;
    for (int i = 0; i < spec.image_count; ++i) {
        // One object per cell at most keeps ground-truth boxes disjoint.
        std::vector<int> cells(12);
        std::iota(cells.begin(), cells.end(), 0);
        rng.shuffle(cells);
        const auto count = static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.max_objects) + 1));
        std::vector<SceneObject> objects;
        for (int k = 0; k < count; ++k) {
            const double cw = 0.25, ch = 1.0 / 3.0;
            const double w = cw * rng.uniform(0.5, 0.9);
            const double h = ch * rng.uniform(0.5, 0.9);
            const double x = (cells[k] % 4) * cw + rng.uniform(0.0, cw - w);
            const double y = (cells[k] / 4) * ch + rng.uniform(0.0, ch - h);
            const double u = rng.uniform();
            SceneObject obj{BBox(x, y, w, h), DetectionCategory::animal, ""};
            if (u < spec.person_rate) {
                obj.category = DetectionCategory::person;
            } else if (u < spec.person_rate + spec.vehicle_rate) {
                obj.category = DetectionCategory::vehicle;
            } else {
                obj.label = class_labels[rng.below(class_labels.size())];
            }
            objects.push_back(std::move(obj));
        }
        const auto path = dir / fmt::format("img_{:05}.png", i);
        write_synthetic_image(path, spec.width, spec.height, objects, class_labels, rng.next_u64());
        paths.push_back(path);
    }
    return paths;
}

}  // namespace trapkit::backends
