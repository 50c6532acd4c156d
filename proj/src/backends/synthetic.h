#pragma once

// Deterministic synthetic-oracle backends.
//
// The detector reads ground truth from a sidecar file next to each image
// (`<image file>.json`, a JSON list of {"bbox": [x, y, w, h], "category", "label"})
// and optionally perturbs it with a seeded RNG: box jitter, dropped boxes and
// spurious boxes. With no perturbation every ground-truth box is returned with
// confidence 1.0.
//
// The classifier maps the mean colour of a crop to a class by hue: the hue circle
// is cut into K equal bins, bin i belonging to class_labels[i]. Crops whose mean
// colour is close to grey (saturation below `uncertain_saturation`) get the
// uniform distribution. `render_scene` paints objects in the hue at the centre
// of their label's bin, so the two backends agree on generated images.

#include "backends/backend.h"

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace trapkit::backends {

inline constexpr std::string_view kSyntheticDetectorKind = "synthetic-detector";
inline constexpr std::string_view kSyntheticClassifierKind = "synthetic-classifier";

struct SyntheticDetectorConfig {
    double jitter_sigma = 0.0;  // stddev of coordinate noise, as a fraction of box size
    double drop_rate = 0.0;
    double spurious_rate = 0.0;  // chance per ground-truth box (min. one slot) of a false box
    std::uint64_t seed = 0;
    bool supports_concurrent_inference = true;

    bool noise_free() const { return jitter_sigma == 0.0 && drop_rate == 0.0 && spurious_rate == 0.0; }
};

struct SyntheticClassifierConfig {
    double uncertain_saturation = 0.15;
    double full_saturation = 0.5;
    bool supports_concurrent_inference = true;
};

struct SceneObject {
    BBox bbox;
    DetectionCategory category;
    std::string label;
};

std::filesystem::path sidecar_path(const std::filesystem::path& image_path);
std::vector<SceneObject> read_sidecar(const std::filesystem::path& image_path);
void write_sidecar(const std::filesystem::path& image_path, const std::vector<SceneObject>& objects);

class SyntheticDetector final : public Detector {
public:
    SyntheticDetector(BackendInfo info, SyntheticDetectorConfig config);

    const BackendInfo& info() const override { return m_info; }
    std::vector<Detection> detect(const Image& image, double conf_threshold) const override;

    const SyntheticDetectorConfig& config() const { return m_config; }

private:
    BackendInfo m_info;
    SyntheticDetectorConfig m_config;
};

class SyntheticClassifier final : public Classifier {
public:
    SyntheticClassifier(BackendInfo info, SyntheticClassifierConfig config);

    const BackendInfo& info() const override { return m_info; }
    ClassScores classify(const cv::Mat& crop) const override;

private:
    BackendInfo m_info;
    SyntheticClassifierConfig m_config;
};

BackendHandle load_synthetic_detector(const ModelManifest& manifest, const nlohmann::json& artifact);
BackendHandle load_synthetic_classifier(const ModelManifest& manifest, const nlohmann::json& artifact);

// Writes `<dir>/<model_id>.artifact.json` and `<dir>/<model_id>.manifest.json`
// and returns the manifest (with base_dir set).
ModelManifest write_synthetic_detector_model(const std::filesystem::path& dir,
                                             const std::string& model_id,
                                             const SyntheticDetectorConfig& config = {});
ModelManifest write_synthetic_classifier_model(const std::filesystem::path& dir,
                                               const std::string& model_id,
                                               const std::vector<std::string>& class_labels,
                                               int input_size_px = 256,
                                               const SyntheticClassifierConfig& config = {});

// BGR colour at the centre of the hue bin for `label`; `saturation` in (0,1].
cv::Scalar label_color(std::string_view label, const std::vector<std::string>& class_labels,
                       double saturation = 1.0);

// Low-saturation noisy background with each object painted as a filled box.
// Animals take their label's colour; people and vehicles are drawn in grey.
cv::Mat render_scene(int width, int height, const std::vector<SceneObject>& objects,
                     const std::vector<std::string>& class_labels, std::uint64_t seed,
                     double saturation = 1.0);

// Renders the scene to `path` (format from the extension) and writes its sidecar.
void write_synthetic_image(const std::filesystem::path& path, int width, int height,
                           const std::vector<SceneObject>& objects,
                           const std::vector<std::string>& class_labels, std::uint64_t seed,
                           double saturation = 1.0);

struct CorpusSpec {
    int image_count = 200;
    int width = 320;
    int height = 240;
    int max_objects = 3;
    double person_rate = 0.1;   // per object
    double vehicle_rate = 0.05;
    std::uint64_t seed = 1;
};

// `image_count` images "img_00000.png", ... with non-overlapping objects on a 4x3 cell
// layout and their sidecars. Returns the image paths in order.
std::vector<std::filesystem::path> write_synthetic_corpus(const std::filesystem::path& dir,
                                                          const std::vector<std::string>& class_labels,
                                                          const CorpusSpec& spec = {});

}  // namespace trapkit::backends
