#pragma once

#include "backends/backend.h"
#include "datakit/crops.h"
#include "finetune/tiny_cnn.h"

#include <json.hpp>

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

namespace trapkit::finetune {

enum class Optimizer { sgd };

inline constexpr const char* kTinyCnnBackbone = "tiny-cnn";
inline constexpr const char* kTinyCnnArtifactKind = "tiny-cnn";

struct TrainConfig {
    int epochs = 60;
    int batch_size = 128;
    Optimizer optimizer = Optimizer::sgd;
    double initial_lr = 0.01;
    double momentum = 0.9;
    int lr_step_epochs = 20;
    double lr_gamma = 0.1;
    std::string backbone_id = kTinyCnnBackbone;
    std::uint64_t seed = 0;

    // Throws InvalidArgument, or UnsupportedBackbone for anything but tiny-cnn.
    void validate() const;
    // initial_lr * lr_gamma^floor(epoch / lr_step_epochs)
    double lr_at(int epoch) const;
};

struct EpochRecord {
    int epoch;
    double lr;
    double train_loss;
    double val_accuracy;
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
    int best_epoch = -1;  // highest val_accuracy, earliest on ties
};

nlohmann::ordered_json epoch_to_json(const EpochRecord& record);

// Classifier backend over a trained TinyCnn. Crops of any size are accepted by the
// network itself; the backend contract still pins them to input_size_px.
class TinyCnnClassifier : public backends::Classifier {
public:
    TinyCnnClassifier(backends::BackendInfo info, TinyCnn network);

    const backends::BackendInfo& info() const override { return m_info; }
    ClassScores classify(const cv::Mat& crop) const override;

    const TinyCnn& network() const noexcept { return m_network; }
    const std::vector<std::string>& labels() const noexcept { return m_info.manifest.class_labels; }
    int input_size_px() const noexcept { return m_info.manifest.input_size_px; }

    nlohmann::ordered_json to_artifact() const;
    static std::shared_ptr<const TinyCnnClassifier> from_artifact(const backends::ModelManifest& manifest,
                                                                  const nlohmann::json& artifact);

private:
    backends::BackendInfo m_info;
    TinyCnn m_network;
};

// Makes load_backend understand tiny-cnn artifacts. Idempotent.
void register_finetune_backends();

struct TrainResult {
    std::shared_ptr<const TinyCnnClassifier> model;  // weights of best_epoch
    TrainHistory history;
};

// Labels are the sorted distinct train labels. Every crop must share one square size,
// which becomes the model's input size. When `work_dir` is set it receives
// train_log.jsonl (one record per epoch) and checkpoint_best.json.
// Errors: TooFewClasses, EmptyDataset, InvalidArgument (val label unseen in train),
// ShapeMismatch.
TrainResult train(const std::vector<datakit::CropRecord>& train_crops,
                  const std::vector<datakit::CropRecord>& val_crops, const TrainConfig& config,
                  const std::filesystem::path& work_dir = {});

struct ClassifierEvaluation {
    std::vector<std::string> labels;                   // backend label order
    std::vector<std::vector<std::size_t>> confusion;   // [true][predicted]
    std::vector<std::size_t> support;                  // crops per true label
    std::size_t correct = 0;
    std::size_t total = 0;

    double accuracy() const;
    // NaN for labels without crops.
    double class_accuracy(std::size_t label) const;
    nlohmann::ordered_json to_json() const;
};

// Crops are resized to the backend's input size when needed.
// Errors: EmptyDataset; InvalidArgument for a label the backend lacks.
ClassifierEvaluation evaluate_classifier(const backends::Classifier& classifier,
                                         const std::vector<datakit::CropRecord>& crops);

struct ExportMetadata {
    std::string model_id;
    std::string version = "1.0";
    std::string description;
    std::vector<std::string> region_tags;
};

// Writes <zoo_dir>/<model_id>.artifact.json and <model_id>.manifest.json.
backends::ModelManifest export_model(const TinyCnnClassifier& model, const std::filesystem::path& zoo_dir,
                                     const ExportMetadata& metadata);

// Synthetic colour-patch crops: each label a hue, patches of random size and
// saturation on a noisy grey background. Writes <dir>/<label>/*.png and a manifest.
std::vector<datakit::CropRecord> make_color_patch_crops(const std::filesystem::path& dir,
                                                        const std::vector<std::string>& labels,
                                                        int per_label, int crop_size_px, std::uint64_t seed);

}  // namespace trapkit::finetune
