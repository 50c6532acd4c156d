#include "finetune/train.h"

#include "backends/synthetic.h"
#include "core/checksum.h"
#include "core/error.h"
#include "core/image.h"
#include "core/rng.h"

#include <fmt/format.h>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <set>

namespace trapkit::finetune {

namespace {

struct Sample {
    std::vector<double> input;
    int label;
};

std::vector<Sample> load_samples(const std::vector<datakit::CropRecord>& crops,
                                 const std::map<std::string, int>& index, int& size_px) {
    std::vector<Sample> out;
    out.reserve(crops.size());
    for (const auto& c : crops) {
        const Image img = load_image(c.crop_path);
        if (img.width() != img.height() || (size_px != 0 && img.width() != size_px)) {
            throw Error(ErrorCode::ShapeMismatch,
                        fmt::format("crop '{}' is {}x{}; all crops must be {}x{}", c.crop_path.string(),
                                    img.width(), img.height(), size_px, size_px));
        }
        size_px = img.width();
        const auto it = index.find(c.label);
        if (it == index.end()) {
            throw Error(ErrorCode::InvalidArgument,
                        fmt::format("validation label '{}' does not occur in the training crops", c.label));
        }
        out.push_back({TinyCnn::preprocess(img.pixels), it->second});
    }
    return out;
}

int argmax(const std::vector<double>& v) {
    return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

double accuracy_of(const TinyCnn& net, const std::vector<Sample>& samples) {
    std::size_t correct = 0;
    for (const auto& s : samples) {
        correct += argmax(net.logits(s.input)) == s.label;
    }
    return static_cast<double>(correct) / static_cast<double>(samples.size());
}

backends::ModelManifest model_manifest(const std::vector<std::string>& labels, int input_px, std::size_t params) {
    backends::ModelManifest m;
    m.model_id = "finetuned";
    m.version = "0";
    m.task = backends::Task::classifier;
    m.class_labels = labels;
    m.input_size_px = input_px;
    m.parameter_count = static_cast<std::int64_t>(params);
    return m;
}

std::shared_ptr<const TinyCnnClassifier> make_model(const backends::ModelManifest& manifest, TinyCnn net) {
    backends::BackendInfo info;
    info.manifest = manifest;
    info.supports_concurrent_inference = true;
    info.parameter_count = manifest.parameter_count;
    return std::make_shared<TinyCnnClassifier>(std::move(info), std::move(net));
}

}  // namespace

void TrainConfig::validate() const {
    if (epochs < 1 || batch_size < 1 || lr_step_epochs < 1) {
        throw Error(ErrorCode::InvalidArgument, "epochs, batch_size and lr_step_epochs must be >= 1");
    }
    if (!(lr_gamma > 0.0 && lr_gamma <= 1.0)) {
        throw Error(ErrorCode::InvalidArgument, fmt::format("lr_gamma {} outside (0, 1]", lr_gamma));
    }
    if (!(initial_lr > 0.0) || !std::isfinite(initial_lr)) {
        throw Error(ErrorCode::InvalidArgument, "initial_lr must be positive");
    }
    if (!(momentum >= 0.0 && momentum < 1.0)) {
        throw Error(ErrorCode::InvalidArgument, fmt::format("momentum {} outside [0, 1)", momentum));
    }
    if (backbone_id != kTinyCnnBackbone) {
        throw Error(ErrorCode::UnsupportedBackbone,
                    fmt::format("backbone '{}' is not available; supported: {}", backbone_id, kTinyCnnBackbone));
    }
}

double TrainConfig::lr_at(int epoch) const {
    return initial_lr * std::pow(lr_gamma, epoch / lr_step_epochs);
}

nlohmann::ordered_json epoch_to_json(const EpochRecord& r) {
    nlohmann::ordered_json doc;
    doc["epoch"] = r.epoch;
    doc["lr"] = r.lr;
    doc["train_loss"] = r.train_loss;
    doc["val_accuracy"] = r.val_accuracy;
    return doc;
}

TinyCnnClassifier::TinyCnnClassifier(backends::BackendInfo info, TinyCnn network)
        : m_info(std::move(info)), m_network(std::move(network)) {
    if (m_info.manifest.class_labels.size() != static_cast<std::size_t>(m_network.classes())) {
        throw Error(ErrorCode::ShapeMismatch, "label count differs from the network's output size");
    }
}

ClassScores TinyCnnClassifier::classify(const cv::Mat& crop) const {
    backends::check_crop_shape(crop, input_size_px());
    const auto prob = m_network.probabilities(TinyCnn::preprocess(crop));
    std::vector<ClassScores::Entry> entries;
    for (std::size_t i = 0; i < prob.size(); ++i) {
        entries.emplace_back(labels()[i], prob[i]);
    }
    return ClassScores(std::move(entries));
}

nlohmann::ordered_json TinyCnnClassifier::to_artifact() const {
    nlohmann::ordered_json doc;
    doc["kind"] = kTinyCnnArtifactKind;
    doc["classes"] = m_network.classes();
    doc["params"] = m_network.params();
    return doc;
}

std::shared_ptr<const TinyCnnClassifier> TinyCnnClassifier::from_artifact(const backends::ModelManifest& manifest,
                                                                          const nlohmann::json& artifact) {
    try {
        TinyCnn net(artifact.at("classes").get<int>());
        const auto params = artifact.at("params").get<std::vector<double>>();
        if (params.size() != net.params().size()) {
            throw Error(ErrorCode::ShapeMismatch,
                        fmt::format("tiny-cnn artifact has {} parameters, expected {}", params.size(),
                                    net.params().size()));
        }
        net.params() = params;
        return make_model(manifest, std::move(net));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, fmt::format("bad tiny-cnn artifact: {}", e.what()));
    }
}

void register_finetune_backends() {
    static std::once_flag once;
    std::call_once(once, [] {
        backends::register_artifact_kind(kTinyCnnArtifactKind,
                                         [](const backends::ModelManifest& m, const nlohmann::json& artifact) {
                                             if (m.task != backends::Task::classifier) {
                                                 throw Error(ErrorCode::UnsupportedTask,
                                                             "tiny-cnn artifacts are classifiers");
                                             }
                                             backends::BackendHandle h;
                                             h.task = backends::Task::classifier;
                                             h.classifier = TinyCnnClassifier::from_artifact(m, artifact);
                                             return h;
                                         });
    });
}

TrainResult train(const std::vector<datakit::CropRecord>& train_crops,
                  const std::vector<datakit::CropRecord>& val_crops, const TrainConfig& config,
                  const std::filesystem::path& work_dir) {
    config.validate();
    if (train_crops.empty() || val_crops.empty()) {
        throw Error(ErrorCode::EmptyDataset, "training needs non-empty train and validation crops");
    }
    std::set<std::string> distinct;
    for (const auto& c : train_crops) {
        distinct.insert(c.label);
    }
    if (distinct.size() < 2) {
        throw Error(ErrorCode::TooFewClasses,
                    fmt::format("training crops carry {} distinct label(s); at least 2 needed", distinct.size()));
    }
    const std::vector<std::string> labels(distinct.begin(), distinct.end());
    std::map<std::string, int> index;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        index[labels[i]] = static_cast<int>(i);
    }
    int size_px = 0;
    const auto train_set = load_samples(train_crops, index, size_px);
    const auto val_set = load_samples(val_crops, index, size_px);

    Rng rng(config.seed);
    TinyCnn net = TinyCnn::initialized(static_cast<int>(labels.size()), rng);
    const auto manifest = model_manifest(labels, size_px, net.params().size());
    std::vector<double> velocity(net.params().size(), 0.0);
    std::vector<double> grad(net.params().size());
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);

    std::ofstream log;
    if (!work_dir.empty()) {
        std::filesystem::create_directories(work_dir);
        log.open(work_dir / "train_log.jsonl", std::ios::trunc);
        if (!log) {
            throw Error(ErrorCode::IoError, fmt::format("cannot write '{}'", (work_dir / "train_log.jsonl").string()));
        }
    }

    TrainResult result;
    TinyCnn best = net;
    double best_accuracy = -1.0;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const double lr = config.lr_at(epoch);
        rng.shuffle(order);
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
            std::fill(grad.begin(), grad.end(), 0.0);
            for (std::size_t k = start; k < end; ++k) {
                const auto& s = train_set[order[k]];
                loss_sum += net.accumulate_gradient(s.input, s.label, grad);
            }
            const double scale = 1.0 / static_cast<double>(end - start);
            auto& params = net.params();
            for (std::size_t i = 0; i < params.size(); ++i) {
                velocity[i] = config.momentum * velocity[i] + grad[i] * scale;
                params[i] -= lr * velocity[i];
            }
        }
        const EpochRecord record{epoch, lr, loss_sum / static_cast<double>(train_set.size()),
                                 accuracy_of(net, val_set)};
        result.history.epochs.push_back(record);
        if (record.val_accuracy > best_accuracy) {
            best_accuracy = record.val_accuracy;
            best = net;
            result.history.best_epoch = epoch;
            if (!work_dir.empty()) {
                auto checkpoint = make_model(manifest, best)->to_artifact();
                checkpoint["epoch"] = epoch;
                write_file(work_dir / "checkpoint_best.json", checkpoint.dump() + "\n");
            }
        }
        if (log.is_open()) {
            log << epoch_to_json(record).dump() << '\n' << std::flush;
        }
    }
    result.model = make_model(manifest, std::move(best));
    return result;
}

double ClassifierEvaluation::accuracy() const {
    return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

double ClassifierEvaluation::class_accuracy(std::size_t label) const {
    if (support[label] == 0) {
        return std::numeric_limits<double>::quiet_NaN();
    }
    return static_cast<double>(confusion[label][label]) / static_cast<double>(support[label]);
}

nlohmann::ordered_json ClassifierEvaluation::to_json() const {
    nlohmann::ordered_json doc;
    doc["accuracy"] = accuracy();
    doc["correct"] = correct;
    doc["total"] = total;
    doc["labels"] = labels;
    nlohmann::ordered_json per_class = nlohmann::ordered_json::object();
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (support[i] > 0) {
            per_class[labels[i]] = class_accuracy(i);
        }
    }
    doc["per_class_accuracy"] = std::move(per_class);
    doc["confusion"] = confusion;
    return doc;
}

ClassifierEvaluation evaluate_classifier(const backends::Classifier& classifier,
                                         const std::vector<datakit::CropRecord>& crops) {
    if (crops.empty()) {
        throw Error(ErrorCode::EmptyDataset, "no crops to evaluate");
    }
    const auto& manifest = classifier.info().manifest;
    ClassifierEvaluation eval;
    eval.labels = manifest.class_labels;
    const std::size_t n = eval.labels.size();
    eval.confusion.assign(n, std::vector<std::size_t>(n, 0));
    eval.support.assign(n, 0);
    for (const auto& c : crops) {
        const auto it = std::find(eval.labels.begin(), eval.labels.end(), c.label);
        if (it == eval.labels.end()) {
            throw Error(ErrorCode::InvalidArgument,
                        fmt::format("crop label '{}' is not among the classifier's labels", c.label));
        }
        const std::size_t truth = static_cast<std::size_t>(it - eval.labels.begin());
        cv::Mat pixels = load_image(c.crop_path).pixels;
        const int px = manifest.input_size_px;
        if (px > 0 && (pixels.cols != px || pixels.rows != px)) {
            cv::Mat resized;
            cv::resize(pixels, resized, cv::Size(px, px), 0, 0, cv::INTER_AREA);
            pixels = resized;
        }
        const std::size_t predicted = classifier.classify(pixels).top().index;
        ++eval.confusion[truth][predicted];
        ++eval.support[truth];
        eval.correct += truth == predicted;
        ++eval.total;
    }
    return eval;
}

backends::ModelManifest export_model(const TinyCnnClassifier& model, const std::filesystem::path& zoo_dir,
                                     const ExportMetadata& metadata) {
    if (metadata.model_id.empty() || metadata.version.empty()) {
        throw Error(ErrorCode::InvalidArgument, "exported models need a model_id and version");
    }
    std::error_code ec;
    std::filesystem::create_directories(zoo_dir, ec);
    if (ec) {
        throw Error(ErrorCode::IoError, fmt::format("cannot create '{}': {}", zoo_dir.string(), ec.message()));
    }
    backends::ModelManifest m = model.info().manifest;
    m.model_id = metadata.model_id;
    m.version = metadata.version;
    m.description = metadata.description;
    m.region_tags = metadata.region_tags;
    m.artifact_path = metadata.model_id + ".artifact.json";
    write_file(zoo_dir / m.artifact_path, model.to_artifact().dump() + "\n");
    m.checksum = sha256_file(zoo_dir / m.artifact_path);
    m.base_dir = zoo_dir;
    save_manifest(zoo_dir / (metadata.model_id + ".manifest.json"), m);
    return m;
}

std::vector<datakit::CropRecord> make_color_patch_crops(const std::filesystem::path& dir,
                                                        const std::vector<std::string>& labels, int per_label,
                                                        int crop_size_px, std::uint64_t seed) {
    if (labels.empty() || per_label < 1 || crop_size_px < 8) {
        throw Error(ErrorCode::InvalidArgument, "colour patches need labels, a count and a crop size >= 8");
    }
    Rng rng(seed);
    std::vector<datakit::CropRecord> records;
    for (int i = 0; i < per_label; ++i) {
        for (const auto& label : labels) {
            cv::Mat img(crop_size_px, crop_size_px, CV_8UC3);
            for (int y = 0; y < crop_size_px; ++y) {
                for (int x = 0; x < crop_size_px; ++x) {
                    const auto v = static_cast<uchar>(80 + rng.below(97));
                    img.at<cv::Vec3b>(y, x) = cv::Vec3b(v, v, v);
                }
            }
            const double side = rng.uniform(0.5, 0.9);
            const int w = std::max(1, static_cast<int>(side * crop_size_px));
            const int h = std::max(1, static_cast<int>(rng.uniform(0.5, 0.9) * crop_size_px));
            const int x0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(crop_size_px - w + 1)));
            const int y0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(crop_size_px - h + 1)));
            const cv::Scalar colour = backends::label_color(label, labels, rng.uniform(0.6, 1.0)) *
                                      rng.uniform(0.7, 1.0);
            cv::rectangle(img, cv::Rect(x0, y0, w, h), colour, cv::FILLED);
            const auto path = dir / datakit::label_directory(label) / fmt::format("patch_{:05}.png", i);
            save_image(path, img);
            records.push_back({path, label, path.string(), BBox(0, 0, 1, 1), 1.0});
        }
    }
    datakit::write_crop_manifest(dir / datakit::kCropManifestName, records);
    return records;
}

}  // namespace trapkit::finetune
