#include "backends/backend.h"
#include "backends/manifest.h"
#include "backends/onnx.h"
#include "backends/synthetic.h"
#include "core/checksum.h"
#include "core/error.h"
#include "core/image.h"
#include "support.h"

#include <doctest.h>

using namespace trapkit;
using namespace trapkit::backends;

namespace {

ErrorCode code_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("no error thrown");
    return ErrorCode::InvalidArgument;
}

const std::vector<std::string> kLabels{"opossum", "raccoon", "skunk"};

}  // namespace

TEST_CASE("manifest json round trip") {
    ModelManifest m;
    m.model_id = "clf";
    m.version = "2.1";
    m.task = Task::classifier;
    m.class_labels = kLabels;
    m.artifact_path = "clf.onnx";
    m.checksum = "00";
    m.input_size_px = 224;
    m.description = "d";
    m.region_tags = {"amazon"};
    m.parameter_count = 1234;
    const auto back = manifest_from_json(nlohmann::json::parse(manifest_to_json(m).dump()));
    CHECK(back.model_id == "clf");
    CHECK(back.task == Task::classifier);
    CHECK(back.class_labels == kLabels);
    CHECK(back.parameter_count == 1234);
    CHECK(back.key() == "clf@2.1");
    CHECK(code_of([] { manifest_from_json(nlohmann::json::parse(R"({"model_id":"x"})")); }) ==
          ErrorCode::ParseError);
    auto bad_task = nlohmann::json::parse(manifest_to_json(m).dump());
    bad_task["task"] = "segmenter";
    CHECK(code_of([&] { manifest_from_json(bad_task); }) == ErrorCode::UnsupportedTask);
}

TEST_CASE("load_backend verifies artifact and checksum") {
    testing::TempDir dir;
    auto manifest = write_synthetic_detector_model(dir.path(), "det");
    CHECK_NOTHROW(load_backend(load_manifest(dir / "det.manifest.json")));

    auto missing = manifest;
    missing.artifact_path = "nope.json";
    CHECK(code_of([&] { load_backend(missing); }) == ErrorCode::ArtifactNotFound);

    auto tampered = manifest;
    tampered.checksum = std::string(64, '0');
    CHECK(code_of([&] { load_backend(tampered); }) == ErrorCode::ChecksumMismatch);

    auto wrong_task = manifest;
    wrong_task.task = Task::classifier;
    wrong_task.class_labels = kLabels;
    CHECK(code_of([&] { load_backend(wrong_task); }) == ErrorCode::UnsupportedTask);

    write_file(dir / "odd.json", R"({"kind":"mystery"})");
    auto unknown = manifest;
    unknown.artifact_path = "odd.json";
    unknown.checksum = sha256_file(dir / "odd.json");
    CHECK(code_of([&] { load_backend(unknown); }) == ErrorCode::UnsupportedTask);
}

TEST_CASE("registered artifact kinds are dispatched") {
    testing::TempDir dir;
    register_artifact_kind("test-kind", [](const ModelManifest& m, const nlohmann::json&) {
        BackendHandle h;
        h.task = Task::detector;
        h.detector = load_synthetic_detector(m, nlohmann::json::object()).detector;
        return h;
    });
    write_file(dir / "a.json", R"({"kind":"test-kind"})");
    ModelManifest m;
    m.model_id = "t";
    m.version = "1";
    m.artifact_path = "a.json";
    m.base_dir = dir.path();
    m.checksum = sha256_file(dir / "a.json");
    CHECK(load_backend(m).detector != nullptr);
}

TEST_CASE("noise-free synthetic detector returns the sidecar") {
    testing::TempDir dir;
    const std::vector<SceneObject> objects{{BBox(0.1, 0.1, 0.3, 0.2), DetectionCategory::animal, "raccoon"},
                                           {BBox(0.6, 0.5, 0.2, 0.4), DetectionCategory::person, ""}};
    write_synthetic_image(dir / "img.png", 320, 240, objects, kLabels, 5);
    const auto handle = load_backend(write_synthetic_detector_model(dir.path(), "det"));
    const auto dets = handle.detector->detect(load_image(dir / "img.png"), 0.0);
    REQUIRE(dets.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(dets[i].bbox() == objects[i].bbox);
        CHECK(dets[i].category() == objects[i].category);
        CHECK(dets[i].confidence() == 1.0);
    }
    write_file(dir / "bare.png", read_file(dir / "img.png"));
    CHECK(handle.detector->detect(load_image(dir / "bare.png"), 0.0).empty());
    CHECK(code_of([&] { handle.detector->detect(load_image(dir / "img.png"), 1.5); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("perturbed synthetic detector is seeded and threshold-monotone") {
    testing::TempDir dir;
    std::vector<SceneObject> objects;
    for (int i = 0; i < 6; ++i) {
        objects.push_back({BBox(0.05 + 0.15 * i, 0.1, 0.1, 0.2), DetectionCategory::animal, "skunk"});
    }
    write_synthetic_image(dir / "img.png", 320, 240, objects, kLabels, 5);
    SyntheticDetectorConfig config;
    config.jitter_sigma = 0.05;
    config.drop_rate = 0.3;
    config.spurious_rate = 0.5;
    config.seed = 9;
    const auto a = load_backend(write_synthetic_detector_model(dir / "a", "det", config));
    const auto b = load_backend(write_synthetic_detector_model(dir / "b", "det", config));
    const Image img = load_image(dir / "img.png");
    const auto low = a.detector->detect(img, 0.0);
    CHECK(low == b.detector->detect(img, 0.0));
    const auto high = a.detector->detect(img, 0.6);
    for (const auto& d : high) {
        CHECK(d.confidence() >= 0.6);
        CHECK(std::find(low.begin(), low.end(), d) != low.end());
    }
    for (std::size_t i = 1; i < low.size(); ++i) {
        CHECK(low[i - 1].confidence() >= low[i].confidence());
    }
}

TEST_CASE("malformed sidecar is a backend error") {
    testing::TempDir dir;
    write_synthetic_image(dir / "img.png", 64, 64, {}, kLabels, 1);
    write_file(sidecar_path(dir / "img.png"), "[{\"bbox\": [0, 0]}]");
    const auto handle = load_backend(write_synthetic_detector_model(dir.path(), "det"));
    CHECK(code_of([&] { handle.detector->detect(load_image(dir / "img.png"), 0.0); }) == ErrorCode::BackendError);
}

TEST_CASE("synthetic classifier reads label colours") {
    testing::TempDir dir;
    const auto handle = load_backend(write_synthetic_classifier_model(dir.path(), "clf", kLabels, 32));
    for (const auto& label : kLabels) {
        const cv::Mat crop(32, 32, CV_8UC3, label_color(label, kLabels));
        const auto scores = handle.classifier->classify(crop);
        CHECK(scores.top().label == label);
        CHECK(scores.top().probability == 1.0);
        CHECK(scores.labels() == kLabels);
    }
    const cv::Mat grey(32, 32, CV_8UC3, cv::Scalar(128, 128, 128));
    CHECK(handle.classifier->classify(grey).top().probability == doctest::Approx(1.0 / 3));
    // Partial saturation lowers the top probability.
    const cv::Mat pale(32, 32, CV_8UC3, label_color("skunk", kLabels, 0.3));
    const auto pale_scores = handle.classifier->classify(pale);
    CHECK(pale_scores.top().label == "skunk");
    CHECK(pale_scores.top().probability < 0.98);
    CHECK(pale_scores.top().probability > 0.5);
    CHECK(code_of([&] { handle.classifier->classify(cv::Mat(16, 16, CV_8UC3)); }) == ErrorCode::ShapeMismatch);
}

TEST_CASE("onnx artifacts that do not load are reported") {
    testing::TempDir dir;
    write_file(dir / "m.onnx", "not a model");
    ModelManifest m;
    m.model_id = "o";
    m.version = "1";
    m.artifact_path = "m.onnx";
    m.base_dir = dir.path();
    m.checksum = sha256_file(dir / "m.onnx");
    m.input_size_px = 640;
    const ErrorCode code = code_of([&] { load_backend(m); });
    CHECK((code == ErrorCode::BackendError || code == ErrorCode::UnsupportedTask));
}
