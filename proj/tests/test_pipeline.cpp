#include "backends/synthetic.h"
#include "core/error.h"
#include "core/image.h"
#include "pipeline/pipeline.h"
#include "support.h"

#include <doctest.h>
#include <opencv2/imgproc.hpp>

#include <mutex>

using namespace trapkit;
using namespace trapkit::pipeline;
using backends::SceneObject;

namespace {

const std::vector<std::string> kLabels{"opossum", "raccoon", "skunk"};

struct Models {
    backends::BackendHandle detector;
    backends::BackendHandle classifier;
};

Models load_models(const std::filesystem::path& dir, int crop = 256) {
    return {backends::load_backend(backends::write_synthetic_detector_model(dir, "det")),
            backends::load_backend(backends::write_synthetic_classifier_model(dir, "clf", kLabels, crop))};
}

ImageRef ref(const std::filesystem::path& p) {
    ImageRef r;
    r.path = p.string();
    return r;
}

ScoredDetection classified(double top) {
    const double rest = (1.0 - top) / 2;
    return {Detection(BBox(0.1, 0.1, 0.2, 0.2), DetectionCategory::animal, 0.9),
            ClassScores({{"a", top}, {"b", rest}, {"c", rest}})};
}

}  // namespace

TEST_CASE("square region examples") {
    CHECK(square_region(BBox(0.25, 0.25, 0.5, 0.5), 400, 400) == PixelBox{100, 100, 200, 200});
    // 200x100 box at the top-left: square of side 200 centred on (100, 50), pushed down to y=0.
    CHECK(square_region(BBox(0, 0, 0.5, 0.25), 400, 400) == PixelBox{0, 0, 200, 200});
    // Square larger than the image height is clipped to it.
    CHECK(square_region(BBox(0, 0.1, 1.0, 0.5), 400, 100) == PixelBox{0, 0, 400, 100});
}

TEST_CASE("crop_detection resizes the expected pixels") {
    cv::Mat img(400, 400, CV_8UC3);
    for (int y = 0; y < 400; ++y) {
        for (int x = 0; x < 400; ++x) {
            img.at<cv::Vec3b>(y, x) = cv::Vec3b(x % 256, y % 256, (x + y) % 256);
        }
    }
    const cv::Mat crop = crop_detection(img, BBox(0.25, 0.25, 0.5, 0.5), 256);
    CHECK(crop.rows == 256);
    CHECK(crop.cols == 256);
    cv::Mat expected;
    cv::resize(img(cv::Rect(100, 100, 200, 200)), expected, cv::Size(256, 256), 0, 0, cv::INTER_LINEAR);
    CHECK(cv::norm(crop, expected, cv::NORM_INF) == 0.0);

    const cv::Mat top = crop_detection(img, BBox(0, 0, 0.5, 0.25), 64);
    cv::Mat expected_top;
    cv::resize(img(cv::Rect(0, 0, 200, 200)), expected_top, cv::Size(64, 64), 0, 0, cv::INTER_AREA);
    CHECK(cv::norm(top, expected_top, cv::NORM_INF) == 0.0);

    CHECK_THROWS_AS(crop_detection(img, BBox(0.1, 0.1, 0.0, 0.2), 64), Error);
    try {
        crop_detection(cv::Mat(), BBox(0.1, 0.1, 0.2, 0.2), 64);
        FAIL("expected DegenerateBox");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::DegenerateBox);
    }
}

TEST_CASE("config validation") {
    PipelineConfig c;
    CHECK_NOTHROW(c.validate());
    c.det_threshold = 1.2;
    CHECK_THROWS_AS(c.validate(), Error);
    c = {};
    c.crop_size_px = 4;
    CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("run_image classifies animals only") {
    testing::TempDir dir;
    const auto models = load_models(dir.path());
    backends::write_synthetic_image(dir / "two.png", 320, 240,
                                    {{BBox(0.1, 0.1, 0.25, 0.3), DetectionCategory::animal, "opossum"},
                                     {BBox(0.55, 0.4, 0.3, 0.3), DetectionCategory::animal, "skunk"}},
                                    kLabels, 1);
    backends::write_synthetic_image(dir / "person.png", 320, 240,
                                    {{BBox(0.3, 0.3, 0.2, 0.5), DetectionCategory::person, ""}}, kLabels, 2);
    backends::write_synthetic_image(dir / "empty.png", 320, 240, {}, kLabels, 3);
    const PipelineConfig config;

    const auto two = run_image(ref(dir / "two.png"), *models.detector.detector, models.classifier.classifier.get(), config);
    REQUIRE(two.detections.size() == 2);
    CHECK(two.detections[0].scores.has_value());
    CHECK(two.detections[0].scores->top().label == "opossum");
    CHECK(two.detections[1].scores->top().label == "skunk");
    CHECK(two.image.width_px == 320);
    CHECK_FALSE(two.is_empty);
    CHECK_FALSE(two.needs_review);

    const auto person = run_image(ref(dir / "person.png"), *models.detector.detector, models.classifier.classifier.get(), config);
    REQUIRE(person.detections.size() == 1);
    CHECK_FALSE(person.detections[0].scores.has_value());

    const auto empty = run_image(ref(dir / "empty.png"), *models.detector.detector, models.classifier.classifier.get(), config);
    CHECK(empty.is_empty);
    CHECK_FALSE(empty.needs_review);

    const auto no_clf = run_image(ref(dir / "two.png"), *models.detector.detector, nullptr, config);
    CHECK_FALSE(no_clf.detections[0].scores.has_value());

    write_file(dir / "broken.png", "xx");
    try {
        run_image(ref(dir / "broken.png"), *models.detector.detector, nullptr, config);
        FAIL("expected ImageDecodeError");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::ImageDecodeError);
    }
}

TEST_CASE("backend failures are wrapped with the image path") {
    testing::TempDir dir;
    const auto models = load_models(dir.path());
    backends::write_synthetic_image(dir / "a.png", 64, 64, {}, kLabels, 1);
    write_file(backends::sidecar_path(dir / "a.png"), "{bad json");
    try {
        run_image(ref(dir / "a.png"), *models.detector.detector, nullptr, {});
        FAIL("expected BackendError");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::BackendError);
        CHECK(std::string(e.what()).find("a.png") != std::string::npos);
    }
}

TEST_CASE("run_batch keeps order, records failures and reports progress") {
    testing::TempDir dir;
    const auto models = load_models(dir.path());
    std::vector<ImageRef> refs;
    for (int i = 0; i < 12; ++i) {
        const auto p = dir / ("img" + std::to_string(i) + ".png");
        std::vector<SceneObject> objs;
        for (int k = 0; k < i % 3; ++k) {
            objs.push_back({BBox(0.1 + 0.4 * k, 0.2, 0.3, 0.3), DetectionCategory::animal, kLabels[k]});
        }
        backends::write_synthetic_image(p, 160, 120, objs, kLabels, i);
        refs.push_back(ref(p));
    }
    write_file(dir / "img5.png", "corrupt");

    for (int workers : {1, 4}) {
        PipelineConfig config;
        config.workers = workers;
        std::vector<std::size_t> calls;
        std::mutex m;
        const auto results = run_batch(refs, *models.detector.detector, models.classifier.classifier.get(), config,
                                       [&](std::size_t done, std::size_t total) {
                                           std::lock_guard lock(m);
                                           CHECK(total == refs.size());
                                           calls.push_back(done);
                                       });
        REQUIRE(results.size() == refs.size());
        for (std::size_t i = 0; i < refs.size(); ++i) {
            CHECK(results[i].image.path == refs[i].path);
            if (i == 5) {
                CHECK(results[i].error.has_value());
            } else {
                CHECK_FALSE(results[i].error.has_value());
                CHECK(results[i].detections.size() == i % 3);
            }
        }
        REQUIRE(calls.size() == refs.size());
        for (std::size_t i = 0; i < calls.size(); ++i) {
            CHECK(calls[i] == i + 1);
        }
    }
    CHECK_THROWS_AS(run_batch({}, *models.detector.detector, nullptr, {}), Error);
}

TEST_CASE("threshold monotonicity") {
    testing::TempDir dir;
    backends::SyntheticDetectorConfig noisy;
    noisy.drop_rate = 0.1;
    noisy.spurious_rate = 0.5;
    noisy.jitter_sigma = 0.02;
    noisy.seed = 3;
    const auto det = backends::load_backend(backends::write_synthetic_detector_model(dir.path(), "det", noisy));
    backends::write_synthetic_image(dir / "a.png", 160, 120,
                                    {{BBox(0.1, 0.2, 0.3, 0.3), DetectionCategory::animal, "opossum"},
                                     {BBox(0.5, 0.2, 0.3, 0.3), DetectionCategory::vehicle, ""}},
                                    kLabels, 4);
    std::vector<Detection> previous;
    for (double t : {0.9, 0.7, 0.5, 0.3, 0.1, 0.0}) {
        PipelineConfig config;
        config.det_threshold = t;
        const auto r = run_image(ref(dir / "a.png"), *det.detector, nullptr, config);
        std::vector<Detection> now;
        for (const auto& d : r.detections) {
            now.push_back(d.detection);
        }
        for (const auto& d : previous) {
            CHECK(std::find(now.begin(), now.end(), d) != now.end());
        }
        previous = now;
    }
}

TEST_CASE("triage partitions by classification confidence") {
    std::vector<PipelineResult> results(1000);
    for (int i = 0; i < 1000; ++i) {
        results[i].detections.push_back(classified(i < 900 ? 0.99 : 0.9));
        results[i].is_empty = false;
    }
    const auto part = triage(results, 0.98);
    CHECK(part.confident.size() == 900);
    CHECK(part.review.size() == 100);
    CHECK(triage(results, 0.0).review.empty());
    CHECK(triage(results, 1.0).review.size() == 1000);

    PipelineResult unclassified;
    unclassified.detections.push_back({Detection(BBox(0, 0, 1, 1), DetectionCategory::person, 0.5), std::nullopt});
    CHECK(triage({unclassified}, 1.0).confident.size() == 1);
    CHECK_THROWS_AS(triage(results, 1.5), Error);
}
