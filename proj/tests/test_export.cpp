#include "backends/synthetic.h"
#include "core/error.h"
#include "core/image.h"
#include "core/rng.h"
#include "exif_scanner.h"
#include "schema_check.h"
#include "export/annotate.h"
#include "export/coco.h"
#include "export/exif.h"
#include "export/md_json.h"
#include "export/scrub.h"
#include "support.h"

#include <doctest.h>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <cmath>

using namespace trapkit;
using namespace trapkit::exporter;
using pipeline::PipelineResult;
using pipeline::ScoredDetection;

namespace {

std::string encode(const std::string& ext, int w = 64, int h = 48) {
    cv::Mat img(h, w, CV_8UC3);
    cv::randu(img, 0, 255);
    std::vector<uchar> buf;
    cv::imencode(ext, img, buf);
    return {buf.begin(), buf.end()};
}

cv::Mat decode(const std::string& bytes) {
    return cv::imdecode(std::vector<uchar>(bytes.begin(), bytes.end()), cv::IMREAD_UNCHANGED);
}

bool same_pixels(const cv::Mat& a, const cv::Mat& b) {
    return a.size() == b.size() && a.type() == b.type() && cv::norm(a, b, cv::NORM_INF) == 0.0;
}

PipelineResult make_result(const std::string& path, std::vector<ScoredDetection> detections,
                           int w = 400, int h = 400) {
    PipelineResult r;
    r.image.path = path;
    r.image.width_px = w;
    r.image.height_px = h;
    r.detections = std::move(detections);
    r.is_empty = r.detections.empty();
    return r;
}

ScoredDetection det(double x, double y, double w, double h, DetectionCategory c, double conf,
                    std::optional<ClassScores> scores = std::nullopt) {
    return {Detection(BBox(x, y, w, h), c, conf), std::move(scores)};
}

std::vector<PipelineResult> golden_results() {
    std::vector<PipelineResult> results;
    results.push_back(make_result(
            "site_a/IMG_0001.JPG",
            {det(0.1, 0.2, 0.3, 0.4, DetectionCategory::animal, 0.91234,
                 ClassScores({{"opossum", 0.7}, {"raccoon", 0.2}, {"skunk", 0.1}})),
             det(0.55554, 0.12346, 0.44446, 0.5, DetectionCategory::person, 0.2)}));
    results.push_back(make_result("site_a/IMG_0002.JPG", {}));
    PipelineResult failed;
    failed.image.path = "site_b/broken.jpg";
    failed.error = "ImageDecodeError: cannot decode";
    results.push_back(failed);
    results.push_back(make_result(
            "site_b/IMG_0003.JPG",
            {det(0.0, 0.0, 1.0, 1.0, DetectionCategory::animal, 0.5,
                 ClassScores({{"opossum", 1.0 / 3}, {"raccoon", 1.0 / 3}, {"skunk", 1.0 / 3}})),
             det(0.9, 0.9, 0.1, 0.1, DetectionCategory::vehicle, 0.0004)}));
    return results;
}

}  // namespace

TEST_CASE("md json renders conf with 3 decimals and category ids") {
    const auto doc = to_md_json({make_result("a.jpg", {det(0.1, 0.1, 0.2, 0.2, DetectionCategory::animal, 0.91234)})});
    const auto& d = doc["images"][0]["detections"][0];
    CHECK(d["conf"].get<double>() == 0.912);
    CHECK(d["category"] == "1");
    CHECK(doc["images"][0]["max_detection_conf"].get<double>() == 0.912);
    CHECK(dump_canonical(doc).find("\"conf\": 0.912,") != std::string::npos);
}

TEST_CASE("md json of no results has empty images and fixed categories") {
    const auto doc = to_md_json({});
    CHECK(doc["images"].empty());
    CHECK(doc["detection_categories"].dump() == R"({"1":"animal","2":"person","3":"vehicle"})");
    std::vector<std::string> keys;
    for (const auto& [k, v] : doc.items()) {
        keys.push_back(k);
    }
    CHECK(keys == std::vector<std::string>{"images", "detection_categories", "classification_categories", "info"});
}

TEST_CASE("md json matches the golden file") {
    const std::string golden = read_file(std::filesystem::path(TRAPKIT_TEST_DATA_DIR) / "md_golden.json");
    CHECK(dump_canonical(to_md_json(golden_results())) == golden);
}

TEST_CASE("md json parse and reserialize is the identity") {
    const std::string text = dump_canonical(to_md_json(golden_results()));
    const auto parsed = parse_md_json_text(text);
    REQUIRE(parsed.size() == 4);
    CHECK(parsed[2].error.has_value());
    CHECK(parsed[1].is_empty);
    CHECK(dump_canonical(to_md_json(parsed)) == text);

    // Detections survive within rendering precision.
    const auto original = golden_results();
    for (std::size_t i = 0; i < original.size(); ++i) {
        REQUIRE(parsed[i].detections.size() == original[i].detections.size());
        for (std::size_t j = 0; j < original[i].detections.size(); ++j) {
            const auto& a = original[i].detections[j].detection;
            const auto& b = parsed[i].detections[j].detection;
            CHECK(a.category() == b.category());
            CHECK(std::abs(a.confidence() - b.confidence()) <= 0.0005 + 1e-12);
            CHECK(std::abs(a.bbox().x_min() - b.bbox().x_min()) <= 0.0001 + 1e-12);
            CHECK(std::abs(a.bbox().width() - b.bbox().width()) <= 0.0001 + 1e-12);
            CHECK(original[i].detections[j].scores.has_value() == parsed[i].detections[j].scores.has_value());
        }
    }
    CHECK(parsed[0].detections[0].scores->labels() == std::vector<std::string>{"opossum", "raccoon", "skunk"});
}

TEST_CASE("md json rounding keeps boxes valid at the image edge") {
    const auto doc = to_md_json({make_result("e.jpg", {det(0.12345, 0.99994, 0.87655, 0.00006,
                                                            DetectionCategory::animal, 1.0)})});
    const auto parsed = parse_md_json_text(dump_canonical(doc));
    const auto& box = parsed[0].detections[0].detection.bbox();
    CHECK(box.x_max() <= 1.0 + kBoxEdgeEpsilon);
    CHECK(box.y_max() <= 1.0 + kBoxEdgeEpsilon);
    CHECK(box.height() > 0.0);
}

TEST_CASE("md json parse rejects malformed documents") {
    CHECK_THROWS_AS(parse_md_json_text(std::string_view("{")), Error);
    CHECK_THROWS_AS(parse_md_json_text(std::string_view(R"({"images":[{"file":"a","detections":[{"category":"1","conf":2,"bbox":[0,0,1,1]}]}]})")),
                    Error);
    try {
        parse_md_json_text(std::string_view(R"({"images":[{"file":"a","detections":[{"category":"1","conf":0.5,"bbox":[0,0,1]}]}]})"));
        FAIL("expected ParseError");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::ParseError);
    }
}

TEST_CASE("coco converts boxes to pixels") {
    const auto doc = to_coco({make_result("a.jpg", {det(0.25, 0.25, 0.5, 0.5, DetectionCategory::animal, 0.9)})});
    REQUIRE(doc["annotations"].size() == 1);
    CHECK(doc["annotations"][0]["bbox"].dump() == "[100,100,200,200]");
    CHECK(doc["annotations"][0]["area"] == 40000);
    CHECK(doc["annotations"][0]["image_id"] == doc["images"][0]["id"]);
    CHECK(doc["categories"].size() == 3);
}

TEST_CASE("coco ids are unique and increasing") {
    const auto doc = to_coco(golden_results());
    CHECK(doc["images"].size() == 3);  // the failed image is skipped
    long last = 0;
    for (const auto& a : doc["annotations"]) {
        CHECK(a["id"].get<long>() > last);
        last = a["id"].get<long>();
    }
    CHECK(doc["annotations"].size() == 4);
    CHECK(to_coco({})["annotations"].empty());
}

TEST_CASE("coco output validates against the detection schema") {
    const auto doc = to_coco(golden_results());
    const auto violation = testing::schema_violation(testing::coco_schema_path(), doc.dump());
    CHECK_MESSAGE(!violation, violation.value_or(""));

    // The validator does reject broken documents.
    auto broken = doc;
    broken["annotations"][0]["bbox"].erase(3);
    CHECK(testing::schema_violation(testing::coco_schema_path(), broken.dump()).has_value());
    broken = doc;
    broken["images"][0].erase("width");
    CHECK(testing::schema_violation(testing::coco_schema_path(), broken.dump()).has_value());
}

TEST_CASE("coco requires dimensions and honours the category map") {
    PipelineResult r = make_result("a.jpg", {det(0.1, 0.1, 0.2, 0.2, DetectionCategory::animal, 0.9)});
    r.image.width_px.reset();
    try {
        to_coco({r});
        FAIL("expected MissingDimensions");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::MissingDimensions);
    }
    const CategoryMap species{{"opossum", {7, "opossum"}}};
    const auto doc = to_coco(golden_results(), species);
    CHECK(doc["categories"].size() == 1);
    // Both classified animals have opossum as their (first) top class.
    REQUIRE(doc["annotations"].size() == 2);
    CHECK(doc["annotations"][0]["category_id"] == 7);
}

TEST_CASE("annotated rendering") {
    cv::Mat img(120, 160, CV_8UC3, cv::Scalar(40, 80, 120));
    SUBCASE("empty result leaves pixels untouched") {
        CHECK(same_pixels(render_annotated(img, make_result("x", {}, 160, 120)), img));
    }
    SUBCASE("detections change box perimeter pixels and keep dimensions") {
        const auto out = render_annotated(
                img, make_result("x", {det(0.1, 0.3, 0.3, 0.4, DetectionCategory::animal, 0.8),
                                       det(0.6, 0.5, 0.3, 0.3, DetectionCategory::person, 0.7)},
                                 160, 120));
        CHECK(out.size() == img.size());
        cv::Mat diff;
        cv::absdiff(out, img, diff);
        cv::cvtColor(diff, diff, cv::COLOR_BGR2GRAY);
        CHECK(cv::countNonZero(diff) >= 2 * (48 + 48) + 2 * (48 + 36));
        // Bottom edge of the first box: y 36, height 48.
        CHECK(out.at<cv::Vec3b>(83, 30) != img.at<cv::Vec3b>(83, 30));
    }
    SUBCASE("boxes at the border are clipped") {
        const auto out = render_annotated(
                img, make_result("x", {det(0.0, 0.0, 1.0, 1.0, DetectionCategory::vehicle, 0.99),
                                       det(0.95, 0.95, 0.05, 0.05, DetectionCategory::animal, 0.5)},
                                 160, 120));
        CHECK(out.size() == img.size());
    }
}

TEST_CASE("annotated file output") {
    testing::TempDir dir;
    const auto src = dir / "in.png";
    write_file(src, encode(".png"));
    render_annotated_file(src, dir / "empty.png", make_result(src.string(), {}));
    CHECK(read_file(dir / "empty.png") == read_file(src));
    render_annotated_file(src, dir / "boxes.png",
                          make_result(src.string(), {det(0.2, 0.2, 0.5, 0.5, DetectionCategory::animal, 0.9)}));
    CHECK(load_image(dir / "boxes.png").pixels.size() == load_image(src).pixels.size());
    write_file(dir / "bad.png", "not an image");
    CHECK_THROWS_AS(render_annotated_file(dir / "bad.png", dir / "o.png", make_result("bad", {})), Error);
}

TEST_CASE("separate folders by highest-confidence category") {
    testing::TempDir dir;
    std::vector<PipelineResult> results;
    for (const char* name : {"a.jpg", "b.jpg", "c.jpg", "d.jpg"}) {
        write_file(dir / "in" / name, name);
    }
    results.push_back(make_result((dir / "in/a.jpg").string(), {det(0.1, 0.1, 0.2, 0.2, DetectionCategory::animal, 0.6)}));
    results.push_back(make_result((dir / "in/b.jpg").string(), {}));
    results.push_back(make_result((dir / "in/c.jpg").string(),
                                  {det(0.1, 0.1, 0.2, 0.2, DetectionCategory::person, 0.5),
                                   det(0.5, 0.5, 0.2, 0.2, DetectionCategory::animal, 0.7)}));
    results.push_back(make_result((dir / "in/d.jpg").string(),
                                  {det(0.1, 0.1, 0.2, 0.2, DetectionCategory::vehicle, 0.9)}));
    const auto manifest = separate_folders(results, dir / "out");
    REQUIRE(manifest.size() == results.size());
    CHECK(manifest[0].folder == "animal");
    CHECK(manifest[1].folder == "empty");
    CHECK(manifest[2].folder == "animal");
    CHECK(manifest[3].folder == "vehicle");
    for (const auto& m : manifest) {
        CHECK(std::filesystem::exists(m.destination));
    }
    CHECK(read_file(dir / "out/empty/b.jpg") == "b.jpg");
}

TEST_CASE("separate folders keeps same-named files apart") {
    testing::TempDir dir;
    write_file(dir / "x/img.jpg", "1");
    write_file(dir / "y/img.jpg", "2");
    const auto manifest = separate_folders({make_result((dir / "x/img.jpg").string(), {}),
                                            make_result((dir / "y/img.jpg").string(), {})},
                                           dir / "out");
    CHECK(manifest[0].destination != manifest[1].destination);
    CHECK(read_file(manifest[1].destination) == "2");
}

TEST_CASE("separate folders reports copy failures") {
    testing::TempDir dir;
    try {
        separate_folders({make_result((dir / "missing.jpg").string(), {})}, dir / "out");
        FAIL("expected IoError");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::IoError);
    }
}

TEST_CASE("grid snapping picks the nearest multiple") {
    CHECK(snap_to_grid(-0.9538, 0.1, 90) == -1.0);
    CHECK(snap_to_grid(-90.9656, 0.1, 180) == -91.0);
    const GeoPoint g = generalize(GeoPoint(-0.9538, -90.9656), 0.1);
    CHECK(g.latitude() == -1.0);
    CHECK(g.longitude() == -91.0);
    CHECK(snap_to_grid(89.9, 0.7, 90) <= 90.0);

    // Oracle: scan neighbouring multiples in long double.
    Rng rng(7);
    const double grids[] = {0.1, 0.25, 0.01, 0.5, 1.0, 0.3, 0.05, 1.0 / 3};
    for (int i = 0; i < 20000; ++i) {
        const double g = grids[rng.below(std::size(grids))];
        const double v = rng.uniform(-89.0, 89.0);
        const double out = snap_to_grid(v, g, 90.0);
        const long double base = std::floor(static_cast<long double>(v) / g);
        long double best = 0;
        long double best_dist = 1e9;
        for (int k = -2; k <= 2; ++k) {
            const long double m = (base + k) * static_cast<long double>(g);
            const long double d = std::fabs(m - v);
            if (d < best_dist) {
                best_dist = d, best = m;
            }
        }
        CHECK(std::fabs(static_cast<long double>(out) - best) < 1e-9);
        const double multiples = out / g;
        CHECK(std::abs(multiples - std::round(multiples)) * g < 1e-9);
    }
}

TEST_CASE("embedded GPS is readable by libexif and the in-house reader") {
    for (const std::string ext : {".jpg", ".png"}) {
        CAPTURE(ext);
        const auto ts = parse_timestamp("2023-06-01T12:30:00");
        const std::string bytes = embed_gps(encode(ext), GeoPoint(-0.9538, -90.9656), ts);
        const auto ext_scan = testing::libexif_scan(bytes);
        CHECK(ext_scan.has_exif);
        CHECK(ext_scan.gps_tags == 7);
        REQUIRE(ext_scan.position.has_value());
        CHECK(ext_scan.position->first == doctest::Approx(-0.9538).epsilon(1e-7));
        CHECK(ext_scan.position->second == doctest::Approx(-90.9656).epsilon(1e-7));

        const auto own = scan_metadata(bytes);
        CHECK(own.gps_tag_count == 7);
        REQUIRE(own.gps.has_value());
        CHECK(std::abs(own.gps->latitude() + 0.9538) < 1e-7);
        REQUIRE(own.capture_time.has_value());
        CHECK(*own.capture_time == ts);
        CHECK_FALSE(decode(bytes).empty());
        if (ext == ".png") {
            CHECK(testing::png_crcs_valid(bytes));
        }
    }
}

TEST_CASE("strip removes every GPS tag and keeps the pixels") {
    for (const std::string ext : {".jpg", ".png"}) {
        CAPTURE(ext);
        const std::string original = embed_gps(encode(ext), GeoPoint(12.5, 99.25));
        std::string bytes = original;
        CHECK(strip_gps(bytes) == 7);
        CHECK(bytes.size() == original.size());
        CHECK(testing::libexif_scan(bytes).gps_tags == 0);
        CHECK(testing::libexif_scan(bytes).has_exif);  // the rest of the block survives
        CHECK(scan_metadata(bytes).gps_tag_count == 0);
        CHECK(same_pixels(decode(bytes), decode(original)));
        if (ext == ".png") {
            CHECK(testing::png_crcs_valid(bytes));
        }
        CHECK(strip_gps(bytes) == 0);
    }
}

TEST_CASE("replace writes grid coordinates exactly") {
    for (const std::string ext : {".jpg", ".png"}) {
        CAPTURE(ext);
        std::string bytes = embed_gps(encode(ext), GeoPoint(-0.9538, -90.9656));
        REQUIRE(replace_gps(bytes, GeoPoint(-1.0, -91.0)));
        const auto own = scan_metadata(bytes);
        REQUIRE(own.gps.has_value());
        CHECK(own.gps->latitude() == -1.0);
        CHECK(own.gps->longitude() == -91.0);
        CHECK(own.gps_tag_count == 5);
        const auto ext_scan = testing::libexif_scan(bytes);
        REQUIRE(ext_scan.position.has_value());
        CHECK(ext_scan.position->first == -1.0);
        CHECK(ext_scan.position->second == -91.0);
        if (ext == ".png") {
            CHECK(testing::png_crcs_valid(bytes));
        }
    }
    std::string plain = encode(".jpg");
    CHECK_FALSE(replace_gps(plain, GeoPoint(0, 0)));
}

TEST_CASE("XMP packets with GPS are removed") {
    std::string bytes = encode(".jpg");
    const std::string xmp = std::string("http://ns.adobe.com/xap/1.0/\0", 29) +
                            "<x:xmpmeta><rdf:Description exif:GPSLatitude=\"1,0N\" exif:GPSLongitude=\"2,0E\"/></x:xmpmeta>";
    std::string segment = "\xFF\xE1";
    segment.push_back(static_cast<char>((xmp.size() + 2) >> 8));
    segment.push_back(static_cast<char>((xmp.size() + 2) & 0xFF));
    bytes.insert(2, segment + xmp);
    CHECK(scan_metadata(bytes).gps_tag_count == 2);
    CHECK(strip_gps(bytes) == 2);
    CHECK(scan_metadata(bytes).gps_tag_count == 0);
    CHECK(bytes.find("GPSLatitude") == std::string::npos);
    CHECK_FALSE(decode(bytes).empty());
}

TEST_CASE("malformed metadata is reported as absent") {
    std::string bytes = encode(".jpg");
    const std::string junk = std::string("Exif\0\0", 6) + "II*\0\xff\xff\xff\x7f";
    std::string segment = "\xFF\xE1";
    segment.push_back(0);
    segment.push_back(static_cast<char>(junk.size() + 2));
    bytes.insert(2, segment + junk);
    const auto scan = scan_metadata(bytes);
    CHECK(scan.gps_tag_count == 0);
    CHECK_FALSE(scan.gps.has_value());
    CHECK(strip_gps(bytes) == 0);
    CHECK(scan_metadata("garbage").gps_tag_count == 0);
}

TEST_CASE("scrub excludes person images and removes GPS") {
    testing::TempDir dir;
    std::vector<PipelineResult> results;
    for (int i = 0; i < 4; ++i) {
        const auto path = dir / ("in/img" + std::to_string(i) + (i % 2 ? ".png" : ".jpg"));
        write_file(path, embed_gps(encode(i % 2 ? ".png" : ".jpg"), GeoPoint(-0.9538, -90.9656)));
        std::vector<ScoredDetection> dets;
        if (i == 2) {
            dets.push_back(det(0.1, 0.1, 0.3, 0.3, DetectionCategory::person, 0.9));
        }
        results.push_back(make_result(path.string(), dets));
    }
    write_file(dir / "in/img4.bmp", encode(".bmp"));
    results.push_back(make_result((dir / "in/img4.bmp").string(), {}));

    SUBCASE("remove mode") {
        const auto report = scrub_results(results, dir / "out", ScrubPolicy{});
        CHECK(report.output_count() == 3);
        const auto json = report.to_json();
        REQUIRE(json["excluded"].size() == 2);
        CHECK(json["excluded"][0]["file"] == results[2].image.path);
        CHECK(json["excluded"][0]["reason"] == "person-detected");
        CHECK(json["excluded"][1]["reason"] == "unsupported-format");
        for (const auto& entry : report.entries) {
            if (entry.output) {
                CHECK(testing::libexif_scan(read_file(*entry.output)).gps_tags == 0);
                CHECK(scan_metadata(read_file(*entry.output)).gps_tag_count == 0);
            }
        }
    }
    SUBCASE("grid mode") {
        ScrubPolicy policy;
        policy.gps_mode = GpsMode::grid;
        policy.exclude_person_images = false;
        const auto report = scrub_results(results, dir / "out", policy);
        CHECK(report.output_count() == 4);
        for (const auto& entry : report.entries) {
            if (entry.output) {
                const auto gps = scan_metadata(read_file(*entry.output)).gps;
                REQUIRE(gps.has_value());
                CHECK(gps->latitude() == -1.0);
                CHECK(gps->longitude() == -91.0);
            }
        }
    }
    SUBCASE("policy validation") {
        ScrubPolicy policy;
        policy.gps_mode = GpsMode::grid;
        policy.grid_degrees = 0.0;
        CHECK_THROWS_AS(scrub_results(results, dir / "out", policy), Error);
    }
    SUBCASE("missing input") {
        try {
            scrub_metadata({{dir / "nope.jpg", false}}, dir / "out", ScrubPolicy{});
            FAIL("expected IoError");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::IoError);
        }
    }
}

TEST_CASE("video summary json") {
    video::VideoResult vr;
    vr.video_path = "clip.mp4";
    vr.effective_fps = 30;
    vr.final_label = "opossum";
    vr.vote_tally = {{"opossum", 2}, {"empty", 1}};
    vr.frame_results = {make_result("f0", {det(0.1, 0.1, 0.2, 0.2, DetectionCategory::animal, 0.9,
                                               ClassScores({{"opossum", 0.9}, {"other", 0.1}}))}),
                        make_result("f1", {}), make_result("f2", {})};
    vr.frame_timestamps = {0.0, 1.0 / 30, 2.0 / 30};
    const auto doc = video_result_to_json(vr);
    CHECK(doc["final_label"] == "opossum");
    CHECK(doc["vote_tally"]["opossum"] == 2);
    CHECK(doc["frames"].size() == 3);
    CHECK(doc["classification_categories"]["0"] == "opossum");
}
