// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
// Expected values come from the oracles in tests/, the system libexif and RapidJSON,
// or fixed constants; none are read back from the library under test.

#include "backends/synthetic.h"
#include "core/error.h"
#include "core/image.h"
#include "core/rng.h"
#include "datakit/split.h"
#include "evalboard/leaderboard.h"
#include "evalboard/metrics.h"
#include "exif_scanner.h"
#include "export/coco.h"
#include "export/exif.h"
#include "export/md_json.h"
#include "export/scrub.h"
#include "finetune/train.h"
#include "oracles.h"
#include "schema_check.h"
#include "service/config.h"
#include "service/runtime.h"
#include "service/server.h"
#include "support.h"
#include "video/video.h"

#include <fmt/format.h>
#include <httplib.h>
#include <json.hpp>
#include <opencv2/videoio.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <thread>

using namespace trapkit;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::vector<std::string> kLabels{"opossum", "raccoon", "skunk"};

struct Outcome {
    bool pass = true;
    std::vector<std::string> notes;

    // Records a check; failed checks are listed first in the report line.
    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            notes.insert(notes.begin(), "FAILED " + what);
        }
    }
    void note(const std::string& text) { notes.push_back(text); }
};

// Everything the criteria share: the 200-image corpus with sidecars, its models and
// the pipeline results of the noise-free detector.
struct World {
    testing::TempDir dir{"trapkit-acceptance"};
    fs::path corpus_dir = dir / "corpus";
    fs::path model_dir = dir / "models";
    std::vector<fs::path> corpus;
    double corpus_seconds = 0.0;

    World() {
        const auto start = std::chrono::steady_clock::now();
        backends::write_synthetic_detector_model(model_dir, "oracle");
        backends::SyntheticDetectorConfig perturbed;
        perturbed.drop_rate = 0.10;
        perturbed.spurious_rate = 0.05;
        perturbed.seed = 2024;
        backends::write_synthetic_detector_model(model_dir, "perturbed", perturbed);
        backends::write_synthetic_classifier_model(model_dir, "colour", kLabels, 64);
        backends::CorpusSpec spec;
        spec.image_count = 200;
        corpus = backends::write_synthetic_corpus(corpus_dir, kLabels, spec);
        corpus_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
};

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

DetectionCategory md_category(const std::string& id) {
    if (id == "1") {
        return DetectionCategory::animal;
    }
    if (id == "2") {
        return DetectionCategory::person;
    }
    if (id == "3") {
        return DetectionCategory::vehicle;
    }
    throw std::runtime_error("unexpected category " + id);
}

// The brute-force matcher's view of a submission, read straight from the JSON text.
std::vector<oracle::RefImage> reference_images(const json& submission, const fs::path& corpus_dir) {
    std::map<std::string, oracle::RefImage> by_file;
    for (const auto& entry : submission["images"]) {
        auto& img = by_file[entry["file"].get<std::string>()];
        for (const auto& d : entry["detections"]) {
            const auto b = d["bbox"];
            img.preds.push_back({BBox(b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()),
                                 md_category(d["category"].get<std::string>()), d["conf"].get<double>()});
        }
    }
    std::vector<oracle::RefImage> images;
    for (auto& [file, img] : by_file) {
        for (const auto& obj : backends::read_sidecar(corpus_dir / file)) {
            img.gts.push_back({obj.bbox, obj.category});
        }
        images.push_back(std::move(img));
    }
    return images;
}

std::string batch_document(World& w, const std::string& detector, double det_threshold) {
    service::ModelRegistry registry(w.model_dir);
    service::BatchRequest request;
    request.input = w.corpus_dir;
    request.detector_id = detector;
    request.config.det_threshold = det_threshold;
    return service::run_batch_document(request, registry);
}

Outcome synthetic_end_to_end(World& w) {
    Outcome out;
    const auto start = std::chrono::steady_clock::now();
    evalboard::Leaderboard board({}, evalboard::EvalProtocol{0.5, 0.0});
    board.register_test_set(evalboard::HiddenTestSet::from_sidecars("synthetic-200", w.corpus));

    const auto exact = board.evaluate_submission(json::parse(batch_document(w, "oracle", 0.0)), "synthetic-200",
                                                 "oracle", 1);
    out.require(exact.precision == 1.0 && exact.recall == 1.0 && exact.map_score == 1.0,
                fmt::format("oracle P/R/mAP = {}/{}/{}", exact.precision, exact.recall, exact.map_score));
    out.note(fmt::format("oracle P=R=mAP={}", exact.map_score));

    const auto submission = json::parse(batch_document(w, "perturbed", 0.0));
    const auto got = board.evaluate_submission(submission, "synthetic-200", "perturbed", 1);
    const auto want = oracle::reference_metrics(reference_images(submission, w.corpus_dir), 0.0);
    out.require(got.precision == want.precision && got.recall == want.recall && got.map_score == want.map,
                fmt::format("perturbed {}/{}/{} vs reference {}/{}/{}", got.precision, got.recall, got.map_score,
                            want.precision, want.recall, want.map));
    out.require(want.precision < 1.0 && want.recall < 1.0, "perturbation changed nothing");
    out.note(fmt::format("perturbed P={:.6f} R={:.6f} mAP={:.6f} bit-equal to reference", got.precision, got.recall,
                         got.map_score));

    const double elapsed = seconds_since(start) + w.corpus_seconds;
    out.require(elapsed < 60.0, "runtime under 60 s");
    out.note(fmt::format("{:.1f} s incl. corpus", elapsed));
    return out;
}

Outcome metric_oracle_equivalence() {
    Outcome out;
    const auto start = std::chrono::steady_clock::now();
    std::size_t instances = 0, mismatches = 0;
    oracle::for_each_grid_instance(4, 4, [&](const auto& preds, const auto& gts) {
        evalboard::ImageEval img;
        for (std::size_t k = 0; k < preds.size(); ++k) {
            img.preds.emplace_back(preds[k].box.to_bbox(oracle::kPaletteGrid), preds[k].category, 0.9 - 0.1 * k);
        }
        for (const auto& g : gts) {
            img.gts.push_back({g.box.to_bbox(oracle::kPaletteGrid), g.category});
        }
        const auto got = evalboard::evaluate_detections({img}, 0.0);
        const auto want = oracle::exact_metrics(preds, gts);
        ++instances;
        mismatches += !(got.precision == want.precision.to_double() && got.recall == want.recall.to_double() &&
                        got.map_score == want.map_recipe && std::abs(got.map_score - want.map.to_double()) <= 1e-12);
    });
    // Sequences of length <= 4 over 5 gt boxes and 10 labelled pred boxes.
    const std::size_t expected = (1 + 5 + 25 + 125 + 625) * (1 + 10 + 100 + 1000 + 10000);
    out.require(instances == expected, fmt::format("{} instances, expected {}", instances, expected));
    out.require(mismatches == 0, fmt::format("{} mismatching instances", mismatches));
    const double elapsed = seconds_since(start);
    out.require(elapsed < 300.0, "runtime under 5 min");
    out.note(fmt::format("{} instances, {} mismatches, {:.1f} s", instances, mismatches, elapsed));
    return out;
}

Outcome triage_arithmetic() {
    Outcome out;
    std::vector<evalboard::TriageItem> items;
    for (int i = 0; i < 1000; ++i) {
        // 900 at or above 0.98 (828 of them correct), 100 below.
        const double score = i < 900 ? 0.98 + 0.02 * (i % 3) / 3.0 : 0.5 + 0.4 * (i % 7) / 7.0;
        items.push_back({score, i < 828 || (i >= 900 && i % 2 == 0)});
    }
    const auto m = evalboard::triage_metrics(items, 0.98);
    out.require(m.coverage == 0.90, fmt::format("coverage {}", m.coverage));
    out.require(m.accuracy_above && *m.accuracy_above == 0.92,
                fmt::format("accuracy_above {}", m.accuracy_above.value_or(-1)));
    out.note(fmt::format("coverage={} accuracy_above={}", m.coverage, m.accuracy_above.value_or(-1)));
    return out;
}

fs::path write_mjpg(const fs::path& path, double fps, int frames) {
    cv::VideoWriter writer(path.string(), cv::VideoWriter::fourcc('M', 'J', 'P', 'G'), fps, cv::Size(64, 48));
    if (!writer.isOpened()) {
        throw std::runtime_error("cannot write " + path.string());
    }
    for (int i = 0; i < frames; ++i) {
        writer.write(cv::Mat(48, 64, CV_8UC3, cv::Scalar(2 * i, 40, 90)));
    }
    return path;
}

Outcome video_protocol(World& w) {
    Outcome out;
    for (const auto& [fps, want_frames, want_fps] :
         {std::tuple{60.0, std::size_t{60}, 30.0}, std::tuple{24.0, std::size_t{48}, 24.0}}) {
        const auto path = write_mjpg(w.dir / fmt::format("clip_{}.avi", fps), fps, static_cast<int>(2 * fps));
        auto source = video::open_video(path);
        const auto frames = video::extract_frames(*source, 30.0);
        out.require(frames.frames.size() == want_frames && std::abs(frames.effective_fps - want_fps) < 1e-6,
                    fmt::format("2 s at {} fps gave {} frames at {}", fps, frames.frames.size(), frames.effective_fps));
        out.note(fmt::format("{}fps->{} frames@{}", fps, frames.frames.size(), frames.effective_fps));
    }

    constexpr int kTrials = 10000, kFrames = 31;
    constexpr double kFrameError = 0.2;
    Rng rng(31);
    int correct = 0;
    for (int t = 0; t < kTrials; ++t) {
        std::vector<video::Vote> votes;
        for (int f = 0; f < kFrames; ++f) {
            votes.push_back({rng.bernoulli(kFrameError) ? "other" : "agouti", rng.uniform(0.5, 1.0)});
        }
        correct += video::majority_vote(votes).final_label == "agouti";
    }
    const double accuracy = static_cast<double>(correct) / kTrials;
    const double expected = oracle::majority_correct_probability(kFrames, kFrameError);
    out.require(accuracy > 0.97, fmt::format("video accuracy {}", accuracy));
    out.require(std::abs(accuracy - expected) <= 0.005,
                fmt::format("accuracy {} vs binomial tail {}", accuracy, expected));
    out.note(fmt::format("MC accuracy={:.4f} oracle={:.6f}", accuracy, expected));
    return out;
}

Outcome fine_tuning(World& w) {
    Outcome out;
    const auto start = std::chrono::steady_clock::now();
    const std::vector<std::string> labels{"Cuniculus", "Dasyprocta", "Pecari"};
    const auto train_crops = finetune::make_color_patch_crops(w.dir / "crops/train", labels, 200, 32, 11);
    const auto val_crops = finetune::make_color_patch_crops(w.dir / "crops/val", labels, 50, 32, 12);

    const finetune::TrainConfig config;
    out.require(config.epochs == 60 && config.batch_size == 128 && config.optimizer == finetune::Optimizer::sgd &&
                        config.lr_step_epochs == 20,
                "default recipe is 60 epochs, batch 128, SGD, step 20");
    const auto result = finetune::train(train_crops, val_crops, config, w.dir / "train");

    bool lr_exact = result.history.epochs.size() == 60;
    for (const auto& r : result.history.epochs) {
        lr_exact = lr_exact && r.lr == 0.01 * std::pow(0.1, std::floor(r.epoch / 20.0));
    }
    out.require(lr_exact, "lr equals 0.01 * 0.1^floor(epoch / 20) at every epoch");
    const auto& best = result.history.epochs.at(result.history.best_epoch);
    out.require(best.val_accuracy >= 0.95, fmt::format("val accuracy {}", best.val_accuracy));
    const double elapsed = seconds_since(start);
    out.require(elapsed < 300.0, "runtime under 5 min");
    out.note(fmt::format("best val acc={:.4f} (epoch {}), lr exact over {} epochs, {:.1f} s", best.val_accuracy,
                         best.epoch, result.history.epochs.size(), elapsed));
    return out;
}

std::vector<pipeline::PipelineResult> golden_results() {
    using pipeline::ScoredDetection;
    auto make = [](std::string path, std::vector<ScoredDetection> dets) {
        pipeline::PipelineResult r;
        r.image.path = std::move(path);
        r.image.width_px = 400;
        r.image.height_px = 400;
        r.detections = std::move(dets);
        r.is_empty = r.detections.empty();
        return r;
    };
    auto det = [](double x, double y, double w, double h, DetectionCategory c, double conf,
                  std::optional<ClassScores> scores = std::nullopt) {
        return ScoredDetection{Detection(BBox(x, y, w, h), c, conf), std::move(scores)};
    };
    std::vector<pipeline::PipelineResult> results;
    results.push_back(make("site_a/IMG_0001.JPG",
                           {det(0.1, 0.2, 0.3, 0.4, DetectionCategory::animal, 0.91234,
                                ClassScores({{"opossum", 0.7}, {"raccoon", 0.2}, {"skunk", 0.1}})),
                            det(0.55554, 0.12346, 0.44446, 0.5, DetectionCategory::person, 0.2)}));
    results.push_back(make("site_a/IMG_0002.JPG", {}));
    pipeline::PipelineResult failed;
    failed.image.path = "site_b/broken.jpg";
    failed.error = "ImageDecodeError: cannot decode";
    results.push_back(failed);
    results.push_back(make("site_b/IMG_0003.JPG",
                           {det(0.0, 0.0, 1.0, 1.0, DetectionCategory::animal, 0.5,
                                ClassScores({{"opossum", 1.0 / 3}, {"raccoon", 1.0 / 3}, {"skunk", 1.0 / 3}})),
                            det(0.9, 0.9, 0.1, 0.1, DetectionCategory::vehicle, 0.0004)}));
    return results;
}

Outcome formats(World& w) {
    Outcome out;
    const std::string golden = read_file(fs::path(TRAPKIT_TEST_DATA_DIR) / "md_golden.json");
    const std::string rendered = exporter::dump_canonical(exporter::to_md_json(golden_results()));
    out.require(rendered == golden, "md json equals the golden file byte for byte");
    out.require(exporter::dump_canonical(exporter::to_md_json(golden_results())) == rendered,
                "md json is stable across runs");

    // parse then serialize returns the same bytes, for the golden and the corpus documents.
    const std::string corpus_doc = batch_document(w, "perturbed", 0.2);
    for (const auto* text : {&golden, &corpus_doc}) {
        out.require(exporter::dump_canonical(exporter::to_md_json(exporter::parse_md_json_text(*text))) == *text,
                    "parse then serialize is the identity");
    }

    auto corpus_results = exporter::parse_md_json_text(corpus_doc);
    for (auto& r : corpus_results) {
        r.image.width_px = 320;
        r.image.height_px = 240;
    }
    std::size_t validated = 0;
    for (const auto& doc : {exporter::to_coco(golden_results()), exporter::to_coco(corpus_results)}) {
        const auto violation = testing::schema_violation(testing::coco_schema_path(), doc.dump());
        out.require(!violation, "COCO schema: " + violation.value_or(""));
        ++validated;
    }
    auto broken = exporter::to_coco(corpus_results);
    broken["annotations"][0].erase("bbox");
    out.require(testing::schema_violation(testing::coco_schema_path(), broken.dump()).has_value(),
                "schema validator rejects an annotation without bbox");

    evalboard::Leaderboard board;
    board.add_record({"MDv6-c", 22'000'000, 0.92, 0.85, 0.84, "md-val", ""});
    board.add_record({"MDv5", 121'000'000, 0.96, 0.73, 0.85, "md-val", ""});
    const auto rows = board.leaderboard("md-val");
    out.require(rows.size() == 2 && rows[0].model_id == "MDv5" && rows[1].model_id == "MDv6-c",
                "MDv5 (mAP .85) ranks above MDv6-c (.84)");
    out.note(fmt::format("golden {} bytes identical, round trip identity, {} COCO docs valid, board: {} > {}",
                         golden.size(), validated, rows.at(0).model_id, rows.at(1).model_id));
    return out;
}

Outcome privacy(World& w) {
    Outcome out;
    const GeoPoint site(-0.9538, -90.9656);
    const auto gps_dir = w.dir / "gps";
    std::set<std::string> person_truth;
    for (const auto& image : w.corpus) {
        write_file(gps_dir / image.filename(), exporter::embed_gps(read_file(image), site));
        fs::copy_file(backends::sidecar_path(image), backends::sidecar_path(gps_dir / image.filename()));
        for (const auto& obj : backends::read_sidecar(image)) {
            if (obj.category == DetectionCategory::person) {
                person_truth.insert(image.filename().string());
            }
        }
    }
    const auto before = testing::libexif_scan(read_file(gps_dir / w.corpus[0].filename()));
    out.require(before.gps_tags > 0, "GPS was embedded before scrubbing");

    service::ModelRegistry registry(w.model_dir);
    service::BatchRequest request;
    request.input = gps_dir;
    request.detector_id = "oracle";
    auto results = exporter::parse_md_json_text(service::run_batch_document(request, registry));
    service::anchor(results, gps_dir);

    const auto removed = exporter::scrub_results(results, w.dir / "scrub_remove", exporter::ScrubPolicy{});
    std::size_t scanned = 0, with_gps = 0;
    std::set<std::string> excluded;
    for (const auto& entry : removed.entries) {
        if (entry.output) {
            ++scanned;
            with_gps += testing::libexif_scan(read_file(*entry.output)).gps_tags > 0;
        } else if (entry.excluded_reason == exporter::kReasonPerson) {
            excluded.insert(fs::path(entry.source).filename().string());
        }
    }
    out.require(scanned + person_truth.size() == w.corpus.size(), "every non-person image was written");
    out.require(with_gps == 0, fmt::format("{} of {} outputs still carry GPS", with_gps, scanned));
    out.require(excluded == person_truth, "excluded set equals the images with a person");
    out.require(removed.to_json()["excluded"].size() == person_truth.size(), "exclusions are reported");

    const auto snapped = exporter::generalize(site, 0.1);
    out.require(snapped.latitude() == -1.0 && snapped.longitude() == -91.0,
                fmt::format("grid maps to ({}, {})", snapped.latitude(), snapped.longitude()));
    exporter::ScrubPolicy grid;
    grid.gps_mode = exporter::GpsMode::grid;
    const auto gridded = exporter::scrub_results(results, w.dir / "scrub_grid", grid);
    bool grid_ok = gridded.output_count() == scanned;
    for (const auto& entry : gridded.entries) {
        if (entry.output) {
            const auto scan = testing::libexif_scan(read_file(*entry.output));
            grid_ok = grid_ok && scan.position && std::abs(scan.position->first + 1.0) < 1e-9 &&
                      std::abs(scan.position->second + 91.0) < 1e-9;
        }
    }
    out.require(grid_ok, "libexif reads (-1.0, -91.0) from every grid output");
    out.note(fmt::format("{} outputs with 0 GPS tags, {} person images excluded and reported, grid (-1.0, -91.0)",
                         scanned, excluded.size()));
    return out;
}

Outcome splitting() {
    Outcome out;
    Rng rng(8);
    std::size_t leaks = 0, nondeterministic = 0, checked = 0, single_group = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const auto n = 2 + rng.below(200);
        const auto locations = 1 + rng.below(12);
        std::vector<ImageRef> records;
        std::vector<std::string> location_of, season_of;
        for (std::size_t i = 0; i < n; ++i) {
            const auto month = 1 + rng.below(12);
            ImageRef r;
            r.path = fmt::format("img_{}.jpg", i);
            r.location_id = fmt::format("L{}", rng.below(locations));
            r.capture_time = parse_timestamp(fmt::format("20{}-{:02}-15T12:00:00", 18 + rng.below(5), month));
            records.push_back(r);
            location_of.push_back(*r.location_id);
            // Meteorological quarters, independent of the year.
            season_of.push_back(std::to_string((month % 12) / 3));
        }
        const auto fractions = trial % 2 ? std::vector<double>{0.7, 0.15, 0.15} : std::vector<double>{0.8, 0.2};
        for (auto strategy : {datakit::SplitStrategy::location, datakit::SplitStrategy::season}) {
            const auto& keys = strategy == datakit::SplitStrategy::location ? location_of : season_of;
            datakit::SplitSpec spec;
            spec.strategy = strategy;
            spec.fractions = fractions;
            spec.seed = rng.next_u64();
            if (std::set<std::string>(keys.begin(), keys.end()).size() < 2) {
                ++single_group;
                continue;
            }
            const auto split = datakit::split_dataset(records, spec);
            std::map<std::string, std::set<std::size_t>> seen;
            for (std::size_t i = 0; i < n; ++i) {
                seen[keys[i]].insert(split.split_of.at(i));
            }
            for (const auto& [key, splits] : seen) {
                leaks += splits.size() != 1;
            }
            ++checked;
        }
        datakit::SplitSpec random;
        random.fractions = fractions;
        random.seed = rng.next_u64();
        nondeterministic += datakit::split_dataset(records, random).split_of !=
                            datakit::split_dataset(records, random).split_of;
    }
    out.require(leaks == 0, fmt::format("{} group keys in more than one split", leaks));
    out.require(nondeterministic == 0, fmt::format("{} random splits differ under one seed", nondeterministic));
    out.note(fmt::format("1000 datasets, {} group splits checked ({} single-group skipped), 0 leaks, random "
                         "splits deterministic",
                         checked, single_group));
    return out;
}

std::string run_command(const std::string& command, int& status) {
    std::string output;
    FILE* pipe = popen(command.c_str(), "r");
    if (!pipe) {
        throw std::runtime_error("cannot run " + command);
    }
    char buf[4096];
    std::size_t n = 0;
    while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) {
        output.append(buf, n);
    }
    status = pclose(pipe);
    return output;
}

std::string quote(const fs::path& p) {
    return "'" + p.string() + "'";
}

Outcome service_parity(World& w) {
    Outcome out;
    service::ServiceConfig config;
    config.port = 0;
    config.model_dir = w.model_dir;
    config.data_dir = w.dir / "service-data";
    config.job_workers = 3;
    service::Server server(config);
    const int port = server.bind();
    std::jthread thread([&] { server.run(); });
    httplib::Client client("127.0.0.1", port);
    client.set_read_timeout(120, 0);

    auto wait_done = [&](const std::string& id) {
        for (int i = 0; i < 60000; ++i) {
            const auto doc = json::parse(client.Get("/jobs/" + id)->body);
            if (doc["state"] == "done" || doc["state"] == "failed") {
                return doc;
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(5));
        }
        throw std::runtime_error("job " + id + " did not finish");
    };

    const json request{{"input", w.corpus_dir.string()}, {"detector_id", "perturbed"}, {"classifier_id", "colour"}};
    auto res = client.Post("/jobs/batch", request.dump(), "application/json");
    if (!res || res->status != 202) {
        throw std::runtime_error("batch submission rejected");
    }
    const auto id = json::parse(res->body)["job_id"].get<std::string>();
    out.require(wait_done(id)["state"] == "done", "API batch job finished");
    const std::string api_bytes = client.Get("/jobs/" + id + "/result")->body;

    int status = 0;
    const std::string cli_bytes =
            run_command(fmt::format("{} batch --in {} --model-dir {} --detector perturbed --classifier colour",
                                    quote(TRAPKIT_CLI_PATH), quote(w.corpus_dir), quote(w.model_dir)),
                        status);
    out.require(status == 0, fmt::format("CLI exit status {}", status));
    out.require(!api_bytes.empty() && api_bytes == cli_bytes,
                fmt::format("API ({} bytes) and CLI ({} bytes) outputs differ", api_bytes.size(), cli_bytes.size()));
    out.note(fmt::format("API == CLI ({} bytes, {} images)", api_bytes.size(), w.corpus.size()));

    // Ten concurrent jobs, each watched by its own poller over HTTP.
    const std::vector<std::string> order{"queued", "running", "done"};
    std::vector<std::string> ids;
    for (int j = 0; j < 10; ++j) {
        const json small{{"input", w.corpus[j].string()}, {"detector_id", j % 2 ? "oracle" : "perturbed"}};
        auto r = client.Post("/jobs/batch", small.dump(), "application/json");
        if (!r || r->status != 202) {
            throw std::runtime_error("concurrent submission rejected");
        }
        ids.push_back(json::parse(r->body)["job_id"].get<std::string>());
    }
    std::vector<std::vector<std::string>> observed(ids.size());
    {
        std::vector<std::jthread> pollers;
        for (std::size_t j = 0; j < ids.size(); ++j) {
            pollers.emplace_back([&, j] {
                httplib::Client c("127.0.0.1", port);
                for (int i = 0; i < 600000; ++i) {
                    const auto state = json::parse(c.Get("/jobs/" + ids[j])->body)["state"].get<std::string>();
                    if (observed[j].empty() || observed[j].back() != state) {
                        observed[j].push_back(state);
                    }
                    if (state == "done" || state == "failed") {
                        return;
                    }
                }
            });
        }
    }
    std::size_t violations = 0;
    for (std::size_t j = 0; j < ids.size(); ++j) {
        const auto job = wait_done(ids[j]);
        violations += job["history"] != json(order);
        // What a poller saw must appear in the legal order, without going back.
        std::size_t k = 0;
        for (const auto& s : observed[j]) {
            while (k < order.size() && order[k] != s) {
                ++k;
            }
            violations += k == order.size();
        }
    }
    out.require(violations == 0, fmt::format("{} state-machine violations", violations));
    out.note("10 concurrent jobs: queued -> running -> done, no skips or reversals");
    server.stop();
    return out;
}

}  // namespace

int main() {
    World world;
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
            {"synthetic end-to-end", [&] { return synthetic_end_to_end(world); }},
            {"metric oracle equivalence", [] { return metric_oracle_equivalence(); }},
            {"triage arithmetic", [] { return triage_arithmetic(); }},
            {"video protocol", [&] { return video_protocol(world); }},
            {"fine-tuning", [&] { return fine_tuning(world); }},
            {"formats", [&] { return formats(world); }},
            {"privacy", [&] { return privacy(world); }},
            {"splitting", [] { return splitting(); }},
            {"service parity", [&] { return service_parity(world); }},
    };
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const auto& [name, run] = criteria[i];
        const auto start = std::chrono::steady_clock::now();
        Outcome outcome;
        try {
            outcome = run();
        } catch (const std::exception& e) {
            outcome.require(false, std::string("exception: ") + e.what());
        }
        failures += !outcome.pass;
        std::string detail;
        for (const auto& n : outcome.notes) {
            detail += (detail.empty() ? "" : "; ") + n;
        }
        std::cout << fmt::format("{} [{}] {} ({:.1f} s): {}\n", outcome.pass ? "PASS" : "FAIL", i + 1, name,
                                 seconds_since(start), detail)
                  << std::flush;
    }
    std::cout << fmt::format("{}/{} criteria passed\n", criteria.size() - failures, criteria.size());
    return failures == 0 ? 0 : 1;
}
