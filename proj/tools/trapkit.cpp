// trapkit command-line interface. Every subcommand prints JSON (or the requested
// file) on success; failures print one {"error": {...}} line on stderr and exit 1.

#include "backends/manifest.h"
#include "backends/synthetic.h"
#include "core/csv.h"
#include "core/error.h"
#include "core/image.h"
#include "datakit/catalog.h"
#include "datakit/crops.h"
#include "datakit/split.h"
#include "evalboard/leaderboard.h"
#include "export/annotate.h"
#include "export/coco.h"
#include "export/exif.h"
#include "export/md_json.h"
#include "export/scrub.h"
#include "finetune/train.h"
#include "service/config.h"
#include "service/runtime.h"
#include "service/server.h"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>
#include <unistd.h>

#include <cstdio>
#include <iostream>

namespace fs = std::filesystem;
using namespace trapkit;
using Json = nlohmann::ordered_json;

namespace {

void emit(const std::string& text, const std::string& out) {
    if (out.empty() || out == "-") {
        std::cout << text;
        std::cout.flush();
    } else {
        write_file(out, text);
    }
}

void emit_json(const Json& doc, const std::string& out = {}) {
    emit(exporter::dump_canonical(doc), out);
}

pipeline::ProgressSink progress_bar(const char* what) {
    if (!isatty(STDERR_FILENO)) {
        return {};
    }
    return [what](std::size_t done, std::size_t total) {
        std::fprintf(stderr, "\r%s %zu/%zu", what, done, total);
        if (done == total) {
            std::fputc('\n', stderr);
        }
    };
}

std::string resolve_model_dir(const std::string& flag) {
    if (!flag.empty()) {
        return flag;
    }
    return service::process_env("TRAPKIT_MODEL_DIR").value_or("models");
}

// Results files name images relative to the batch input; `images` (or the results
// file's own directory) anchors them.
std::vector<pipeline::PipelineResult> load_results(const std::string& path, const std::string& images,
                                                   double clf_threshold) {
    auto results = exporter::parse_md_json_text(read_file(path), clf_threshold);
    service::anchor(results, images.empty() ? fs::path(path).parent_path() : fs::path(images));
    return results;
}

// MegaDetector-batch files do not record image sizes; COCO needs them.
void fill_dimensions(std::vector<pipeline::PipelineResult>& results, const fs::path& root) {
    for (auto& r : results) {
        if (r.error || r.image.has_dimensions()) {
            continue;
        }
        const fs::path p(r.image.path);
        const Image img = load_image(p.is_relative() ? root / p : p);
        r.image.width_px = img.width();
        r.image.height_px = img.height();
    }
}

struct PipelineFlags {
    std::string model_dir;
    std::string detector;
    std::string classifier;
    pipeline::PipelineConfig config;

    void add(CLI::App* cmd, bool workers) {
        cmd->add_option("--model-dir", model_dir, "Model zoo directory (default $TRAPKIT_MODEL_DIR or ./models)");
        cmd->add_option("--detector", detector, "Detector id or id@version (default: first detector)");
        cmd->add_option("--classifier", classifier, "Classifier id or id@version");
        cmd->add_option("--det-threshold", config.det_threshold, "Detection confidence threshold")
                ->capture_default_str();
        cmd->add_option("--clf-threshold", config.clf_threshold, "Classification threshold for review")
                ->capture_default_str();
        cmd->add_option("--crop-size", config.crop_size_px, "Crop side; overridden by the classifier input size")
                ->capture_default_str();
        if (workers) {
            cmd->add_option("--workers", config.workers, "Images processed concurrently")->capture_default_str();
        }
    }

    std::optional<std::string> classifier_id() const {
        return classifier.empty() ? std::nullopt : std::optional(classifier);
    }
};

std::vector<ImageRef> split_records(const fs::path& input) {
    std::vector<ImageRef> records;
    if (fs::is_directory(input)) {
        // Location is the first directory level below the input; time comes from EXIF.
        for (auto ref : service::collect_images(input)) {
            const fs::path rel = fs::path(ref.path).lexically_relative(input);
            if (std::distance(rel.begin(), rel.end()) > 1) {
                ref.location_id = rel.begin()->string();
            }
            const auto scan = exporter::scan_metadata(read_file(ref.path));
            ref.capture_time = scan.capture_time;
            ref.gps = scan.gps;
            ref.path = rel.generic_string();
            records.push_back(std::move(ref));
        }
        return records;
    }
    const auto rows = parse_csv(read_file(input));
    if (rows.empty()) {
        throw Error(ErrorCode::ParseError, fmt::format("{} is empty", input.string()));
    }
    const auto& header = rows[0];
    auto column = [&](const char* name) -> std::optional<std::size_t> {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (header[i] == name) {
                return i;
            }
        }
        return std::nullopt;
    };
    const auto path_col = column("path");
    if (!path_col) {
        throw Error(ErrorCode::ParseError, fmt::format("{} lacks a 'path' column", input.string()));
    }
    const auto loc_col = column("location_id");
    const auto time_col = column("capture_time");
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        auto cell = [&](std::optional<std::size_t> c) -> std::string {
            return c && *c < row.size() ? row[*c] : std::string();
        };
        ImageRef ref;
        ref.path = cell(path_col);
        if (auto v = cell(loc_col); !v.empty()) {
            ref.location_id = v;
        }
        if (auto v = cell(time_col); !v.empty()) {
            ref.capture_time = parse_timestamp(v);
        }
        records.push_back(std::move(ref));
    }
    return records;
}

void add_synth(CLI::App& app) {
    auto* cmd = app.add_subcommand("synth", "Write a synthetic corpus with sidecars and matching synthetic models");
    static std::string out, models;
    static std::vector<std::string> labels{"opossum", "raccoon", "skunk"};
    static backends::CorpusSpec spec;
    static backends::SyntheticDetectorConfig det;
    static int clf_size = 64;
    cmd->add_option("--out", out, "Corpus directory")->required();
    cmd->add_option("--models", models, "Also write 'synthetic-detector' and 'synthetic-classifier' here");
    cmd->add_option("--count", spec.image_count, "Images")->capture_default_str();
    cmd->add_option("--seed", spec.seed, "Corpus seed")->capture_default_str();
    cmd->add_option("--labels", labels, "Class labels")->delimiter(',')->capture_default_str();
    cmd->add_option("--jitter", det.jitter_sigma, "Detector box jitter sigma")->capture_default_str();
    cmd->add_option("--drop-rate", det.drop_rate, "Detector drop rate")->capture_default_str();
    cmd->add_option("--spurious-rate", det.spurious_rate, "Detector spurious rate")->capture_default_str();
    cmd->add_option("--detector-seed", det.seed, "Detector noise seed")->capture_default_str();
    cmd->add_option("--classifier-size", clf_size, "Classifier input size")->capture_default_str();
    cmd->callback([] {
        const auto paths = backends::write_synthetic_corpus(out, labels, spec);
        Json doc{{"images", paths.size()}, {"corpus", out}};
        if (!models.empty()) {
            doc["detector"] = backends::write_synthetic_detector_model(models, "synthetic-detector", det).key();
            doc["classifier"] =
                    backends::write_synthetic_classifier_model(models, "synthetic-classifier", labels, clf_size).key();
        }
        emit_json(doc);
    });
}

void add_detect(CLI::App& app) {
    auto* cmd = app.add_subcommand("detect", "Run detection (and classification) on one image");
    static PipelineFlags flags;
    static std::string in, out, annotate;
    flags.add(cmd, false);
    cmd->add_option("--in", in, "Image file")->required()->check(CLI::ExistingFile);
    cmd->add_option("--out", out, "Result file (default stdout)");
    cmd->add_option("--annotate", annotate, "Write an annotated copy of the image here");
    cmd->callback([] {
        service::ModelRegistry registry(resolve_model_dir(flags.model_dir));
        service::BatchRequest request{in, flags.detector, flags.classifier_id(), flags.config};
        const std::string doc = service::run_batch_document(request, registry);
        emit(doc, out);
        if (!annotate.empty()) {
            auto results = exporter::parse_md_json_text(doc, flags.config.clf_threshold);
            exporter::render_annotated_file(in, annotate, results.at(0));
        }
    });
}

void add_batch(CLI::App& app) {
    auto* cmd = app.add_subcommand("batch", "Run the pipeline over a directory of images");
    static PipelineFlags flags;
    static std::string in, out;
    flags.add(cmd, true);
    cmd->add_option("--in", in, "Image directory or file")->required()->check(CLI::ExistingPath);
    cmd->add_option("--out", out, "MegaDetector-batch JSON output (default stdout)");
    cmd->callback([] {
        service::ModelRegistry registry(resolve_model_dir(flags.model_dir));
        service::BatchRequest request{in, flags.detector, flags.classifier_id(), flags.config};
        emit(service::run_batch_document(request, registry, progress_bar("batch")), out);
    });
}

void add_video(CLI::App& app) {
    auto* cmd = app.add_subcommand("video", "Classify a video by per-frame majority vote");
    static PipelineFlags flags;
    static std::string in, out;
    static double fps_cap = 30.0;
    flags.add(cmd, true);
    cmd->add_option("--in", in, "Video file or frame-sequence directory")->required()->check(CLI::ExistingPath);
    cmd->add_option("--fps-cap", fps_cap, "Frame sampling cap")->capture_default_str();
    cmd->add_option("--out", out, "Write the full video result JSON here");
    cmd->callback([] {
        service::ModelRegistry registry(resolve_model_dir(flags.model_dir));
        service::VideoRequest request{in, flags.detector, flags.classifier_id(), flags.config, fps_cap};
        const std::string text = service::run_video_document(request, registry, progress_bar("frames"));
        if (!out.empty()) {
            write_file(out, text);
        }
        const auto doc = Json::parse(text);
        emit_json({{"video", doc["video"]},
                   {"final_label", doc["final_label"]},
                   {"vote_tally", doc["vote_tally"]},
                   {"frame_count", doc["frame_count"]},
                   {"effective_fps", doc["effective_fps"]}});
    });
}

void add_triage(CLI::App& app) {
    auto* cmd = app.add_subcommand("triage", "Partition results into confident and review sets");
    static std::string results, out;
    static double threshold = 0.98;
    cmd->add_option("--results", results, "MegaDetector-batch JSON")->required()->check(CLI::ExistingFile);
    cmd->add_option("--threshold", threshold, "Classification confidence threshold")->capture_default_str();
    cmd->add_option("--out", out, "Output file (default stdout)");
    cmd->callback([] {
        if (!(threshold >= 0.0 && threshold <= 1.0)) {
            throw Error(ErrorCode::InvalidArgument, fmt::format("threshold {} outside [0, 1]", threshold));
        }
        const auto parsed = exporter::parse_md_json_text(read_file(results), threshold);
        emit_json(service::triage_summary(parsed, threshold), out);
    });
}

void add_split(CLI::App& app) {
    auto* cmd = app.add_subcommand("split", "Leakage-aware train/val/test split");
    static std::string in, out, seasons;
    static std::string strategy = "random";
    static datakit::SplitSpec spec;
    cmd->add_option("--in", in, "Image directory, or CSV with path[,location_id][,capture_time]")
            ->required()
            ->check(CLI::ExistingPath);
    cmd->add_option("--strategy", strategy, "random, location, time or season")->capture_default_str();
    cmd->add_option("--fractions", spec.fractions, "Split fractions")->delimiter(',')->capture_default_str();
    cmd->add_option("--seed", spec.seed, "Shuffle seed")->capture_default_str();
    cmd->add_option("--seasons", seasons, "JSON month->season table {\"1\": ..., \"12\": ...}");
    cmd->add_option("--out", out, "Output file (default stdout)");
    cmd->callback([] {
        spec.strategy = datakit::split_strategy_from_string(strategy);
        if (!seasons.empty()) {
            spec.seasons = datakit::SeasonTable::from_json(nlohmann::json::parse(read_file(seasons)));
        }
        const auto records = split_records(in);
        const auto assignment = datakit::split_dataset(records, spec);
        emit_json(datakit::split_to_json(records, assignment, spec), out);
    });
}

void add_crops(CLI::App& app) {
    auto* cmd = app.add_subcommand("crops", "Build a classification crop dataset from detections");
    static std::string results, labels, out, images;
    static int crop_size = 64;
    cmd->add_option("--results", results, "MegaDetector-batch JSON")->required()->check(CLI::ExistingFile);
    cmd->add_option("--labels", labels, "CSV image,label keyed like the results' file entries")
            ->required()
            ->check(CLI::ExistingFile);
    cmd->add_option("--images", images, "Directory the result paths are relative to");
    cmd->add_option("--out", out, "Crop dataset directory")->required();
    cmd->add_option("--crop-size", crop_size, "Crop side in pixels")->capture_default_str();
    cmd->callback([] {
        const auto parsed = load_results(results, images, 0.98);
        const fs::path root = images.empty() ? fs::path(results).parent_path() : fs::path(images);
        std::map<std::string, std::string> anchored;
        for (const auto& [image, label] : datakit::read_image_labels(labels)) {
            anchored[fs::path(image).is_relative() ? (root / image).string() : image] = label;
        }
        const auto crops = datakit::build_crop_dataset(parsed, anchored, out, crop_size);
        std::map<std::string, std::size_t> per_label;
        for (const auto& c : crops) {
            ++per_label[c.label];
        }
        emit_json({{"crops", crops.size()},
                   {"per_label", per_label},
                   {"manifest", (fs::path(out) / datakit::kCropManifestName).string()}});
    });
}

void add_train(CLI::App& app) {
    auto* cmd = app.add_subcommand("train", "Fine-tune a classifier on crop manifests");
    static std::string train_manifest, val_manifest, work_dir, export_dir;
    static finetune::TrainConfig config;
    static finetune::ExportMetadata meta{"finetuned-classifier", "1.0", "", {}};
    cmd->add_option("--train", train_manifest, "Training crop manifest")->required()->check(CLI::ExistingFile);
    cmd->add_option("--val", val_manifest, "Validation crop manifest")->required()->check(CLI::ExistingFile);
    cmd->add_option("--work-dir", work_dir, "Receives train_log.jsonl and checkpoint_best.json");
    cmd->add_option("--epochs", config.epochs)->capture_default_str();
    cmd->add_option("--batch-size", config.batch_size)->capture_default_str();
    cmd->add_option("--lr", config.initial_lr, "Initial learning rate")->capture_default_str();
    cmd->add_option("--momentum", config.momentum)->capture_default_str();
    cmd->add_option("--lr-step", config.lr_step_epochs, "Epochs per learning-rate step")->capture_default_str();
    cmd->add_option("--lr-gamma", config.lr_gamma)->capture_default_str();
    cmd->add_option("--backbone", config.backbone_id)->capture_default_str();
    cmd->add_option("--seed", config.seed)->capture_default_str();
    cmd->add_option("--export-dir", export_dir, "Export the best model into this zoo directory");
    cmd->add_option("--model-id", meta.model_id)->capture_default_str();
    cmd->add_option("--version", meta.version)->capture_default_str();
    cmd->add_option("--description", meta.description);
    cmd->add_option("--region", meta.region_tags, "Region tag (repeatable)");
    cmd->callback([] {
        config.validate();
        const auto result = finetune::train(datakit::read_crop_manifest(train_manifest),
                                            datakit::read_crop_manifest(val_manifest), config, work_dir);
        const auto& best = result.history.epochs.at(static_cast<std::size_t>(result.history.best_epoch));
        Json doc{{"classes", result.model->labels()},
                 {"epochs", result.history.epochs.size()},
                 {"best_epoch", result.history.best_epoch},
                 {"best_val_accuracy", best.val_accuracy}};
        if (!export_dir.empty()) {
            doc["exported"] = finetune::export_model(*result.model, export_dir, meta).key();
        }
        emit_json(doc);
    });
}

void add_eval(CLI::App& app) {
    auto* cmd = app.add_subcommand("eval", "Evaluate a classifier on a crop manifest");
    static std::string model_dir, model, crops, out;
    cmd->add_option("--model-dir", model_dir, "Model zoo directory");
    cmd->add_option("--model", model, "Classifier id or id@version")->required();
    cmd->add_option("--crops", crops, "Crop manifest")->required()->check(CLI::ExistingFile);
    cmd->add_option("--out", out, "Output file (default stdout)");
    cmd->callback([] {
        service::ModelRegistry registry(resolve_model_dir(model_dir));
        const auto handle = registry.get(model, backends::Task::classifier);
        emit_json(finetune::evaluate_classifier(*handle.classifier, datakit::read_crop_manifest(crops)).to_json(),
                  out);
    });
}

void add_export(CLI::App& app) {
    auto* cmd = app.add_subcommand("export", "Convert results to COCO, sorted folders or annotated images");
    static std::string results, format = "coco", out, images;
    static double clf_threshold = 0.98;
    cmd->add_option("--results", results, "MegaDetector-batch JSON")->required()->check(CLI::ExistingFile);
    cmd->add_option("--format", format, "coco, md, folders or annotated")
            ->check(CLI::IsMember({"coco", "md", "folders", "annotated"}))
            ->capture_default_str();
    cmd->add_option("--images", images, "Directory the result paths are relative to");
    cmd->add_option("--out", out, "Output file (coco, md) or directory (folders, annotated)")->required();
    cmd->add_option("--clf-threshold", clf_threshold)->capture_default_str();
    cmd->callback([] {
        if (format == "coco" || format == "md") {
            auto parsed = exporter::parse_md_json_text(read_file(results), clf_threshold);
            if (format == "coco") {
                fill_dimensions(parsed, images.empty() ? fs::path(results).parent_path() : fs::path(images));
            }
            emit_json(format == "coco" ? exporter::to_coco(parsed) : exporter::to_md_json(parsed), out);
            return;
        }
        const auto parsed = load_results(results, images, clf_threshold);
        if (format == "folders") {
            const auto manifest = exporter::separate_folders(parsed, out);
            emit_json(exporter::folders_manifest_to_json(manifest), (fs::path(out) / "folders.json").string());
            emit_json({{"copied", manifest.size()}, {"manifest", (fs::path(out) / "folders.json").string()}});
            return;
        }
        std::set<std::string> taken;
        std::size_t written = 0;
        for (const auto& r : parsed) {
            if (r.error) {
                continue;
            }
            const auto dest = exporter::unique_destination(out, fs::path(r.image.path).filename(), taken);
            exporter::render_annotated_file(r.image.path, dest, r);
            ++written;
        }
        emit_json({{"annotated", written}, {"out", out}});
    });
}

void add_scrub(CLI::App& app) {
    auto* cmd = app.add_subcommand("scrub", "Remove or coarsen GPS metadata before sharing");
    static std::string in, out, results, images, mode = "remove";
    static exporter::ScrubPolicy policy;
    static bool keep_people = false;
    cmd->add_option("--in", in, "Image directory (ignored with --results)");
    cmd->add_option("--results", results, "Scrub the images of a results file, excluding person images");
    cmd->add_option("--images", images, "Directory the result paths are relative to");
    cmd->add_option("--out", out, "Destination directory")->required();
    cmd->add_option("--gps", mode, "remove or grid")->check(CLI::IsMember({"remove", "grid"}))->capture_default_str();
    cmd->add_option("--grid", policy.grid_degrees, "Grid size in degrees")->capture_default_str();
    cmd->add_flag("--keep-people", keep_people, "Do not exclude images with person detections");
    cmd->callback([] {
        policy.gps_mode = exporter::gps_mode_from_string(mode);
        policy.exclude_person_images = !keep_people;
        policy.validate();
        exporter::ScrubReport report;
        if (!results.empty()) {
            report = exporter::scrub_results(load_results(results, images, 0.98), out, policy);
        } else if (!in.empty()) {
            std::vector<exporter::ScrubInput> inputs;
            for (const auto& ref : service::collect_images(in)) {
                inputs.push_back({ref.path, false});
            }
            report = exporter::scrub_metadata(inputs, out, policy);
        } else {
            throw Error(ErrorCode::InvalidArgument, "scrub needs --in or --results");
        }
        emit_json(report.to_json(), (fs::path(out) / "scrub_report.json").string());
        emit_json(report.to_json());
    });
}

void add_fetch(CLI::App& app) {
    auto* cmd = app.add_subcommand("fetch", "Download and unpack a catalog dataset (resumable)");
    static std::string catalog, dataset, dest;
    static datakit::FetchOptions options;
    cmd->add_option("--catalog", catalog, "Catalog JSON")->required()->check(CLI::ExistingFile);
    cmd->add_option("--dataset", dataset, "Dataset id")->required();
    cmd->add_option("--dest", dest, "Destination directory")->required();
    cmd->add_option("--connections", options.connections)->capture_default_str();
    cmd->add_option("--chunk-size", options.chunk_size)->capture_default_str();
    cmd->callback([] {
        const auto entries = datakit::load_catalog(catalog);
        const auto handle = datakit::fetch_dataset(datakit::find_dataset(entries, dataset), dest, options);
        emit_json({{"dataset_id", handle.dataset_id},
                   {"root", handle.root.string()},
                   {"files", handle.file_count},
                   {"downloaded", handle.downloaded}});
    });
}

void add_zoo(CLI::App& app) {
    auto* zoo = app.add_subcommand("zoo", "Model zoo and leaderboard");
    zoo->require_subcommand(1);
    static std::string model_dir, manifest, test_set, submission, model_id, store, test_set_id;
    static std::int64_t params = 0;

    auto* list = zoo->add_subcommand("list", "List models");
    list->add_option("--model-dir", model_dir, "Model zoo directory");
    list->callback([] { emit_json(service::ModelRegistry(resolve_model_dir(model_dir)).summaries_json()); });

    auto* add = zoo->add_subcommand("add", "Verify a model and copy it into the zoo");
    add->add_option("--manifest", manifest, "Model manifest")->required()->check(CLI::ExistingFile);
    add->add_option("--model-dir", model_dir, "Model zoo directory");
    add->callback([] {
        auto m = backends::load_manifest(manifest);
        backends::load_backend(m);  // checksum and loadability
        const fs::path dir = resolve_model_dir(model_dir);
        const fs::path artifact = m.resolved_artifact();
        fs::create_directories(dir);
        if (fs::weakly_canonical(artifact.parent_path()) != fs::weakly_canonical(dir)) {
            fs::copy_file(artifact, dir / artifact.filename(), fs::copy_options::overwrite_existing);
        }
        m.artifact_path = artifact.filename().string();
        backends::save_manifest(dir / (m.model_id + ".manifest.json"), m);
        emit_json({{"added", m.key()}, {"model_dir", dir.string()}});
    });

    auto* score = zoo->add_subcommand("score", "Score a submission against a hidden test set");
    score->add_option("--test-set", test_set, "Hidden test set JSON")->required()->check(CLI::ExistingFile);
    score->add_option("--submission", submission, "MegaDetector-batch JSON")->required()->check(CLI::ExistingFile);
    score->add_option("--model-id", model_id)->required();
    score->add_option("--params", params, "Parameter count")->required();
    score->add_option("--store", store, "Leaderboard store directory")->required();
    score->callback([] {
        evalboard::Leaderboard board(store);
        auto set = evalboard::HiddenTestSet::load(test_set);
        const std::string id = set.id();
        board.register_test_set(std::move(set));
        const auto record = board.evaluate_submission(nlohmann::json::parse(read_file(submission)), id, model_id, params);
        emit_json(evalboard::record_to_json(record));
    });

    auto* board = zoo->add_subcommand("board", "Print a leaderboard");
    board->add_option("--store", store, "Leaderboard store directory")->required();
    board->add_option("--test-set-id", test_set_id)->required();
    board->callback([] { emit_json(evalboard::Leaderboard(store).leaderboard_json(test_set_id)); });
}

void add_serve(CLI::App& app) {
    auto* cmd = app.add_subcommand("serve", "Run the HTTP API");
    static std::map<std::string, std::string> flags;
    static const std::vector<std::pair<const char*, const char*>> keys{
            {"config", "Config file (JSON)"},
            {"host", "Bind address"},
            {"port", "Port (0 picks a free one)"},
            {"model_dir", "Model zoo directory"},
            {"data_dir", "Uploads, test sets and leaderboard store"},
            {"job_workers", "Concurrent jobs"},
            {"queue_capacity", "Waiting jobs before 429"},
            {"pipeline_workers", "Images in flight per job"},
            {"max_image_upload_bytes", "Image upload cap"},
            {"max_video_upload_bytes", "Video upload cap"},
            {"operator_token", "Token marking feedback as verified"}};
    for (const auto& [key, help] : keys) {
        std::string flag = key;
        std::replace(flag.begin(), flag.end(), '_', '-');
        cmd->add_option_function<std::string>("--" + flag, [k = std::string(key)](const std::string& v) { flags[k] = v; },
                                              help);
    }
    cmd->callback([] {
        service::Server server(service::resolve_service_config(flags));
        const int port = server.bind();
        spdlog::info("listening on {}:{}", server.config().host, port);
        std::cout << Json{{"listening", fmt::format("{}:{}", server.config().host, port)}}.dump() << std::endl;
        server.run();
    });
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"trapkit: camera-trap detection, classification and evaluation toolkit"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(exporter::kGenerator));
    std::string log_level = "warn";
    app.add_option("--log-level", log_level, "trace, debug, info, warn, error")->capture_default_str();
    app.parse_complete_callback([&] { spdlog::set_level(spdlog::level::from_str(log_level)); });

    add_detect(app);
    add_batch(app);
    add_video(app);
    add_triage(app);
    add_split(app);
    add_crops(app);
    add_train(app);
    add_eval(app);
    add_export(app);
    add_scrub(app);
    add_fetch(app);
    add_zoo(app);
    add_serve(app);
    add_synth(app);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const Error& e) {
        std::cerr << service::error_json(e.code(), e.what()).dump() << std::endl;
        return 1;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << service::error_json(ErrorCode::ParseError, e.what()).dump() << std::endl;
        return 1;
    } catch (const std::exception& e) {
        std::cerr << Json{{"error", {{"code", "InternalError"}, {"message", e.what()}}}}.dump() << std::endl;
        return 1;
    }
    return 0;
}
