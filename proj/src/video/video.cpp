#include "video/video.h"

#include "core/error.h"
#include "core/parallel.h"

#include <fmt/format.h>
#include <opencv2/videoio.hpp>

#include <algorithm>
#include <cmath>
#include <cctype>
#include <mutex>
#include <optional>

namespace trapkit::video {

namespace {

bool is_image_file(const std::filesystem::path& path) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp";
}

class ContainerSource final : public FrameSource {
public:
    explicit ContainerSource(const std::filesystem::path& path) : m_path(path) {
        // FFmpeg first; the generic fallback chain logs noisily on unreadable files.
        for (int api : {static_cast<int>(cv::CAP_FFMPEG), static_cast<int>(cv::CAP_ANY)}) {
            try {
                if (m_capture.open(path.string(), api)) {
                    break;
                }
            } catch (const cv::Exception&) {
            }
            if (api == cv::CAP_FFMPEG && !std::filesystem::exists(path)) {
                break;
            }
        }
        if (!m_capture.isOpened()) {
            throw Error(ErrorCode::VideoDecodeError,
                        fmt::format("cannot open video '{}'", path.string()));
        }
        m_native_fps = m_capture.get(cv::CAP_PROP_FPS);
        const double count = m_capture.get(cv::CAP_PROP_FRAME_COUNT);
        if (!(m_native_fps > 0.0) || !(count >= 1.0)) {
            throw Error(ErrorCode::VideoDecodeError,
                        fmt::format("video '{}' reports no frame rate or frames", path.string()));
        }
        m_frame_count = static_cast<std::size_t>(count);
    }

    std::string path() const override { return m_path.string(); }
    double native_fps() const override { return m_native_fps; }
    double duration_s() const override { return static_cast<double>(m_frame_count) / m_native_fps; }
    std::size_t frame_count() const override { return m_frame_count; }

    Image read_frame(std::size_t index) override {
        if (index < m_position) {
            throw Error(ErrorCode::VideoDecodeError, "frames must be read in order");
        }
        while (m_position < index) {
            if (!m_capture.grab()) {
                throw Error(ErrorCode::VideoDecodeError,
                            fmt::format("'{}' ended before frame {}", m_path.string(), index));
            }
            ++m_position;
        }
        cv::Mat frame;
        if (!m_capture.read(frame) || frame.empty()) {
            throw Error(ErrorCode::VideoDecodeError,
                        fmt::format("cannot decode frame {} of '{}'", index, m_path.string()));
        }
        ++m_position;
        return {frame, std::filesystem::path(fmt::format("{}#frame={}", m_path.string(), index))};
    }

private:
    std::filesystem::path m_path;
    cv::VideoCapture m_capture;
    double m_native_fps = 0.0;
    std::size_t m_frame_count = 0;
    std::size_t m_position = 0;
};

}  // namespace

FrameSequenceSource::FrameSequenceSource(std::filesystem::path dir) : m_dir(std::move(dir)) {
    const auto meta_path = m_dir / kSequenceMetadataFile;
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(read_file(meta_path));
        m_native_fps = meta.at("native_fps").get<double>();
        if (meta.contains("frames")) {
            for (const auto& name : meta.at("frames")) {
                m_frames.push_back(m_dir / name.get<std::string>());
            }
        } else {
            for (const auto& entry : std::filesystem::directory_iterator(m_dir)) {
                if (entry.is_regular_file() && is_image_file(entry.path())) {
                    m_frames.push_back(entry.path());
                }
            }
            std::sort(m_frames.begin(), m_frames.end());
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::VideoDecodeError,
                    fmt::format("bad frame-sequence metadata '{}': {}", meta_path.string(), e.what()));
    } catch (const Error& e) {
        throw Error(ErrorCode::VideoDecodeError, e.what());
    }
    if (!(m_native_fps > 0.0) || m_frames.empty()) {
        throw Error(ErrorCode::VideoDecodeError,
                    fmt::format("frame sequence '{}' has no frames or no frame rate", m_dir.string()));
    }
    m_duration_s = meta.value("duration_s", static_cast<double>(m_frames.size()) / m_native_fps);
}

Image FrameSequenceSource::read_frame(std::size_t index) {
    if (index >= m_frames.size()) {
        throw Error(ErrorCode::VideoDecodeError, fmt::format("frame {} out of range", index));
    }
    try {
        return load_image(m_frames[index]);
    } catch (const Error& e) {
        throw Error(ErrorCode::VideoDecodeError, e.what());
    }
}

std::filesystem::path write_frame_sequence(const std::filesystem::path& dir, double native_fps,
                                           const std::vector<std::filesystem::path>& frame_files) {
    nlohmann::ordered_json meta;
    meta["native_fps"] = native_fps;
    meta["duration_s"] = static_cast<double>(frame_files.size()) / native_fps;
    meta["frames"] = nlohmann::ordered_json::array();
    for (const auto& f : frame_files) {
        meta["frames"].push_back(std::filesystem::relative(f, dir).generic_string());
    }
    write_file(dir / kSequenceMetadataFile, meta.dump(2) + "\n");
    return dir;
}

std::unique_ptr<FrameSource> open_container(const std::filesystem::path& path) {
    return std::make_unique<ContainerSource>(path);
}

std::unique_ptr<FrameSource> open_video(const std::filesystem::path& path) {
    std::error_code ec;
    if (std::filesystem::is_directory(path, ec)) {
        return std::make_unique<FrameSequenceSource>(path);
    }
    if (path.filename() == kSequenceMetadataFile) {
        return std::make_unique<FrameSequenceSource>(path.parent_path());
    }
    if (!std::filesystem::exists(path, ec)) {
        throw Error(ErrorCode::VideoDecodeError, fmt::format("video '{}' not found", path.string()));
    }
    return open_container(path);
}

std::vector<std::size_t> sample_indices(double native_fps, std::size_t frame_count,
                                        double duration_s, double target_fps) {
    if (!(target_fps > 0.0)) {
        throw Error(ErrorCode::InvalidArgument, "target fps must be positive");
    }
    if (frame_count == 0 || !(native_fps > 0.0)) {
        throw Error(ErrorCode::VideoDecodeError, "video has no frames");
    }
    const double fps = std::min(native_fps, target_fps);
    // The epsilon absorbs representation error in products such as 2.0 * 29.97.
    const auto wanted = static_cast<std::size_t>(std::floor(duration_s * fps + 1e-9));
    const std::size_t count = std::max<std::size_t>(1, wanted);
    std::vector<std::size_t> indices;
    indices.reserve(count);
    for (std::size_t k = 0; k < count; ++k) {
        const double t = static_cast<double>(k) / fps;
        const auto native = static_cast<std::size_t>(std::floor(t * native_fps + 1e-9));
        indices.push_back(std::min(native, frame_count - 1));
    }
    return indices;
}

ExtractedFrames extract_frames(FrameSource& source, double target_fps) {
    const auto indices =
            sample_indices(source.native_fps(), source.frame_count(), source.duration_s(), target_fps);
    ExtractedFrames out;
    out.effective_fps = std::min(source.native_fps(), target_fps);
    out.frames.reserve(indices.size());
    for (std::size_t k = 0; k < indices.size(); ++k) {
        out.frames.push_back({k, static_cast<double>(k) / out.effective_fps,
                              source.read_frame(indices[k])});
    }
    return out;
}

VoteOutcome majority_vote(const std::vector<Vote>& votes) {
    if (votes.empty()) {
        throw Error(ErrorCode::EmptyVote, "cannot vote over zero frames");
    }
    std::map<std::string, std::vector<double>> confidences;
    for (const auto& vote : votes) {
        confidences[vote.label].push_back(vote.confidence);
    }

    VoteOutcome outcome;
    std::size_t best_count = 0;
    double best_mean = 0.0;
    // std::map iterates labels in lexicographic order, so strict comparisons below
    // keep the smallest label on a full tie.
    for (auto& [label, confs] : confidences) {
        // Sorting first makes the mean independent of input order.
        std::sort(confs.begin(), confs.end());
        double sum = 0.0;
        for (double c : confs) {
            sum += c;
        }
        const double mean = sum / static_cast<double>(confs.size());
        outcome.tally[label] = confs.size();
        if (confs.size() > best_count || (confs.size() == best_count && mean > best_mean)) {
            best_count = confs.size();
            best_mean = mean;
            outcome.final_label = label;
        }
    }
    return outcome;
}

Vote frame_vote(const pipeline::PipelineResult& result) {
    const pipeline::ScoredDetection* best = nullptr;
    double best_detection_conf = 0.0;
    for (const auto& d : result.detections) {
        best_detection_conf = std::max(best_detection_conf, d.detection.confidence());
        if (d.scores && (!best || d.detection.confidence() > best->detection.confidence())) {
            best = &d;
        }
    }
    if (!best) {
        return {std::string(kEmptyLabel), 1.0 - best_detection_conf};
    }
    const auto top = best->scores->top();
    return {top.label, top.probability};
}

VideoResult classify_video(FrameSource& source, const backends::Detector& detector,
                           const backends::Classifier* classifier,
                           const pipeline::PipelineConfig& config, double target_fps,
                           const pipeline::ProgressSink& progress) {
    config.validate();
    ExtractedFrames extracted = extract_frames(source, target_fps);

    VideoResult result;
    result.video_path = source.path();
    result.effective_fps = extracted.effective_fps;
    result.frame_results.resize(extracted.frames.size());

    std::mutex mutex;
    std::size_t done = 0;
    std::optional<Error> failure;
    parallel_for(extracted.frames.size(), config.workers, [&](std::size_t i) {
        const auto& frame = extracted.frames[i];
        try {
            ImageRef ref;
            ref.path = frame.image.source.string();
            result.frame_results[i] = pipeline::run_decoded(frame.image, ref, detector, classifier, config);
        } catch (const Error& e) {
            std::lock_guard lock(mutex);
            if (!failure) {
                failure = Error(ErrorCode::BackendError,
                                fmt::format("frame {}: {}: {}", frame.index, to_string(e.code()),
                                            e.what()));
            }
        }
        std::lock_guard lock(mutex);
        ++done;
        if (progress) {
            progress(done, extracted.frames.size());
        }
    });
    if (failure) {
        throw *failure;
    }

    std::vector<Vote> votes;
    votes.reserve(result.frame_results.size());
    for (const auto& frame_result : result.frame_results) {
        votes.push_back(frame_vote(frame_result));
    }
    for (const auto& frame : extracted.frames) {
        result.frame_timestamps.push_back(frame.timestamp_s);
    }
    auto outcome = majority_vote(votes);
    result.final_label = std::move(outcome.final_label);
    result.vote_tally = std::move(outcome.tally);
    return result;
}

}  // namespace trapkit::video
