#pragma once

#include "core/image.h"
#include "pipeline/pipeline.h"

#include <json.hpp>

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace trapkit::video {

// Label voted by frames without a classified detection.
inline constexpr std::string_view kEmptyLabel = "empty";
inline constexpr double kDefaultTargetFps = 30.0;
// Metadata file of the frame-sequence container.
inline constexpr std::string_view kSequenceMetadataFile = "video.json";

class FrameSource {
public:
    virtual ~FrameSource() = default;

    virtual std::string path() const = 0;
    virtual double native_fps() const = 0;
    virtual double duration_s() const = 0;
    virtual std::size_t frame_count() const = 0;
    // Frames are requested in non-decreasing index order.
    virtual Image read_frame(std::size_t index) = 0;
};

// A directory of numbered images plus `video.json`:
//   {"native_fps": 60, "duration_s": 2.0, "frames": ["frame_0000.png", ...]}
// "frames" is optional (defaults to the sorted image files in the directory) and
// "duration_s" defaults to frame count / native_fps.
class FrameSequenceSource final : public FrameSource {
public:
    explicit FrameSequenceSource(std::filesystem::path dir);

    std::string path() const override { return m_dir.string(); }
    double native_fps() const override { return m_native_fps; }
    double duration_s() const override { return m_duration_s; }
    std::size_t frame_count() const override { return m_frames.size(); }
    Image read_frame(std::size_t index) override;

private:
    std::filesystem::path m_dir;
    double m_native_fps = 0.0;
    double m_duration_s = 0.0;
    std::vector<std::filesystem::path> m_frames;
};

// Writes a frame-sequence container; returns the directory.
std::filesystem::path write_frame_sequence(const std::filesystem::path& dir, double native_fps,
                                           const std::vector<std::filesystem::path>& frame_files);

// Container files (mp4, avi, ...) decoded through the system media library.
std::unique_ptr<FrameSource> open_container(const std::filesystem::path& path);

// Directory or video.json -> FrameSequenceSource, anything else -> open_container.
// Throws VideoDecodeError.
std::unique_ptr<FrameSource> open_video(const std::filesystem::path& path);

struct FrameSample {
    std::size_t index;
    double timestamp_s;
    Image image;
};

struct ExtractedFrames {
    std::vector<FrameSample> frames;
    double effective_fps = 0.0;
};

// Even-time sampling at min(native, target) fps: floor(duration * fps) frames
// (at least one), frame k at t = k / fps.
std::vector<std::size_t> sample_indices(double native_fps, std::size_t frame_count,
                                        double duration_s, double target_fps);
ExtractedFrames extract_frames(FrameSource& source, double target_fps = kDefaultTargetFps);

struct Vote {
    std::string label;
    double confidence = 0.0;
};

struct VoteOutcome {
    std::string final_label;
    std::map<std::string, std::size_t> tally;
};

// Most frequent label; ties go to the higher mean confidence, then the
// lexicographically smallest label. Throws EmptyVote.
VoteOutcome majority_vote(const std::vector<Vote>& votes);

// Top class of the highest-confidence classified detection; otherwise kEmptyLabel
// with confidence 1 - (highest detection confidence, or 0).
Vote frame_vote(const pipeline::PipelineResult& result);

struct VideoResult {
    std::string video_path;
    std::vector<pipeline::PipelineResult> frame_results;
    std::vector<double> frame_timestamps;
    std::map<std::string, std::size_t> vote_tally;
    std::string final_label;
    double effective_fps = 0.0;
};

VideoResult classify_video(FrameSource& source, const backends::Detector& detector,
                           const backends::Classifier* classifier,
                           const pipeline::PipelineConfig& config,
                           double target_fps = kDefaultTargetFps,
                           const pipeline::ProgressSink& progress = {});

}  // namespace trapkit::video
