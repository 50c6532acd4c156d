#pragma once

#include <json.hpp>

#include <condition_variable>
#include <cstddef>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace trapkit::service {

enum class JobKind { batch, video };
enum class JobState { queued, running, done, failed };

std::string_view to_string(JobKind kind);
std::string_view to_string(JobState state);

struct JobSnapshot {
    std::string job_id;
    JobKind kind = JobKind::batch;
    JobState state = JobState::queued;
    std::size_t done = 0;
    std::size_t total = 0;
    std::optional<std::string> error_message;
    // Every state entered, in order; always a prefix of queued, running, done|failed.
    std::vector<JobState> history;

    std::string result_uri() const;
};

nlohmann::ordered_json job_to_json(const JobSnapshot& job);

// Reports (done, total); decreasing `done` values are ignored.
using JobProgress = std::function<void(std::size_t done, std::size_t total)>;

// Returns the result document. A thrown trapkit::Error (or any exception) fails the job.
using JobWork = std::function<std::string(const JobProgress& progress)>;

// Bounded FIFO queue served by a fixed pool of worker threads. Jobs start in
// submission order; at most `capacity` jobs wait at once.
class JobManager {
public:
    JobManager(int workers, std::size_t capacity);
    ~JobManager();

    JobManager(const JobManager&) = delete;
    JobManager& operator=(const JobManager&) = delete;

    // Throws QueueFull when `capacity` jobs are already waiting.
    std::string submit(JobKind kind, JobWork work);

    std::optional<JobSnapshot> get(const std::string& job_id) const;

    // Set once the job is done.
    std::optional<std::string> result(const std::string& job_id) const;

    // Blocks until the job is done or failed. Returns nullopt for unknown ids.
    std::optional<JobSnapshot> wait(const std::string& job_id) const;

    // Fails queued jobs, lets running ones finish and joins the workers.
    void shutdown();

private:
    struct Job {
        JobSnapshot snapshot;
        JobWork work;
        std::string result;
    };

    void worker_loop();
    void transition(Job& job, JobState next);

    mutable std::mutex m_mutex;
    mutable std::condition_variable m_changed;
    std::condition_variable m_work_ready;
    std::map<std::string, std::shared_ptr<Job>> m_jobs;
    std::deque<std::shared_ptr<Job>> m_queue;
    std::size_t m_capacity;
    std::size_t m_next_id = 1;
    bool m_stopping = false;
    std::vector<std::jthread> m_workers;
};

}  // namespace trapkit::service
