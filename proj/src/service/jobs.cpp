#include "service/jobs.h"

#include "core/error.h"

#include <fmt/format.h>

#include <random>
#include <stdexcept>

namespace trapkit::service {

std::string_view to_string(JobKind kind) {
    return kind == JobKind::batch ? "batch" : "video";
}

std::string_view to_string(JobState state) {
    switch (state) {
    case JobState::queued:
        return "queued";
    case JobState::running:
        return "running";
    case JobState::done:
        return "done";
    case JobState::failed:
        return "failed";
    }
    return "unknown";
}

std::string JobSnapshot::result_uri() const {
    return "/jobs/" + job_id + "/result";
}

nlohmann::ordered_json job_to_json(const JobSnapshot& job) {
    nlohmann::ordered_json doc;
    doc["job_id"] = job.job_id;
    doc["kind"] = to_string(job.kind);
    doc["state"] = to_string(job.state);
    doc["progress"] = {{"done", job.done}, {"total", job.total}};
    doc["result_uri"] = job.state == JobState::done ? nlohmann::ordered_json(job.result_uri()) : nullptr;
    doc["error_message"] = job.error_message ? nlohmann::ordered_json(*job.error_message) : nullptr;
    auto history = nlohmann::ordered_json::array();
    for (auto s : job.history) {
        history.push_back(to_string(s));
    }
    doc["history"] = std::move(history);
    return doc;
}

JobManager::JobManager(int workers, std::size_t capacity) : m_capacity(capacity) {
    if (workers < 1 || capacity < 1) {
        throw Error(ErrorCode::InvalidArgument, "job manager needs at least one worker and one queue slot");
    }
    for (int i = 0; i < workers; ++i) {
        m_workers.emplace_back([this] { worker_loop(); });
    }
}

JobManager::~JobManager() {
    shutdown();
}

std::string JobManager::submit(JobKind kind, JobWork work) {
    static thread_local std::mt19937_64 gen(std::random_device{}());
    std::lock_guard lock(m_mutex);
    if (m_stopping) {
        throw Error(ErrorCode::QueueFull, "job manager is shutting down");
    }
    if (m_queue.size() >= m_capacity) {
        throw Error(ErrorCode::QueueFull, fmt::format("{} jobs already waiting", m_queue.size()));
    }
    auto job = std::make_shared<Job>();
    job->snapshot.job_id = fmt::format("{}-{:08x}", m_next_id++, gen() & 0xffffffffULL);
    job->snapshot.kind = kind;
    job->snapshot.history = {JobState::queued};
    job->work = std::move(work);
    m_jobs.emplace(job->snapshot.job_id, job);
    m_queue.push_back(job);
    m_work_ready.notify_one();
    return job->snapshot.job_id;
}

std::optional<JobSnapshot> JobManager::get(const std::string& job_id) const {
    std::lock_guard lock(m_mutex);
    auto it = m_jobs.find(job_id);
    if (it == m_jobs.end()) {
        return std::nullopt;
    }
    return it->second->snapshot;
}

std::optional<std::string> JobManager::result(const std::string& job_id) const {
    std::lock_guard lock(m_mutex);
    auto it = m_jobs.find(job_id);
    if (it == m_jobs.end() || it->second->snapshot.state != JobState::done) {
        return std::nullopt;
    }
    return it->second->result;
}

std::optional<JobSnapshot> JobManager::wait(const std::string& job_id) const {
    std::unique_lock lock(m_mutex);
    auto it = m_jobs.find(job_id);
    if (it == m_jobs.end()) {
        return std::nullopt;
    }
    const auto job = it->second;
    m_changed.wait(lock, [&] {
        return job->snapshot.state == JobState::done || job->snapshot.state == JobState::failed;
    });
    return job->snapshot;
}

void JobManager::shutdown() {
    {
        std::lock_guard lock(m_mutex);
        if (m_stopping) {
            return;
        }
        m_stopping = true;
        for (auto& job : m_queue) {
            job->snapshot.error_message = "service shut down before the job started";
            transition(*job, JobState::failed);
        }
        m_queue.clear();
    }
    m_work_ready.notify_all();
    m_changed.notify_all();
    m_workers.clear();  // joins
}

// Caller holds m_mutex.
void JobManager::transition(Job& job, JobState next) {
    const JobState now = job.snapshot.state;
    const bool allowed = (now == JobState::queued && (next == JobState::running || next == JobState::failed)) ||
                         (now == JobState::running && (next == JobState::done || next == JobState::failed));
    if (!allowed) {
        throw std::logic_error(fmt::format("job {}: illegal transition {} -> {}", job.snapshot.job_id,
                                           to_string(now), to_string(next)));
    }
    job.snapshot.state = next;
    job.snapshot.history.push_back(next);
}

void JobManager::worker_loop() {
    while (true) {
        std::shared_ptr<Job> job;
        {
            std::unique_lock lock(m_mutex);
            m_work_ready.wait(lock, [&] { return m_stopping || !m_queue.empty(); });
            if (m_queue.empty()) {
                return;
            }
            job = std::move(m_queue.front());
            m_queue.pop_front();
            transition(*job, JobState::running);
        }
        m_changed.notify_all();

        auto progress = [this, &job](std::size_t done, std::size_t total) {
            std::lock_guard lock(m_mutex);
            auto& s = job->snapshot;
            if (done >= s.done) {
                s.done = done;
                s.total = total;
            }
        };
        std::string result;
        std::optional<std::string> error;
        try {
            result = job->work(progress);
        } catch (const Error& e) {
            error = fmt::format("{}: {}", to_string(e.code()), e.what());
        } catch (const std::exception& e) {
            error = e.what();
        }
        {
            std::lock_guard lock(m_mutex);
            job->work = nullptr;
            if (error) {
                job->snapshot.error_message = std::move(error);
                transition(*job, JobState::failed);
            } else {
                job->result = std::move(result);
                transition(*job, JobState::done);
            }
        }
        m_changed.notify_all();
    }
}

}  // namespace trapkit::service
