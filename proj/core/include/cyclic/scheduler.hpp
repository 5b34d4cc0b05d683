#pragma once

#include "cyclic/task.hpp"

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <map>
#include <mutex>
#include <random>
#include <vector>

namespace cyclic {

enum class Placement : std::uint8_t {
    None,
    InsideScheduler,
    OutsideScheduler,
};

struct PolicyConfig {
    Placement placement = Placement::None;
    double skip_probability = 0.0; // p = 1 never marks an immediate successor
    std::uint64_t seed = 1;
};

struct TelemetrySnapshot {
    std::uint64_t scheduler_entries = 0;
    std::uint64_t bypasses = 0;
    std::uint64_t tasks_enqueued = 0;
    std::uint64_t tasks_popped = 0;
    std::uint64_t tasks_created = 0;
    std::uint64_t nonempty_ready_sets = 0;
};

struct SchedTelemetry {
    std::atomic<std::uint64_t> scheduler_entries{0};
    std::atomic<std::uint64_t> bypasses{0};
    std::atomic<std::uint64_t> tasks_enqueued{0};
    std::atomic<std::uint64_t> tasks_popped{0};
    std::atomic<std::uint64_t> tasks_created{0};
    std::atomic<std::uint64_t> nonempty_ready_sets{0};

    TelemetrySnapshot snapshot() const {
        return {scheduler_entries.load(), bypasses.load(), tasks_enqueued.load(),
                tasks_popped.load(), tasks_created.load(), nonempty_ready_sets.load()};
    }
};

/// What a worker should do after finishing a task.
struct NextAction {
    TaskNode* execute_now = nullptr; // null: fetch from the scheduler
};

/// Centralized priority-ordered ready queue behind one lock. Parked workers
/// register a waiter slot; whoever holds the lock while tasks arrive serves
/// as many waiters as it can in that single acquisition.
class Scheduler {
public:
    Scheduler(std::uint32_t worker_count, const PolicyConfig& policy, SchedTelemetry& telemetry);

    void enqueue(TaskNode* task);
    void enqueue_batch(const std::vector<TaskNode*>& tasks);

    /// Non-blocking: highest-priority task (FIFO within a priority) or
    /// nullptr when the queue is empty.
    TaskNode* fetch(std::uint32_t worker);

    /// Blocks until a task is delegated to this worker, `stop` fires, or the
    /// optional abort flag becomes true. Spins briefly on the private slot
    /// before sleeping on the condition.
    TaskNode* park_and_fetch(std::uint32_t worker, const std::atomic<bool>* abort = nullptr);

    /// Applies the immediate-successor policy to the tasks `finished` just
    /// made ready (in release order). Ready tasks not handed back are
    /// published to the queue.
    NextAction on_task_finished(std::uint32_t worker, TaskNode* finished,
                                const std::vector<TaskNode*>& ready);

    void request_stop();
    void notify_all();
    bool stopping() const { return stop_.load(std::memory_order_acquire); }

    const PolicyConfig& policy() const { return policy_; }

private:
    struct Waiter {
        std::atomic<TaskNode*> slot{nullptr};
        bool parked = false;
    };

    // All queue state below is guarded by mtx_.
    TaskNode* pop_locked();
    void push_locked(TaskNode* task);
    void serve_waiters_locked();
    static TaskNode* pick_immediate_successor(const std::vector<TaskNode*>& ready);
    bool draw_mark(std::uint32_t worker);

    std::mutex mtx_;
    std::condition_variable cv_;
    std::map<int, std::deque<TaskNode*>, std::greater<int>> bins_;
    std::deque<std::uint32_t> waiting_;
    std::vector<Waiter> waiters_;
    std::vector<std::mt19937_64> rng_;
    PolicyConfig policy_;
    SchedTelemetry& telemetry_;
    std::atomic<bool> stop_{false};
};

} // namespace cyclic
