#pragma once

#include "cyclic/dctg.hpp"
#include "cyclic/dep_engine.hpp"
#include "cyclic/scheduler.hpp"
#include "cyclic/task.hpp"
#include "cyclic/trace.hpp"

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace cyclic {

enum class Variant : std::uint8_t {
    Tasks,
    TasksIS,
    TasksISBypass,
    Caching,
    Taskiter,
    TaskiterIS,
    TaskiterISBypass,
};

const char* to_string(Variant v);
std::optional<Variant> parse_variant(const std::string& name);
Placement placement_for(Variant v);
bool variant_uses_taskiter(Variant v);

struct RuntimeConfig {
    std::uint32_t workers = 4;
    Variant variant = Variant::Tasks;
    double is_skip_probability = 0.0;
    std::uint64_t seed = 1;
    bool trace_enabled = false;
};

struct TaskOptions {
    int priority = 0;
    std::string label;
    std::uint32_t trace_iteration = 0;
    std::span<const std::byte> payload{};
};

struct LabelTiming {
    std::uint64_t count = 0;
    std::int64_t total_ns = 0;
    std::int64_t min_ns = 0;
    std::int64_t max_ns = 0;
};

struct MetricsRecord {
    TelemetrySnapshot telemetry;
    std::int64_t wall_ns = 0;
    std::map<std::string, LabelTiming> label_timings;
};

class TaskiterHandle {
public:
    TaskiterHandle() = default;
    TaskiterHandle(TaskiterHandle&& other) noexcept { *this = std::move(other); }
    TaskiterHandle& operator=(TaskiterHandle&& other) noexcept {
        graph = other.graph;
        open = other.open;
        other.graph = nullptr;
        other.open = false;
        return *this;
    }

private:
    friend class Runtime;
    Dctg* graph = nullptr;
    bool open = false;
};

/// Worker pool plus the public task-creation API. One creator thread (the
/// one that constructed the runtime) spawns tasks and records taskiters; the
/// workers execute them.
class Runtime {
public:
    explicit Runtime(const RuntimeConfig& config);
    ~Runtime();
    Runtime(const Runtime&) = delete;
    Runtime& operator=(const Runtime&) = delete;

    /// Creates a task. Registered through the dependency engine; forwarded
    /// to the scheduler right away when nothing precedes it. Tasks spawned
    /// from inside a running task may not declare accesses.
    TaskNode& spawn(std::vector<DataAccess> accesses, TaskBody body, TaskOptions opts = {});

    /// Returns once every task spawned in this scope has finished,
    /// transitively including nested tasks and running taskiters.
    void taskwait();

    // Taskiter: record one iteration, convert to a cyclic graph, re-execute.
    TaskiterHandle taskiter_begin(const TaskiterOptions& opts);
    void record_iteration(TaskiterHandle& handle, const std::function<void()>& body);
    Dctg& taskiter_close(TaskiterHandle& handle);
    /// Update mode: re-runs the body once per remaining iteration on this
    /// thread, capturing task arguments instead of creating tasks. Capture
    /// of iteration i must complete before any node executes iteration i.
    void record_update_args(Dctg& graph, const std::function<void()>& body);
    /// This thread joins the worker pool until the graph retires.
    void wait_taskiter(Dctg& graph);
    /// Convenience wrapper: begin + record + close (+ argument capture in
    /// update mode), then work until the taskiter retires.
    void run_taskiter(const TaskiterOptions& opts, const std::function<void()>& body);

    /// Comparison baseline: records the task descriptors and intra-iteration
    /// edges once, then re-executes the cached DAG with a full barrier
    /// between iterations. No cross-iteration matching, no overlap.
    void run_caching(std::uint32_t iterations, const std::function<void()>& body);
    /// Caching with a variable iteration count: the predicate runs on this
    /// thread after each barrier. Returns the number of iterations executed.
    std::uint32_t run_caching_while(const std::function<void()>& body,
                                    const std::function<bool()>& keep_going);

    MetricsRecord snapshot_metrics() const;
    const GraphSnapshot* last_graph() const;
    /// Iterations the most recent taskiter executed (condition-driven counts
    /// become known only at completion).
    std::uint32_t last_taskiter_iterations() const;
    /// Drops one matched cross edge at the next close; the edge stays in the
    /// snapshot's audit set. Testing hook for the order-safety auditor.
    void inject_drop_cross_edge(std::size_t index);

    TraceRecorder& trace() { return trace_; }
    void write_trace(const std::string& path) { trace_.write_jsonl(path); }
    /// (finished task, executed next) pairs for every scheduler bypass;
    /// collected only while tracing is enabled.
    std::vector<std::pair<std::uint64_t, std::uint64_t>> bypass_log() const;

    const RuntimeConfig& config() const { return config_; }
    std::uint32_t creator_lane() const { return config_.workers; }

private:
    friend class Dctg;

    struct LaneMetrics {
        std::map<std::uint32_t, LabelTiming> timings;
        std::vector<std::pair<std::uint64_t, std::uint64_t>> bypasses;
    };

    TaskNode& make_node(std::vector<DataAccess> accesses, TaskBody body, TaskOptions& opts);
    void abort_recording(Dctg& graph);
    void publish(TaskNode& node);
    void dispatch_ready(const std::vector<TaskNode*>& ready);
    void grant_proxy(Dctg& graph);
    void handle_graph_complete(Dctg& graph);
    void worker_main(std::uint32_t lane);
    void run_chain(std::uint32_t lane, TaskNode* task);
    void execute(std::uint32_t lane, TaskNode& task);
    std::vector<TaskNode*> finish_cascade(TaskNode& task);
    void finish_one(TaskNode& task, std::vector<TaskNode*>& ready);
    void note_finish_time();

    RuntimeConfig config_;
    SchedTelemetry telemetry_;
    TraceRecorder trace_;
    Scheduler scheduler_;

    DependencyScope main_scope_;
    std::vector<std::unique_ptr<TaskNode>> owned_tasks_; // creator thread only
    std::vector<std::unique_ptr<Dctg>> graphs_;
    std::atomic<std::uint64_t> next_id_{1};
    std::atomic<std::int64_t> pending_{0};
    std::mutex scope_mtx_;
    std::condition_variable scope_cv_;

    Dctg* recording_ = nullptr;
    bool capture_active_ = false;
    Dctg* capture_graph_ = nullptr;
    std::uint32_t capture_index_ = 0;
    std::optional<std::size_t> pending_drop_cross_;
    const GraphSnapshot* last_graph_ = nullptr;
    Dctg* last_taskiter_ = nullptr;

    std::vector<LaneMetrics> lane_metrics_;
    std::atomic<std::int64_t> first_event_ns_{-1};
    std::atomic<std::int64_t> last_event_ns_{-1};

    std::vector<std::thread> workers_;
};

} // namespace cyclic
