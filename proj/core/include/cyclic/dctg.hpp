#pragma once

#include "cyclic/dep_engine.hpp"
#include "cyclic/task.hpp"

#include <array>
#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <vector>

namespace cyclic {

class Runtime;

class InvalidUnrollError : public Error {
public:
    using Error::Error;
};

class InvalidIterationsError : public Error {
public:
    using Error::Error;
};

class NestedTaskiterError : public Error {
public:
    using Error::Error;
};

class ShapeMismatchError : public Error {
public:
    using Error::Error;
};

/// Dynamic iteration control: the predicate runs between iterations as a
/// synthetic graph node; its read set must be declared, the runtime cannot
/// see into the closure.
struct Condition {
    std::function<bool()> predicate;
    std::vector<DataAccess> reads;
};

struct TaskiterOptions {
    std::uint32_t iterations = 0; // fixed count; 0 only with a condition
    std::optional<Condition> condition;
    std::uint32_t unroll = 1;
    bool update = false;
    std::vector<DataAccess> boundary; // taskiter-level accesses in the parent scope
};

enum class GraphMode : std::uint8_t { Taskiter, Caching };

/// Structure dump taken at close time, for verification tooling. Indices are
/// creation order; the condition node, when present, is last.
struct GraphSnapshot {
    struct Node {
        std::uint64_t id = 0;
        std::string label;
        std::vector<DataAccess> accesses;
    };
    std::vector<Node> nodes;
    std::uint32_t recorded_count = 0; // nodes created by the body
    bool has_condition = false;
    std::uint32_t unroll = 1;
    std::vector<std::pair<std::uint32_t, std::uint32_t>> intra;
    std::vector<std::pair<std::uint32_t, std::uint32_t>> cross;
    // Fault injection: removed from execution but still part of the audit set.
    std::vector<std::pair<std::uint32_t, std::uint32_t>> dropped_cross;
};

struct FinishResult {
    std::vector<TaskNode*> ready;
    bool completed_graph = false;
};

/// The recorded one-iteration DAG plus the cross-iteration back edges,
/// re-executed through per-node iteration counters and even/odd dependency
/// slots. In caching mode the same recording is replayed behind a full
/// barrier instead.
class Dctg {
public:
    Dctg(GraphMode mode, const TaskiterOptions& opts);

    GraphMode mode() const { return mode_; }
    bool update_mode() const { return update_; }
    std::uint32_t unroll() const { return unroll_; }
    bool dynamic() const { return condition_.has_value(); }
    std::uint32_t node_count() const { return static_cast<std::uint32_t>(nodes_.size()); }
    std::uint32_t recorded_count() const { return recorded_count_; }
    bool complete() const { return complete_.load(std::memory_order_acquire); }
    std::uint32_t iteration_limit() const { return limit_.load(std::memory_order_acquire); }
    std::uint32_t caching_iteration() const { return caching_iter_; }

    /// Executions performed by node `index` so far.
    std::uint32_t executions(std::uint32_t index) const {
        return nodes_[index]->completed.load(std::memory_order_acquire);
    }

private:
    friend class Runtime;

    void record_node(std::unique_ptr<TaskNode> node);
    FinishResult finish(TaskNode& node);

    // Close-time steps, all under mtx_.
    std::vector<TaskNode*> finalize(TaskNode* condition_node,
                                    std::optional<std::size_t> drop_cross_index);
    void arm_slots_locked();
    std::vector<TaskNode*> retire_pass_locked();

    FinishResult replay_finish(TaskNode& node, std::uint32_t iteration);
    TaskNode* apply_release(TaskNode& target, std::uint32_t iteration);
    void stop_at_limit(std::uint32_t new_limit);
    void note_iteration_finish(std::uint32_t iteration);
    void wait_capture_floor(std::uint32_t iteration);

    GraphMode mode_;
    std::uint32_t total_iterations_ = 0; // fixed mode, pre-unroll
    std::optional<Condition> condition_;
    std::uint32_t unroll_ = 1;
    bool update_ = false;
    std::vector<DataAccess> boundary_;

    std::mutex mtx_; // recording phase and close transition
    bool closed_ = false;
    DependencyScope scope_{/*track_for_graph=*/true};
    std::vector<std::unique_ptr<TaskNode>> nodes_;
    std::uint32_t recorded_count_ = 0;
    std::vector<EdgeRec> cross_edges_;
    std::vector<EdgeRec> condition_intra_;
    TaskNode* condition_node_ = nullptr;
    bool condition_result_ = true; // written by the condition body, read at its finish

    std::atomic<std::uint32_t> limit_{kUnarmed}; // executions per node
    std::atomic<std::uint32_t> live_{0};
    std::atomic<bool> complete_{false};
    std::atomic<bool> completion_handled_{false};

    TaskNode* proxy_ = nullptr; // boundary accesses, owned by the runtime scope
    bool proxy_ready_ = false;  // guarded by the runtime scope mutex

    // Caching-mode barrier state.
    std::uint32_t caching_iter_ = 0;
    std::atomic<std::uint32_t> caching_done_{0};

    // Update-mode capture pacing: capture of iteration i waits until every
    // node completed iteration i-2, which bounds the deferral queues.
    std::array<std::atomic<std::uint32_t>, 8> finish_ring_{};
    std::atomic<std::uint32_t> floor_{0};
    std::mutex floor_mtx_;
    std::condition_variable floor_cv_;

    GraphSnapshot snapshot_;
};

} // namespace cyclic
