#pragma once

#include "cyclic/access.hpp"

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <mutex>
#include <span>
#include <string>
#include <vector>

namespace cyclic {

class Dctg;
class TaskNode;

enum class EdgeKind : std::uint8_t {
    Intra,
    CrossIteration,
};

/// Materialized dependency edge, stored on the source task so the DCTG can
/// replay it every iteration without consulting the maps again.
struct SuccessorEdge {
    TaskNode* to = nullptr;
    EdgeKind kind = EdgeKind::Intra;
    AccessKey shared_key;
};

struct EdgeRec {
    TaskNode* from = nullptr;
    TaskNode* to = nullptr;
    EdgeKind kind = EdgeKind::Intra;
    AccessKey shared_key;
};

struct TaskContext {
    std::uint32_t worker = 0;
    std::uint32_t iteration = 0;
    std::span<const std::byte> payload{};
};

using TaskBody = std::function<void(const TaskContext&)>;

inline constexpr std::uint32_t kUnarmed = 0xffffffffu;

/// One of the two per-node dependency-counting structures. Slot p accounts
/// releases for iterations with index % 2 == p; releases that arrive for
/// armed_iteration + 2 wait in `deferred` until the slot is re-armed.
struct DepSlot {
    std::atomic<std::int32_t> outstanding{0};
    std::uint32_t armed_iteration = kUnarmed;
    std::vector<std::uint32_t> deferred;
};

class TaskNode {
public:
    std::uint64_t id = 0;
    std::uint32_t creation_index = 0;
    std::string label;
    std::uint32_t label_id = 0;
    int priority = 0;
    TaskBody body;
    std::vector<DataAccess> accesses; // normalized
    std::vector<std::byte> fixed_payload;

    // Guards `successors`/`release_pass_done` while edges are being derived,
    // and the slot/retirement state during cyclic replay.
    std::mutex mtx;
    std::vector<SuccessorEdge> successors;
    bool release_pass_done = false;

    DepSlot slots[2];
    std::uint32_t intra_in = 0;
    std::uint32_t cross_in = 0;
    std::uint32_t static_reset = 0; // per-iteration predecessor count, iterations >= 1

    std::atomic<std::uint32_t> completed{0}; // finished executions
    std::int64_t last_dispatched = -1;       // guarded by mtx
    bool retired = false;                    // guarded by mtx

    std::deque<std::vector<std::byte>> arg_queue; // update-mode payloads, guarded by mtx

    // One token for the body plus one per live nested task; the task's
    // dependencies release only when this reaches zero.
    std::atomic<std::int32_t> pending_children{1};
    TaskNode* parent = nullptr;

    Dctg* graph = nullptr;
    bool is_condition = false;
    bool is_proxy = false;
    std::uint32_t trace_iteration = 0; // iteration tag for plain tasks
};

} // namespace cyclic
