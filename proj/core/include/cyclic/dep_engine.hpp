#pragma once

#include "cyclic/access.hpp"
#include "cyclic/task.hpp"

#include <unordered_map>
#include <vector>

namespace cyclic {

/// Per-key record of the most recent conflicting access group. Either the
/// last writer, or the readers that trail it; a new writer clears the
/// trailing readers.
struct BottomEntry {
    TaskNode* last_writer = nullptr;
    std::vector<TaskNode*> trailing_readers;
};

/// Per-key record of the iteration's leading accesses: the readers before
/// the first writer, and the first writer itself. Frozen once the first
/// writer registers; this is everything a cross-iteration match can bind to.
struct TopEntry {
    std::vector<TaskNode*> leading_readers;
    TaskNode* first_writer = nullptr;
};

using BottomMap = std::unordered_map<std::uint64_t, BottomEntry>;
using TopMap = std::unordered_map<std::uint64_t, TopEntry>;

/// Registers accesses at creation time and derives successor edges through
/// the bottom map. Single producer: only the creating thread registers.
class DependencyScope {
public:
    explicit DependencyScope(bool track_for_graph = false) : track_(track_for_graph) {}

    /// Derives edges from the current bottom-map groups into `task`, updates
    /// both maps and the task's iteration-0 outstanding counter. The task
    /// must hold its registration guard (slot 0 outstanding >= 1) so a
    /// concurrent release cannot make it ready mid-registration.
    void register_task(TaskNode& task);

    /// Reclaims map storage; subsequent registrations see empty maps.
    void reset();

    const BottomMap& bottom_map() const { return bottom_; }
    const TopMap& top_map() const { return top_; }
    const std::vector<EdgeRec>& intra_edges() const { return intra_edges_; }

private:
    void add_counted_edge(TaskNode& from, TaskNode& to, AccessKey key);

    BottomMap bottom_;
    TopMap top_;
    std::vector<EdgeRec> intra_edges_;
    bool track_;
};

/// Marks the task's release pass done and decrements the iteration-0 slot of
/// every successor counted so far. Returns exactly the tasks whose counter
/// reached zero in this call, in edge-creation order; concurrent releasers
/// each return a given task at most once.
std::vector<TaskNode*> release_successors(TaskNode& task);

/// Emits the cross-iteration edges implied by matching the bottom map
/// (iteration i's final state) against the top map (iteration i+1's leading
/// accesses):
///   - last writer -> each leading reader        (read-after-write)
///   - each trailing reader -> first writer      (write-after-read)
///   - last writer -> first writer when no reader intervenes on either side
/// Self-loops are legal: a task may depend on its own previous iteration.
std::vector<EdgeRec> match_cross_iteration(const TopMap& top, const BottomMap& bottom);

} // namespace cyclic
