#include "cyclic/dep_engine.hpp"

#include <algorithm>
#include <cassert>

namespace cyclic {

void DependencyScope::add_counted_edge(TaskNode& from, TaskNode& to, AccessKey key) {
    assert(&from != &to);
    {
        std::lock_guard lock(from.mtx);
        if (!from.release_pass_done) {
            // The source has not released yet: its release pass will see this
            // edge, so the target has to account for it now.
            to.slots[0].outstanding.fetch_add(1, std::memory_order_relaxed);
        }
        from.successors.push_back({&to, EdgeKind::Intra, key});
    }
    to.intra_in += 1;
    if (track_)
        intra_edges_.push_back({&from, &to, EdgeKind::Intra, key});
}

void DependencyScope::register_task(TaskNode& task) {
    for (const DataAccess& access : task.accesses) {
        BottomEntry& entry = bottom_[access.key.id];

        if (is_write(access.mode)) {
            if (!entry.trailing_readers.empty()) {
                for (TaskNode* reader : entry.trailing_readers)
                    add_counted_edge(*reader, task, access.key);
            } else if (entry.last_writer) {
                add_counted_edge(*entry.last_writer, task, access.key);
            }
            entry.last_writer = &task;
            entry.trailing_readers.clear();
        } else {
            if (entry.last_writer)
                add_counted_edge(*entry.last_writer, task, access.key);
            entry.trailing_readers.push_back(&task);
        }

        if (track_) {
            TopEntry& top = top_[access.key.id];
            if (!top.first_writer) {
                if (is_write(access.mode))
                    top.first_writer = &task;
                else
                    top.leading_readers.push_back(&task);
            }
        }
    }
}

std::vector<TaskNode*> release_successors(TaskNode& task) {
    std::vector<SuccessorEdge> snapshot;
    {
        std::lock_guard lock(task.mtx);
        task.release_pass_done = true;
        snapshot = task.successors;
    }

    std::vector<TaskNode*> ready;
    for (const SuccessorEdge& edge : snapshot) {
        std::int32_t left = edge.to->slots[0].outstanding.fetch_sub(1, std::memory_order_acq_rel) - 1;
        assert(left >= 0 && "dependency counter underflow");
        if (left == 0)
            ready.push_back(edge.to);
    }
    return ready;
}

void DependencyScope::reset() {
    bottom_.clear();
    top_.clear();
    intra_edges_.clear();
}

std::vector<EdgeRec> match_cross_iteration(const TopMap& top, const BottomMap& bottom) {
    std::vector<EdgeRec> cross;
    // Deterministic order: sort keys so replayed runs build identical graphs.
    std::vector<std::uint64_t> keys;
    keys.reserve(bottom.size());
    for (const auto& [key, entry] : bottom)
        keys.push_back(key);
    std::sort(keys.begin(), keys.end());

    for (std::uint64_t key : keys) {
        const BottomEntry& be = bottom.at(key);
        auto it = top.find(key);
        if (it == top.end())
            continue;
        const TopEntry& te = it->second;

        if (be.last_writer) {
            for (TaskNode* reader : te.leading_readers)
                cross.push_back({be.last_writer, reader, EdgeKind::CrossIteration, AccessKey{key}});
        }
        if (te.first_writer) {
            if (!be.trailing_readers.empty()) {
                for (TaskNode* reader : be.trailing_readers)
                    cross.push_back({reader, te.first_writer, EdgeKind::CrossIteration, AccessKey{key}});
            } else if (be.last_writer && te.leading_readers.empty()) {
                cross.push_back({be.last_writer, te.first_writer, EdgeKind::CrossIteration, AccessKey{key}});
            }
        }
    }
    return cross;
}

} // namespace cyclic
