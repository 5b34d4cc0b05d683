#include "cyclic/dctg.hpp"

#include <cassert>
#include <cstdio>
#include <cstdlib>

namespace cyclic {

namespace detail {

[[noreturn]] void fatal(const char* msg) {
    std::fprintf(stderr, "cyclic-tasks: fatal: %s\n", msg);
    std::abort();
}

} // namespace detail

Dctg::Dctg(GraphMode mode, const TaskiterOptions& opts)
    : mode_(mode),
      total_iterations_(opts.iterations),
      condition_(opts.condition),
      unroll_(opts.unroll),
      update_(opts.update),
      boundary_(opts.boundary) {
    for (auto& c : finish_ring_)
        c.store(0);
}

void Dctg::record_node(std::unique_ptr<TaskNode> node) {
    node->creation_index = recorded_count_;
    node->graph = this;
    scope_.register_task(*node);
    nodes_.push_back(std::move(node));
    recorded_count_ += 1;
}

FinishResult Dctg::finish(TaskNode& node) {
    {
        std::unique_lock lock(mtx_);
        if (!closed_) {
            // Recording pass: only intra edges exist; release through the
            // iteration-0 counters and remember the node already ran once.
            FinishResult res;
            res.ready = release_successors(node);
            node.completed.store(1, std::memory_order_release);
            if (mode_ == GraphMode::Caching) {
                caching_done_.fetch_add(1, std::memory_order_acq_rel);
                { std::lock_guard fl(floor_mtx_); }
                floor_cv_.notify_all();
            }
            return res;
        }
    }

    if (mode_ == GraphMode::Caching) {
        FinishResult res;
        res.ready = release_successors(node);
        caching_done_.fetch_add(1, std::memory_order_acq_rel);
        { std::lock_guard fl(floor_mtx_); }
        floor_cv_.notify_all();
        return res;
    }
    return replay_finish(node, node.completed.load(std::memory_order_relaxed));
}

std::vector<TaskNode*> Dctg::finalize(TaskNode* condition_node,
                                      std::optional<std::size_t> drop_cross_index) {
    std::lock_guard lock(mtx_);
    assert(!closed_);

    cross_edges_ = match_cross_iteration(scope_.top_map(), scope_.bottom_map());

    if (drop_cross_index && !cross_edges_.empty()) {
        std::size_t idx = *drop_cross_index % cross_edges_.size();
        const EdgeRec& e = cross_edges_[idx];
        snapshot_.dropped_cross.emplace_back(e.from->creation_index, e.to->creation_index);
        cross_edges_.erase(cross_edges_.begin() + static_cast<std::ptrdiff_t>(idx));
    }

    // Roots: recorded nodes with no intra predecessors. Computed before the
    // condition node adds its edges.
    std::vector<TaskNode*> roots;
    for (auto& n : nodes_) {
        if (n->intra_in == 0)
            roots.push_back(n.get());
    }

    if (condition_node) {
        condition_node_ = condition_node;
        condition_node_->creation_index = recorded_count_;
        condition_node_->graph = this;
        // Intra edges from every recorded task whose accesses conflict with
        // the condition's declared read set.
        for (std::uint32_t i = 0; i < recorded_count_; ++i) {
            TaskNode* n = nodes_[i].get();
            bool conflict = false;
            for (const DataAccess& a : n->accesses) {
                for (const DataAccess& c : condition_node_->accesses) {
                    if (conflicts(a, c)) {
                        conflict = true;
                        break;
                    }
                }
                if (conflict)
                    break;
            }
            if (conflict)
                condition_intra_.push_back(
                    {n, condition_node_, EdgeKind::Intra, condition_node_->accesses.front().key});
        }
        if (condition_intra_.empty()) {
            // Nothing feeds the check; order it behind the iteration's sinks
            // so it still evaluates between iterations.
            for (std::uint32_t i = 0; i < recorded_count_; ++i) {
                TaskNode* n = nodes_[i].get();
                bool has_intra_succ = false;
                for (const SuccessorEdge& e : n->successors) {
                    if (e.kind == EdgeKind::Intra) {
                        has_intra_succ = true;
                        break;
                    }
                }
                if (!has_intra_succ)
                    condition_intra_.push_back({n, condition_node_, EdgeKind::Intra, AccessKey{0}});
            }
        }
        for (const EdgeRec& e : condition_intra_) {
            std::lock_guard el(e.from->mtx);
            e.from->successors.push_back({e.to, EdgeKind::Intra, e.shared_key});
            condition_node_->intra_in += 1;
        }
        // The check gates the next iteration: cross edges to every root.
        for (TaskNode* root : roots)
            cross_edges_.push_back({condition_node_, root, EdgeKind::CrossIteration, AccessKey{0}});
        nodes_.push_back(std::unique_ptr<TaskNode>(condition_node));
    }

    for (const EdgeRec& e : cross_edges_) {
        std::lock_guard el(e.from->mtx);
        e.from->successors.push_back({e.to, EdgeKind::CrossIteration, e.shared_key});
        e.to->cross_in += 1;
    }

    for (auto& n : nodes_) {
        std::uint32_t credit = (update_ && !n->is_condition) ? 1u : 0u;
        n->static_reset = n->intra_in + n->cross_in + credit;
    }

    limit_.store(dynamic() ? kUnarmed : total_iterations_ / unroll_, std::memory_order_release);
    live_.store(node_count(), std::memory_order_release);

    arm_slots_locked();
    std::vector<TaskNode*> ready = retire_pass_locked();

    // Cross releases owed by nodes that already finished their recorded pass.
    for (const EdgeRec& e : cross_edges_) {
        if (e.from->completed.load(std::memory_order_acquire) >= 1) {
            if (TaskNode* r = apply_release(*e.to, 1))
                ready.push_back(r);
        }
    }

    // Nodes done with their recorded pass whose next iteration needs nothing
    // further (no cross predecessors at all) dispatch themselves here.
    std::uint32_t lim = limit_.load(std::memory_order_acquire);
    for (auto& n : nodes_) {
        if (n->is_condition)
            continue;
        std::lock_guard nl(n->mtx);
        std::uint32_t next = n->completed.load(std::memory_order_acquire);
        if (n->retired || next == 0 || next >= lim)
            continue;
        DepSlot& slot = n->slots[next % 2];
        if (slot.armed_iteration == next && slot.outstanding.load(std::memory_order_acquire) == 0 &&
            n->last_dispatched < static_cast<std::int64_t>(next)) {
            n->last_dispatched = next;
            ready.push_back(n.get());
        }
    }

    // The condition has not run yet; arm its first check with whatever intra
    // predecessors are still outstanding, and its odd slot for iteration 1.
    if (condition_node_) {
        std::lock_guard cl(condition_node_->mtx);
        std::int32_t pending = 0;
        for (const EdgeRec& e : condition_intra_) {
            if (e.from->completed.load(std::memory_order_acquire) == 0)
                pending += 1;
        }
        condition_node_->slots[0].armed_iteration = 0;
        condition_node_->slots[0].outstanding.store(pending, std::memory_order_release);
        condition_node_->slots[1].armed_iteration = 1;
        condition_node_->slots[1].outstanding.store(
            static_cast<std::int32_t>(condition_node_->static_reset), std::memory_order_release);
        if (pending == 0 && !condition_node_->retired && condition_node_->last_dispatched < 0) {
            condition_node_->last_dispatched = 0;
            ready.push_back(condition_node_);
        }
    }

    // Snapshot for verification tooling.
    snapshot_.recorded_count = recorded_count_;
    snapshot_.has_condition = condition_node_ != nullptr;
    snapshot_.unroll = unroll_;
    for (auto& n : nodes_)
        snapshot_.nodes.push_back({n->id, n->label, n->accesses});
    for (const EdgeRec& e : scope_.intra_edges())
        snapshot_.intra.emplace_back(e.from->creation_index, e.to->creation_index);
    for (const EdgeRec& e : condition_intra_)
        snapshot_.intra.emplace_back(e.from->creation_index, e.to->creation_index);
    for (const EdgeRec& e : cross_edges_)
        snapshot_.cross.emplace_back(e.from->creation_index, e.to->creation_index);

    // Seed the capture pacing with the recorded pass: counts are stable here,
    // nodes still running their first pass report through the replay path.
    if (update_) {
        std::uint32_t done = 0;
        for (auto& n : nodes_) {
            if (n->completed.load(std::memory_order_acquire) >= 1)
                done += 1;
        }
        if (done == node_count()) {
            floor_.store(1, std::memory_order_release);
            { std::lock_guard fl(floor_mtx_); }
            floor_cv_.notify_all();
        } else {
            finish_ring_[0].store(done, std::memory_order_release);
        }
    }

    scope_.reset();
    closed_ = true;

    if (node_count() == 0)
        complete_.store(true, std::memory_order_release);
    return ready;
}

void Dctg::arm_slots_locked() {
    for (auto& n : nodes_) {
        if (n->is_condition)
            continue;
        std::lock_guard nl(n->mtx);
        n->slots[1].armed_iteration = 1;
        n->slots[1].outstanding.store(static_cast<std::int32_t>(n->static_reset),
                                      std::memory_order_release);
        if (n->completed.load(std::memory_order_acquire) >= 1) {
            n->slots[0].armed_iteration = 2;
            n->slots[0].outstanding.store(static_cast<std::int32_t>(n->static_reset),
                                          std::memory_order_release);
        }
    }
}

std::vector<TaskNode*> Dctg::retire_pass_locked() {
    std::uint32_t lim = limit_.load(std::memory_order_acquire);
    std::uint32_t retired = 0;
    for (auto& n : nodes_) {
        std::lock_guard nl(n->mtx);
        if (!n->retired && n->completed.load(std::memory_order_acquire) >= lim) {
            n->retired = true;
            retired += 1;
        }
    }
    if (retired > 0 && live_.fetch_sub(retired, std::memory_order_acq_rel) == retired)
        complete_.store(true, std::memory_order_release);
    return {};
}

TaskNode* Dctg::apply_release(TaskNode& target, std::uint32_t iteration) {
    std::lock_guard lock(target.mtx);
    if (target.retired)
        return nullptr;
    DepSlot& slot = target.slots[iteration % 2];
    if (slot.armed_iteration == iteration) {
        std::int32_t left = slot.outstanding.fetch_sub(1, std::memory_order_acq_rel) - 1;
        if (left < 0)
            detail::fatal("dependency slot underflow");
        if (left == 0 && target.completed.load(std::memory_order_acquire) == iteration &&
            target.last_dispatched < static_cast<std::int64_t>(iteration) &&
            iteration < limit_.load(std::memory_order_acquire)) {
            target.last_dispatched = iteration;
            return &target;
        }
    } else if (slot.armed_iteration != kUnarmed && slot.armed_iteration + 2 == iteration) {
        // Slot still accounts the previous same-parity iteration; park the
        // release until the node frees it.
        slot.deferred.push_back(iteration);
    } else {
        detail::fatal("parity-slot collision: release outside the deferral window");
    }
    return nullptr;
}

void Dctg::stop_at_limit(std::uint32_t new_limit) {
    std::uint32_t cur = limit_.load(std::memory_order_acquire);
    while (new_limit < cur &&
           !limit_.compare_exchange_weak(cur, new_limit, std::memory_order_acq_rel)) {
    }
    std::uint32_t lim = limit_.load(std::memory_order_acquire);

    // Nodes that already finished their last needed iteration sit idle with
    // re-armed slots; retire them now. Nothing can be running an iteration
    // >= lim: those starts are gated behind this condition check.
    std::uint32_t retired = 0;
    for (auto& n : nodes_) {
        if (n.get() == condition_node_)
            continue;
        std::lock_guard nl(n->mtx);
        if (!n->retired && n->completed.load(std::memory_order_acquire) >= lim) {
            n->retired = true;
            retired += 1;
        }
    }
    if (retired > 0 && live_.fetch_sub(retired, std::memory_order_acq_rel) == retired)
        complete_.store(true, std::memory_order_release);
    { std::lock_guard fl(floor_mtx_); }
    floor_cv_.notify_all();
}

void Dctg::note_iteration_finish(std::uint32_t iteration) {
    auto& counter = finish_ring_[iteration % finish_ring_.size()];
    if (counter.fetch_add(1, std::memory_order_acq_rel) + 1 == node_count()) {
        counter.store(0, std::memory_order_release);
        floor_.store(iteration + 1, std::memory_order_release);
        { std::lock_guard fl(floor_mtx_); }
        floor_cv_.notify_all();
    }
}

void Dctg::wait_capture_floor(std::uint32_t iteration) {
    std::unique_lock lock(floor_mtx_);
    floor_cv_.wait(lock, [&] {
        return floor_.load(std::memory_order_acquire) + 2 >= iteration ||
               limit_.load(std::memory_order_acquire) <= iteration ||
               complete_.load(std::memory_order_acquire);
    });
}

FinishResult Dctg::replay_finish(TaskNode& node, std::uint32_t iteration) {
    FinishResult res;

    if (node.is_condition && !condition_result_)
        stop_at_limit(iteration + 1);

    bool retire = false;
    {
        std::lock_guard lock(node.mtx);
        node.completed.store(iteration + 1, std::memory_order_release);
        std::uint32_t lim = limit_.load(std::memory_order_acquire);
        if (iteration + 1 >= lim) {
            if (!node.retired) {
                node.retired = true;
                retire = true;
            }
        } else {
            // Re-arm the slot this iteration consumed for iteration + 2,
            // absorbing any releases that arrived early.
            DepSlot& slot = node.slots[iteration % 2];
            slot.armed_iteration = iteration + 2;
            std::int32_t value = static_cast<std::int32_t>(node.static_reset);
            for (std::uint32_t it : slot.deferred) {
                if (it != iteration + 2)
                    detail::fatal("deferred release for an unexpected iteration");
                value -= 1;
            }
            slot.deferred.clear();
            slot.outstanding.store(value, std::memory_order_release);
        }
    }

    // Intra edges release this iteration's successors; cross edges release
    // the next iteration.
    for (const SuccessorEdge& edge : node.successors) {
        std::uint32_t target_iter = edge.kind == EdgeKind::Intra ? iteration : iteration + 1;
        if (TaskNode* r = apply_release(*edge.to, target_iter))
            res.ready.push_back(r);
    }

    if (!retire) {
        std::lock_guard lock(node.mtx);
        DepSlot& next = node.slots[(iteration + 1) % 2];
        if (!node.retired && next.armed_iteration == iteration + 1 &&
            next.outstanding.load(std::memory_order_acquire) == 0 &&
            node.last_dispatched < static_cast<std::int64_t>(iteration + 1) &&
            iteration + 1 < limit_.load(std::memory_order_acquire)) {
            node.last_dispatched = iteration + 1;
            res.ready.push_back(&node);
        }
    }

    if (update_)
        note_iteration_finish(iteration);

    if (retire && live_.fetch_sub(1, std::memory_order_acq_rel) == 1) {
        complete_.store(true, std::memory_order_release);
        res.completed_graph = true;
    }
    return res;
}

} // namespace cyclic
