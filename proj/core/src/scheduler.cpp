#include "cyclic/scheduler.hpp"

#include <cassert>

namespace cyclic {

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint32_t worker) {
    // splitmix64 step keyed by worker id
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (worker + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

} // namespace

Scheduler::Scheduler(std::uint32_t worker_count, const PolicyConfig& policy,
                     SchedTelemetry& telemetry)
    : waiters_(worker_count + 1), policy_(policy), telemetry_(telemetry) {
    rng_.reserve(worker_count + 1);
    for (std::uint32_t w = 0; w <= worker_count; ++w)
        rng_.emplace_back(mix_seed(policy.seed, w));
}

TaskNode* Scheduler::pop_locked() {
    auto it = bins_.begin();
    if (it == bins_.end())
        return nullptr;
    TaskNode* task = it->second.front();
    it->second.pop_front();
    if (it->second.empty())
        bins_.erase(it);
    telemetry_.tasks_popped.fetch_add(1, std::memory_order_relaxed);
    return task;
}

void Scheduler::push_locked(TaskNode* task) {
    bins_[task->priority].push_back(task);
    telemetry_.tasks_enqueued.fetch_add(1, std::memory_order_relaxed);
}

void Scheduler::serve_waiters_locked() {
    bool served = false;
    while (!waiting_.empty() && !bins_.empty()) {
        std::uint32_t w = waiting_.front();
        waiting_.pop_front();
        waiters_[w].slot.store(pop_locked(), std::memory_order_release);
        served = true;
    }
    if (served)
        cv_.notify_all();
}

void Scheduler::enqueue(TaskNode* task) {
    std::lock_guard lock(mtx_);
    telemetry_.scheduler_entries.fetch_add(1, std::memory_order_relaxed);
    push_locked(task);
    serve_waiters_locked();
}

void Scheduler::enqueue_batch(const std::vector<TaskNode*>& tasks) {
    if (tasks.empty())
        return;
    std::lock_guard lock(mtx_);
    telemetry_.scheduler_entries.fetch_add(1, std::memory_order_relaxed);
    for (TaskNode* t : tasks)
        push_locked(t);
    serve_waiters_locked();
}

TaskNode* Scheduler::fetch(std::uint32_t worker) {
    (void)worker;
    std::lock_guard lock(mtx_);
    telemetry_.scheduler_entries.fetch_add(1, std::memory_order_relaxed);
    return pop_locked();
}

TaskNode* Scheduler::park_and_fetch(std::uint32_t worker, const std::atomic<bool>* abort) {
    auto aborted = [&] {
        return stop_.load(std::memory_order_acquire) ||
               (abort && abort->load(std::memory_order_acquire));
    };

    Waiter& me = waiters_[worker];
    {
        std::lock_guard lock(mtx_);
        telemetry_.scheduler_entries.fetch_add(1, std::memory_order_relaxed);
        if (TaskNode* task = pop_locked())
            return task;
        if (aborted())
            return nullptr;
        me.slot.store(nullptr, std::memory_order_relaxed);
        waiting_.push_back(worker);
        me.parked = true;
    }

    // Spin briefly on the private slot before sleeping.
    for (int spin = 0; spin < 2048; ++spin) {
        if (TaskNode* task = me.slot.exchange(nullptr, std::memory_order_acq_rel)) {
            std::lock_guard lock(mtx_);
            me.parked = false;
            return task;
        }
        if (aborted())
            break;
    }

    std::unique_lock lock(mtx_);
    while (true) {
        if (TaskNode* task = me.slot.exchange(nullptr, std::memory_order_acq_rel)) {
            me.parked = false;
            return task;
        }
        if (aborted()) {
            me.parked = false;
            for (auto it = waiting_.begin(); it != waiting_.end(); ++it) {
                if (*it == worker) {
                    waiting_.erase(it);
                    break;
                }
            }
            return nullptr;
        }
        cv_.wait(lock);
    }
}

TaskNode* Scheduler::pick_immediate_successor(const std::vector<TaskNode*>& ready) {
    // First task in release order among those of maximal priority.
    TaskNode* best = nullptr;
    for (TaskNode* t : ready) {
        if (!best || t->priority > best->priority)
            best = t;
    }
    return best;
}

bool Scheduler::draw_mark(std::uint32_t worker) {
    double p = policy_.skip_probability;
    if (p <= 0.0)
        return true;
    if (p >= 1.0)
        return false;
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    return dist(rng_[worker]) >= p;
}

NextAction Scheduler::on_task_finished(std::uint32_t worker, TaskNode* finished,
                                       const std::vector<TaskNode*>& ready) {
    (void)finished;
    if (ready.empty())
        return {};
    telemetry_.nonempty_ready_sets.fetch_add(1, std::memory_order_relaxed);

    switch (policy_.placement) {
    case Placement::None: {
        enqueue_batch(ready);
        return {};
    }
    case Placement::InsideScheduler: {
        bool mark = draw_mark(worker);
        std::lock_guard lock(mtx_);
        telemetry_.scheduler_entries.fetch_add(1, std::memory_order_relaxed);
        TaskNode* is = mark ? pick_immediate_successor(ready) : nullptr;
        // Every ready task passes through the combiner; the would-be
        // immediate successor is handed back to this worker from inside it.
        for (TaskNode* t : ready)
            push_locked(t);
        if (is) {
            auto& bin = bins_[is->priority];
            for (auto it = bin.begin(); it != bin.end(); ++it) {
                if (*it == is) {
                    bin.erase(it);
                    break;
                }
            }
            if (bin.empty())
                bins_.erase(is->priority);
            telemetry_.tasks_popped.fetch_add(1, std::memory_order_relaxed);
        }
        serve_waiters_locked();
        return {is};
    }
    case Placement::OutsideScheduler: {
        TaskNode* is = draw_mark(worker) ? pick_immediate_successor(ready) : nullptr;
        std::vector<TaskNode*> rest;
        rest.reserve(ready.size());
        for (TaskNode* t : ready) {
            if (t != is)
                rest.push_back(t);
        }
        enqueue_batch(rest);
        if (is)
            telemetry_.bypasses.fetch_add(1, std::memory_order_relaxed);
        return {is};
    }
    }
    return {};
}

void Scheduler::request_stop() {
    stop_.store(true, std::memory_order_release);
    notify_all();
}

void Scheduler::notify_all() {
    std::lock_guard lock(mtx_);
    cv_.notify_all();
}

} // namespace cyclic
