#include "cyclic/runtime.hpp"

#include <algorithm>
#include <cassert>
#include <cstdio>
#include <cstdlib>
#include <exception>

namespace cyclic {

namespace detail {
[[noreturn]] void fatal(const char* msg);
}

namespace {

struct ThreadState {
    Runtime* runtime = nullptr;
    TaskNode* task = nullptr;
    std::uint32_t lane = 0;
    std::uint32_t iteration = 0;
};

thread_local ThreadState tls;

void update_min(std::atomic<std::int64_t>& slot, std::int64_t value) {
    std::int64_t cur = slot.load(std::memory_order_relaxed);
    while ((cur < 0 || value < cur) &&
           !slot.compare_exchange_weak(cur, value, std::memory_order_relaxed)) {
    }
}

void update_max(std::atomic<std::int64_t>& slot, std::int64_t value) {
    std::int64_t cur = slot.load(std::memory_order_relaxed);
    while (value > cur && !slot.compare_exchange_weak(cur, value, std::memory_order_relaxed)) {
    }
}

} // namespace

const char* to_string(Variant v) {
    switch (v) {
    case Variant::Tasks: return "tasks";
    case Variant::TasksIS: return "tasks-is";
    case Variant::TasksISBypass: return "tasks-is-bypass";
    case Variant::Caching: return "caching";
    case Variant::Taskiter: return "taskiter";
    case Variant::TaskiterIS: return "taskiter-is";
    case Variant::TaskiterISBypass: return "taskiter-is-bypass";
    }
    return "?";
}

std::optional<Variant> parse_variant(const std::string& name) {
    for (Variant v : {Variant::Tasks, Variant::TasksIS, Variant::TasksISBypass, Variant::Caching,
                      Variant::Taskiter, Variant::TaskiterIS, Variant::TaskiterISBypass}) {
        if (name == to_string(v))
            return v;
    }
    return std::nullopt;
}

Placement placement_for(Variant v) {
    switch (v) {
    case Variant::TasksIS:
    case Variant::TaskiterIS: return Placement::InsideScheduler;
    case Variant::TasksISBypass:
    case Variant::TaskiterISBypass: return Placement::OutsideScheduler;
    default: return Placement::None;
    }
}

bool variant_uses_taskiter(Variant v) {
    return v == Variant::Taskiter || v == Variant::TaskiterIS || v == Variant::TaskiterISBypass;
}

Runtime::Runtime(const RuntimeConfig& config)
    : config_(config),
      trace_(config.workers + 1, config.trace_enabled),
      scheduler_(config.workers,
                 PolicyConfig{placement_for(config.variant), config.is_skip_probability,
                              config.seed},
                 telemetry_),
      lane_metrics_(config.workers + 1) {
    tls = {this, nullptr, creator_lane(), 0};
    workers_.reserve(config.workers);
    for (std::uint32_t w = 0; w < config.workers; ++w)
        workers_.emplace_back([this, w] { worker_main(w); });
}

Runtime::~Runtime() {
    taskwait();
    scheduler_.request_stop();
    for (auto& t : workers_)
        t.join();
    tls = {};
}

TaskNode& Runtime::make_node(std::vector<DataAccess> accesses, TaskBody body, TaskOptions& opts) {
    auto node = std::make_unique<TaskNode>();
    node->id = next_id_.fetch_add(1, std::memory_order_relaxed);
    node->label = std::move(opts.label);
    node->label_id = trace_.intern_label(node->label);
    node->priority = opts.priority;
    node->body = std::move(body);
    node->accesses = normalize_access_list(std::move(accesses));
    node->trace_iteration = opts.trace_iteration;
    node->fixed_payload.assign(opts.payload.begin(), opts.payload.end());
    node->slots[0].outstanding.store(1, std::memory_order_relaxed); // registration guard
    node->slots[0].armed_iteration = 0;
    TaskNode& ref = *node;
    owned_tasks_.push_back(std::move(node));
    telemetry_.tasks_created.fetch_add(1, std::memory_order_relaxed);
    return ref;
}

TaskNode& Runtime::spawn(std::vector<DataAccess> accesses, TaskBody body, TaskOptions opts) {
    if (tls.task != nullptr) {
        // Nested task: executes under the enclosing task but carries no
        // dependencies of its own.
        if (!accesses.empty())
            throw Error("nested tasks may not declare accesses");
        TaskNode* parent = tls.task;
        auto node = std::make_unique<TaskNode>();
        node->id = next_id_.fetch_add(1, std::memory_order_relaxed);
        node->label = std::move(opts.label);
        node->label_id = 0; // interning is creator-only; nested labels stay anonymous
        node->priority = opts.priority;
        node->body = std::move(body);
        node->trace_iteration = tls.iteration;
        node->fixed_payload.assign(opts.payload.begin(), opts.payload.end());
        node->parent = parent;
        parent->pending_children.fetch_add(1, std::memory_order_acq_rel);
        pending_.fetch_add(1, std::memory_order_acq_rel);
        telemetry_.tasks_created.fetch_add(1, std::memory_order_relaxed);
        TaskNode& ref = *node;
        {
            // Hand ownership to the parent task's finish path via the scope
            // container is creator-only; nested nodes own themselves until
            // finish_one deletes them.
            node.release();
        }
        trace_.record(tls.lane, TraceEv::Create, ref.id, ref.label_id, tls.iteration);
        update_min(first_event_ns_, trace_.now_ns());
        scheduler_.enqueue(&ref);
        return ref;
    }

    if (capture_active_) {
        // Update-mode re-run: append this iteration's arguments to the node
        // recorded at the same position.
        Dctg& g = *capture_graph_;
        if (capture_index_ >= g.recorded_count())
            throw ShapeMismatchError("update body created more tasks than were recorded");
        TaskNode& node = *g.nodes_[capture_index_];
        if (node.label != opts.label)
            throw ShapeMismatchError("update body created tasks in a different order");
        {
            std::lock_guard lock(node.mtx);
            node.arg_queue.emplace_back(opts.payload.begin(), opts.payload.end());
        }
        capture_index_ += 1;
        return node;
    }

    TaskNode& node = make_node(std::move(accesses), std::move(body), opts);

    if (recording_ != nullptr) {
        update_min(first_event_ns_, trace_.now_ns());
        std::unique_ptr<TaskNode> owned = std::move(owned_tasks_.back());
        owned_tasks_.pop_back();
        if (recording_->update_mode()) {
            std::lock_guard lock(node.mtx);
            node.arg_queue.emplace_back(node.fixed_payload.begin(), node.fixed_payload.end());
        }
        recording_->record_node(std::move(owned));
    } else {
        update_min(first_event_ns_, trace_.now_ns());
        pending_.fetch_add(1, std::memory_order_acq_rel);
        main_scope_.register_task(node);
    }

    trace_.record(creator_lane(), TraceEv::Create, node.id, node.label_id, node.trace_iteration);
    publish(node);
    return node;
}

void Runtime::publish(TaskNode& node) {
    std::int32_t left = node.slots[0].outstanding.fetch_sub(1, std::memory_order_acq_rel) - 1;
    assert(left >= 0);
    if (left == 0)
        dispatch_ready({&node});
}

void Runtime::dispatch_ready(const std::vector<TaskNode*>& ready) {
    std::vector<TaskNode*> runnable;
    runnable.reserve(ready.size());
    for (TaskNode* t : ready) {
        if (t->is_proxy)
            grant_proxy(*t->graph);
        else
            runnable.push_back(t);
    }
    if (runnable.size() == 1)
        scheduler_.enqueue(runnable.front());
    else if (!runnable.empty())
        scheduler_.enqueue_batch(runnable);
}

void Runtime::grant_proxy(Dctg& graph) {
    {
        std::lock_guard lock(scope_mtx_);
        graph.proxy_ready_ = true;
    }
    scope_cv_.notify_all();
}

void Runtime::taskwait() {
    assert(tls.task == nullptr && "taskwait may not be called from inside a task");
    std::unique_lock lock(scope_mtx_);
    scope_cv_.wait(lock, [&] { return pending_.load(std::memory_order_acquire) == 0; });
}

TaskiterHandle Runtime::taskiter_begin(const TaskiterOptions& opts) {
    if (tls.task != nullptr || recording_ != nullptr)
        throw NestedTaskiterError("taskiter regions do not nest");
    if (opts.unroll == 0)
        throw InvalidUnrollError("unroll factor must be at least 1");
    if (opts.condition) {
        if (opts.iterations != 0)
            throw InvalidIterationsError(
                "a condition-driven taskiter may not also fix an iteration count");
    } else {
        if (opts.iterations == 0)
            throw InvalidIterationsError(
                "taskiter requires at least one iteration: the recorded pass executes");
        if (opts.iterations % opts.unroll != 0)
            throw InvalidUnrollError("iteration count must be a multiple of the unroll factor");
    }

    auto graph = std::make_unique<Dctg>(GraphMode::Taskiter, opts);
    Dctg& g = *graph;
    graphs_.push_back(std::move(graph));
    pending_.fetch_add(1, std::memory_order_acq_rel); // one token for the whole region

    if (!opts.boundary.empty()) {
        TaskOptions popts;
        popts.label = "taskiter-boundary";
        TaskNode& proxy = make_node(opts.boundary, nullptr, popts);
        proxy.is_proxy = true;
        proxy.graph = &g;
        g.proxy_ = &proxy;
        main_scope_.register_task(proxy);
        trace_.record(creator_lane(), TraceEv::Create, proxy.id, proxy.label_id, 0);
        publish(proxy);
    } else {
        g.proxy_ready_ = true;
    }

    TaskiterHandle handle;
    handle.graph = &g;
    handle.open = true;
    return handle;
}

void Runtime::record_iteration(TaskiterHandle& handle, const std::function<void()>& body) {
    assert(handle.open && handle.graph);
    Dctg& g = *handle.graph;
    // The taskiter registered its boundary accesses like an ordinary task;
    // recording starts once those are satisfied.
    {
        std::unique_lock lock(scope_mtx_);
        scope_cv_.wait(lock, [&] { return g.proxy_ready_; });
    }
    recording_ = &g;
    try {
        for (std::uint32_t r = 0; r < g.unroll(); ++r)
            body();
    } catch (...) {
        recording_ = nullptr;
        abort_recording(g);
        handle.open = false;
        throw;
    }
    recording_ = nullptr;
}

void Runtime::abort_recording(Dctg& graph) {
    // Already-created first-pass tasks run to completion through the
    // recording release path; then the region is torn down without replay.
    for (std::uint32_t i = 0; i < graph.recorded_count(); ++i) {
        while (graph.nodes_[i]->completed.load(std::memory_order_acquire) == 0)
            std::this_thread::yield();
    }
    {
        std::lock_guard lock(graph.mtx_);
        graph.closed_ = true;
    }
    graph.complete_.store(true, std::memory_order_release);
    handle_graph_complete(graph);
}

Dctg& Runtime::taskiter_close(TaskiterHandle& handle) {
    assert(handle.open && handle.graph);
    Dctg& g = *handle.graph;
    handle.open = false;

    TaskNode* condition_node = nullptr;
    if (g.dynamic() && g.recorded_count() > 0) {
        auto node = std::make_unique<TaskNode>();
        node->id = next_id_.fetch_add(1, std::memory_order_relaxed);
        node->label = "condition";
        node->label_id = trace_.intern_label(node->label);
        node->accesses = normalize_access_list(g.condition_->reads);
        node->is_condition = true;
        Dctg* gp = &g;
        auto predicate = g.condition_->predicate;
        node->body = [gp, predicate](const TaskContext&) { gp->condition_result_ = predicate(); };
        telemetry_.tasks_created.fetch_add(1, std::memory_order_relaxed);
        trace_.record(creator_lane(), TraceEv::Create, node->id, node->label_id, 0);
        condition_node = node.release();
    }

    std::vector<TaskNode*> ready = g.finalize(condition_node, pending_drop_cross_);
    pending_drop_cross_.reset();
    last_graph_ = &g.snapshot_;
    last_taskiter_ = &g;
    dispatch_ready(ready);
    if (g.complete())
        handle_graph_complete(g);
    return g;
}

void Runtime::record_update_args(Dctg& graph, const std::function<void()>& body) {
    if (!graph.update_mode())
        throw Error("record_update_args requires a taskiter with the update clause");
    for (std::uint32_t iter = 1;; ++iter) {
        if (!graph.dynamic() && iter >= graph.iteration_limit())
            break;
        graph.wait_capture_floor(iter);
        if (graph.iteration_limit() <= iter || graph.complete())
            break;
        capture_active_ = true;
        capture_graph_ = &graph;
        capture_index_ = 0;
        try {
            for (std::uint32_t r = 0; r < graph.unroll(); ++r)
                body();
            if (capture_index_ != graph.recorded_count())
                throw ShapeMismatchError("update body created fewer tasks than were recorded");
        } catch (...) {
            capture_active_ = false;
            // Iterations without captured arguments cannot run; stop the
            // graph there and drain it before propagating.
            graph.stop_at_limit(iter);
            if (graph.complete())
                handle_graph_complete(graph);
            while (!graph.complete())
                std::this_thread::yield();
            throw;
        }
        capture_active_ = false;

        std::vector<TaskNode*> ready;
        for (std::uint32_t i = 0; i < graph.recorded_count(); ++i) {
            if (TaskNode* r = graph.apply_release(*graph.nodes_[i], iter))
                ready.push_back(r);
        }
        dispatch_ready(ready);
    }
}

void Runtime::wait_taskiter(Dctg& graph) {
    std::uint32_t lane = creator_lane();
    while (!graph.complete()) {
        TaskNode* task = scheduler_.park_and_fetch(lane, &graph.complete_);
        if (!task) {
            if (graph.complete() || scheduler_.stopping())
                break;
            continue;
        }
        run_chain(lane, task);
    }
}

void Runtime::run_taskiter(const TaskiterOptions& opts, const std::function<void()>& body) {
    TaskiterHandle handle = taskiter_begin(opts);
    record_iteration(handle, body);
    Dctg& g = taskiter_close(handle);
    if (opts.update)
        record_update_args(g, body);
    wait_taskiter(g);
}

void Runtime::run_caching(std::uint32_t iterations, const std::function<void()>& body) {
    if (iterations == 0)
        throw InvalidIterationsError("caching requires at least one iteration");
    std::uint32_t left = iterations - 1;
    run_caching_while(body, [&] { return left-- > 0; });
}

std::uint32_t Runtime::run_caching_while(const std::function<void()>& body,
                                         const std::function<bool()>& keep_going) {
    if (tls.task != nullptr || recording_ != nullptr)
        throw NestedTaskiterError("caching regions do not nest");

    TaskiterOptions opts;
    opts.iterations = 1;
    auto graph = std::make_unique<Dctg>(GraphMode::Caching, opts);
    Dctg& g = *graph;
    graphs_.push_back(std::move(graph));
    pending_.fetch_add(1, std::memory_order_acq_rel);
    g.proxy_ready_ = true;

    recording_ = &g;
    try {
        body();
    } catch (...) {
        recording_ = nullptr;
        abort_recording(g);
        throw;
    }
    recording_ = nullptr;
    {
        std::lock_guard lock(g.mtx_);
        g.closed_ = true;
    }

    const std::uint32_t count = g.recorded_count();
    auto wait_done = [&] {
        std::unique_lock lock(g.floor_mtx_);
        g.floor_cv_.wait(lock,
                         [&] { return g.caching_done_.load(std::memory_order_acquire) >= count; });
    };
    wait_done();

    std::vector<TaskNode*> roots;
    for (std::uint32_t i = 0; i < count; ++i) {
        if (g.nodes_[i]->intra_in == 0)
            roots.push_back(g.nodes_[i].get());
    }

    std::uint32_t executed = 1;
    while (count > 0 && keep_going()) {
        for (std::uint32_t i = 0; i < count; ++i) {
            TaskNode& n = *g.nodes_[i];
            std::lock_guard lock(n.mtx);
            n.release_pass_done = false;
            n.slots[0].outstanding.store(static_cast<std::int32_t>(n.intra_in),
                                         std::memory_order_release);
        }
        g.caching_iter_ = executed;
        g.caching_done_.store(0, std::memory_order_release);
        dispatch_ready(roots);
        wait_done();
        executed += 1;
    }

    g.complete_.store(true, std::memory_order_release);
    handle_graph_complete(g);
    return executed;
}

void Runtime::handle_graph_complete(Dctg& graph) {
    if (graph.completion_handled_.exchange(true, std::memory_order_acq_rel))
        return;
    if (graph.proxy_) {
        std::vector<TaskNode*> ready = release_successors(*graph.proxy_);
        dispatch_ready(ready);
    }
    pending_.fetch_sub(1, std::memory_order_acq_rel);
    scope_cv_.notify_all();
    scheduler_.notify_all();
}

void Runtime::worker_main(std::uint32_t lane) {
    tls = {this, nullptr, lane, 0};
    while (true) {
        TaskNode* task = scheduler_.park_and_fetch(lane);
        if (!task)
            return; // stop requested
        run_chain(lane, task);
    }
}

void Runtime::run_chain(std::uint32_t lane, TaskNode* task) {
    while (task) {
        execute(lane, *task);
        std::vector<TaskNode*> ready = finish_cascade(*task);
        NextAction action = scheduler_.on_task_finished(lane, task, ready);
        if (action.execute_now && trace_.enabled() &&
            scheduler_.policy().placement == Placement::OutsideScheduler)
            lane_metrics_[lane].bypasses.emplace_back(task->id, action.execute_now->id);
        task = action.execute_now;
    }
}

void Runtime::execute(std::uint32_t lane, TaskNode& task) {
    Dctg* g = task.graph;
    std::uint32_t iteration = 0;
    if (g && g->mode() == GraphMode::Taskiter)
        iteration = task.completed.load(std::memory_order_acquire);
    else if (g)
        iteration = g->caching_iteration();
    else
        iteration = task.trace_iteration;

    std::vector<std::byte> owned_payload;
    std::span<const std::byte> payload = task.fixed_payload;
    if (g && g->update_mode() && !task.is_condition) {
        std::lock_guard lock(task.mtx);
        assert(!task.arg_queue.empty() && "capture must complete before the iteration starts");
        owned_payload = std::move(task.arg_queue.front());
        task.arg_queue.pop_front();
        payload = owned_payload;
    }

    trace_.record(lane, TraceEv::Start, task.id, task.label_id, iteration);
    std::int64_t t0 = trace_.now_ns();

    ThreadState saved = tls;
    tls.task = &task;
    tls.iteration = iteration;
    try {
        if (task.body)
            task.body(TaskContext{lane, iteration, payload});
    } catch (const std::exception& e) {
        std::fprintf(stderr, "cyclic-tasks: task %llu ('%s') threw: %s\n",
                     static_cast<unsigned long long>(task.id), task.label.c_str(), e.what());
        std::abort();
    } catch (...) {
        std::fprintf(stderr, "cyclic-tasks: task %llu ('%s') threw\n",
                     static_cast<unsigned long long>(task.id), task.label.c_str());
        std::abort();
    }
    tls = saved;

    std::int64_t t1 = trace_.now_ns();
    trace_.record(lane, TraceEv::End, task.id, task.label_id, iteration);
    update_max(last_event_ns_, t1);

    auto& acc = lane_metrics_[lane].timings[task.label_id];
    if (acc.count == 0) {
        acc.min_ns = t1 - t0;
        acc.max_ns = t1 - t0;
    } else {
        acc.min_ns = std::min(acc.min_ns, t1 - t0);
        acc.max_ns = std::max(acc.max_ns, t1 - t0);
    }
    acc.count += 1;
    acc.total_ns += t1 - t0;
}

std::vector<TaskNode*> Runtime::finish_cascade(TaskNode& task) {
    std::vector<TaskNode*> ready;
    TaskNode* node = &task;
    while (node) {
        if (node->pending_children.fetch_sub(1, std::memory_order_acq_rel) != 1)
            break; // nested tasks still running; the last one cascades
        TaskNode* parent = node->parent;
        finish_one(*node, ready);
        node = parent;
    }
    return ready;
}

void Runtime::finish_one(TaskNode& task, std::vector<TaskNode*>& ready) {
    Dctg* g = task.graph;
    if (g && !task.is_proxy) {
        task.pending_children.store(1, std::memory_order_relaxed); // next iteration's body token
        FinishResult res = g->finish(task);
        ready.insert(ready.end(), res.ready.begin(), res.ready.end());
        if (res.completed_graph)
            handle_graph_complete(*g);
        return;
    }

    std::vector<TaskNode*> released = release_successors(task);
    for (TaskNode* t : released) {
        if (t->is_proxy)
            grant_proxy(*t->graph);
        else
            ready.push_back(t);
    }
    if (task.parent == nullptr) {
        pending_.fetch_sub(1, std::memory_order_acq_rel);
        scope_cv_.notify_all();
    } else {
        // Nested tasks own themselves; reclaim here.
        pending_.fetch_sub(1, std::memory_order_acq_rel);
        scope_cv_.notify_all();
        delete &task;
    }
}

MetricsRecord Runtime::snapshot_metrics() const {
    MetricsRecord record;
    record.telemetry = telemetry_.snapshot();
    std::int64_t first = first_event_ns_.load(std::memory_order_relaxed);
    std::int64_t last = last_event_ns_.load(std::memory_order_relaxed);
    record.wall_ns = (first >= 0 && last > first) ? last - first : 0;
    for (const LaneMetrics& lane : lane_metrics_) {
        for (const auto& [label_id, timing] : lane.timings) {
            LabelTiming& merged = record.label_timings[trace_.labels()[label_id]];
            if (merged.count == 0) {
                merged = timing;
            } else {
                merged.count += timing.count;
                merged.total_ns += timing.total_ns;
                merged.min_ns = std::min(merged.min_ns, timing.min_ns);
                merged.max_ns = std::max(merged.max_ns, timing.max_ns);
            }
        }
    }
    return record;
}

const GraphSnapshot* Runtime::last_graph() const { return last_graph_; }

std::uint32_t Runtime::last_taskiter_iterations() const {
    if (!last_taskiter_)
        return 0;
    std::uint32_t limit = last_taskiter_->iteration_limit();
    if (limit == kUnarmed)
        return 0; // still running a condition-driven loop
    return limit * last_taskiter_->unroll();
}

void Runtime::inject_drop_cross_edge(std::size_t index) { pending_drop_cross_ = index; }

std::vector<std::pair<std::uint64_t, std::uint64_t>> Runtime::bypass_log() const {
    std::vector<std::pair<std::uint64_t, std::uint64_t>> log;
    for (const LaneMetrics& lane : lane_metrics_)
        log.insert(log.end(), lane.bypasses.begin(), lane.bypasses.end());
    return log;
}

} // namespace cyclic
