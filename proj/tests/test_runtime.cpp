#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cyclic/runtime.hpp"

#include <atomic>
#include <map>
#include <mutex>
#include <set>
#include <vector>

using namespace cyclic;

TEST_CASE("a task with no accesses runs immediately") {
    RuntimeConfig cfg{.workers = 2};
    Runtime rt(cfg);
    std::atomic<int> ran{0};
    rt.spawn({}, [&](const TaskContext&) { ran.fetch_add(1); });
    rt.taskwait();
    CHECK(ran.load() == 1);
}

TEST_CASE("two inout spawns on the same key run in order") {
    RuntimeConfig cfg{.workers = 4};
    Runtime rt(cfg);
    std::vector<int> order;
    std::mutex mtx;
    for (int i = 0; i < 2; ++i) {
        rt.spawn({inout(1)}, [&, i](const TaskContext&) {
            std::lock_guard lock(mtx);
            order.push_back(i);
        });
    }
    rt.taskwait();
    CHECK(order == std::vector<int>{0, 1});
}

TEST_CASE("a single worker executes a chain in dependency order") {
    RuntimeConfig cfg{.workers = 1};
    Runtime rt(cfg);
    std::vector<int> order;
    for (int i = 0; i < 3; ++i)
        rt.spawn({inout(5)}, [&order, i](const TaskContext&) { order.push_back(i); });
    rt.taskwait();
    CHECK(order == std::vector<int>{0, 1, 2});
}

TEST_CASE("taskwait with nothing pending returns immediately") {
    RuntimeConfig cfg{.workers = 1};
    Runtime rt(cfg);
    rt.taskwait();
    rt.taskwait();
}

TEST_CASE("taskwait waits for nested spawns transitively") {
    RuntimeConfig cfg{.workers = 4, .trace_enabled = true};
    Runtime rt(cfg);
    std::atomic<int> done{0};
    rt.spawn({}, [&](const TaskContext&) {
        for (int i = 0; i < 3; ++i) {
            rt.spawn({}, [&](const TaskContext&) {
                rt.spawn({}, [&](const TaskContext&) { done.fetch_add(1); });
                done.fetch_add(1);
            });
        }
        done.fetch_add(1);
    });
    rt.taskwait();
    CHECK(done.load() == 7);

    auto events = rt.trace().merged();
    std::map<std::uint64_t, int> balance;
    for (const TraceEvent& e : events) {
        if (e.ev == TraceEv::Start)
            balance[e.task] += 1;
        else if (e.ev == TraceEv::End)
            balance[e.task] -= 1;
    }
    for (auto [task, b] : balance)
        CHECK(b == 0);
}

TEST_CASE("nested tasks may not declare accesses") {
    RuntimeConfig cfg{.workers = 2};
    Runtime rt(cfg);
    std::atomic<bool> threw{false};
    rt.spawn({}, [&](const TaskContext&) {
        try {
            rt.spawn({in(1)}, [](const TaskContext&) {});
        } catch (const Error&) {
            threw.store(true);
        }
    });
    rt.taskwait();
    CHECK(threw.load());
}

TEST_CASE("per-worker trace intervals never overlap") {
    RuntimeConfig cfg{.workers = 4, .trace_enabled = true};
    Runtime rt(cfg);
    for (int i = 0; i < 64; ++i)
        rt.spawn({}, [](const TaskContext&) {});
    rt.taskwait();
    auto events = rt.trace().merged();
    std::map<std::uint32_t, std::int64_t> last_end;
    std::map<std::pair<std::uint64_t, std::uint32_t>, std::int64_t> starts;
    for (const TraceEvent& e : events) {
        if (e.ev == TraceEv::Start) {
            CHECK(e.t_ns >= last_end[e.worker]);
            starts[{e.task, e.iter}] = e.t_ns;
        } else if (e.ev == TraceEv::End) {
            CHECK(starts.count({e.task, e.iter}) == 1);
            last_end[e.worker] = e.t_ns;
        }
    }
}

TEST_CASE("telemetry counts creations and executions") {
    RuntimeConfig cfg{.workers = 2};
    Runtime rt(cfg);
    for (int i = 0; i < 10; ++i)
        rt.spawn({}, [](const TaskContext&) {});
    rt.taskwait();
    auto metrics = rt.snapshot_metrics();
    CHECK(metrics.telemetry.tasks_created == 10);
    CHECK(metrics.telemetry.tasks_popped + metrics.telemetry.bypasses == 10);
    CHECK(metrics.telemetry.bypasses == 0); // placement None
    CHECK(metrics.wall_ns > 0);
}

TEST_CASE("label timings aggregate per label") {
    RuntimeConfig cfg{.workers = 2};
    Runtime rt(cfg);
    for (int i = 0; i < 4; ++i) {
        TaskOptions opts;
        opts.label = "phase-a";
        rt.spawn({}, [](const TaskContext&) {}, opts);
    }
    rt.taskwait();
    auto metrics = rt.snapshot_metrics();
    REQUIRE(metrics.label_timings.count("phase-a") == 1);
    CHECK(metrics.label_timings.at("phase-a").count == 4);
}

TEST_CASE("priorities order execution on a single worker") {
    RuntimeConfig cfg{.workers = 1};
    Runtime rt(cfg);
    std::vector<int> order;
    std::mutex mtx;
    std::atomic<bool> release{false};
    // Hold the worker so the later spawns pile up in the queue.
    rt.spawn({}, [&](const TaskContext&) {
        while (!release.load())
            std::this_thread::yield();
    });
    for (int i = 0; i < 3; ++i) {
        TaskOptions opts;
        opts.priority = i;
        rt.spawn({}, [&, i](const TaskContext&) {
            std::lock_guard lock(mtx);
            order.push_back(i);
        }, opts);
    }
    release.store(true);
    rt.taskwait();
    CHECK(order == std::vector<int>{2, 1, 0});
}

TEST_CASE("bypass monotonicity: outside <= inside <= none on the same workload") {
    auto run = [](Variant variant) {
        RuntimeConfig cfg{.workers = 4, .variant = variant, .seed = 5};
        Runtime rt(cfg);
        for (int step = 0; step < 200; ++step) {
            rt.spawn({inout(std::uint64_t(step % 8) + 1)}, [](const TaskContext&) {});
            rt.spawn({in(std::uint64_t(step % 8) + 1), inout(100)}, [](const TaskContext&) {});
        }
        rt.taskwait();
        return rt.snapshot_metrics().telemetry.scheduler_entries;
    };
    std::uint64_t none = run(Variant::Tasks);
    std::uint64_t inside = run(Variant::TasksIS);
    std::uint64_t outside = run(Variant::TasksISBypass);
    CHECK(outside <= inside);
    CHECK(inside <= none);
}
