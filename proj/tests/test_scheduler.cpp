#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cyclic/scheduler.hpp"

#include <cmath>
#include <memory>
#include <thread>
#include <vector>

using namespace cyclic;

namespace {

std::vector<std::unique_ptr<TaskNode>> make_tasks(std::size_t count, int priority = 0) {
    std::vector<std::unique_ptr<TaskNode>> tasks;
    for (std::size_t i = 0; i < count; ++i) {
        auto t = std::make_unique<TaskNode>();
        t->id = i;
        t->priority = priority;
        tasks.push_back(std::move(t));
    }
    return tasks;
}

} // namespace

TEST_CASE("fetch returns highest priority first, FIFO within a priority") {
    SchedTelemetry telemetry;
    Scheduler sched(1, {}, telemetry);
    auto tasks = make_tasks(4);
    int prios[] = {3, 7, 7, 1};
    for (int i = 0; i < 4; ++i) {
        tasks[i]->priority = prios[i];
        sched.enqueue(tasks[i].get());
    }
    CHECK(sched.fetch(0)->id == 1);
    CHECK(sched.fetch(0)->id == 2);
    CHECK(sched.fetch(0)->id == 0);
    CHECK(sched.fetch(0)->id == 3);
}

TEST_CASE("fetch on an empty queue reports idle") {
    SchedTelemetry telemetry;
    Scheduler sched(1, {}, telemetry);
    CHECK(sched.fetch(0) == nullptr);
}

TEST_CASE("every enqueued task is fetched exactly once under contention") {
    SchedTelemetry telemetry;
    const std::uint32_t workers = 8;
    Scheduler sched(workers, {}, telemetry);
    const std::size_t total = 100000;
    auto tasks = make_tasks(total);
    std::vector<std::atomic<int>> seen(total);
    for (auto& s : seen)
        s.store(0);

    std::thread producer([&] {
        for (auto& t : tasks)
            sched.enqueue(t.get());
    });
    std::vector<std::thread> consumers;
    std::atomic<std::size_t> fetched{0};
    for (std::uint32_t w = 0; w < workers; ++w) {
        consumers.emplace_back([&, w] {
            while (fetched.load() < total) {
                TaskNode* t = sched.fetch(w);
                if (!t) {
                    std::this_thread::yield();
                    continue;
                }
                seen[t->id].fetch_add(1);
                fetched.fetch_add(1);
            }
        });
    }
    producer.join();
    for (auto& c : consumers)
        c.join();
    for (auto& s : seen)
        REQUIRE(s.load() == 1);
    auto snap = telemetry.snapshot();
    CHECK(snap.tasks_enqueued == total);
    CHECK(snap.tasks_popped == total);
}

TEST_CASE("parked workers are served by the enqueuing lock holder") {
    SchedTelemetry telemetry;
    Scheduler sched(2, {}, telemetry);
    auto tasks = make_tasks(2);
    std::atomic<TaskNode*> got0{nullptr}, got1{nullptr};
    std::thread w0([&] { got0.store(sched.park_and_fetch(0)); });
    std::thread w1([&] { got1.store(sched.park_and_fetch(1)); });
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
    sched.enqueue_batch({tasks[0].get(), tasks[1].get()});
    w0.join();
    w1.join();
    CHECK(got0.load() != nullptr);
    CHECK(got1.load() != nullptr);
    CHECK(got0.load() != got1.load());
}

TEST_CASE("outside placement marks the first ready task of maximal priority") {
    SchedTelemetry telemetry;
    PolicyConfig policy{Placement::OutsideScheduler, 0.0, 42};
    Scheduler sched(1, policy, telemetry);
    auto tasks = make_tasks(4);
    tasks[0]->priority = 1; // S5
    tasks[1]->priority = 9; // S9a
    tasks[2]->priority = 9; // S9b
    std::vector<TaskNode*> ready{tasks[0].get(), tasks[1].get(), tasks[2].get()};

    std::uint64_t entries_before = telemetry.snapshot().scheduler_entries;
    NextAction action = sched.on_task_finished(0, tasks[3].get(), ready);
    REQUIRE(action.execute_now == tasks[1].get()); // first of the highest priority
    CHECK(telemetry.snapshot().bypasses == 1);
    // The hand-off itself did not enter the combiner; only the remainder was
    // published (one batch entry).
    CHECK(telemetry.snapshot().scheduler_entries == entries_before + 1);
    CHECK(sched.fetch(0) == tasks[2].get()); // S9b before S5
    CHECK(sched.fetch(0) == tasks[0].get());
}

TEST_CASE("an empty ready set sends the worker to the scheduler") {
    SchedTelemetry telemetry;
    Scheduler sched(1, {Placement::OutsideScheduler, 0.0, 1}, telemetry);
    auto tasks = make_tasks(1);
    NextAction action = sched.on_task_finished(0, tasks[0].get(), {});
    CHECK(action.execute_now == nullptr);
    CHECK(telemetry.snapshot().bypasses == 0);
}

TEST_CASE("skip probability one disables immediate successors entirely") {
    SchedTelemetry telemetry;
    Scheduler sched(1, {Placement::OutsideScheduler, 1.0, 7}, telemetry);
    auto tasks = make_tasks(64);
    for (std::size_t i = 0; i + 1 < tasks.size(); i += 2) {
        std::vector<TaskNode*> ready{tasks[i].get()};
        NextAction action = sched.on_task_finished(0, tasks[i + 1].get(), ready);
        CHECK(action.execute_now == nullptr);
    }
    auto snap = telemetry.snapshot();
    CHECK(snap.bypasses == 0);
    CHECK(snap.tasks_enqueued == 32);
}

TEST_CASE("inside placement hands the successor back through the combiner") {
    SchedTelemetry telemetry;
    Scheduler sched(1, {Placement::InsideScheduler, 0.0, 7}, telemetry);
    auto tasks = make_tasks(3);
    std::vector<TaskNode*> ready{tasks[0].get(), tasks[1].get()};
    NextAction action = sched.on_task_finished(0, tasks[2].get(), ready);
    REQUIRE(action.execute_now == tasks[0].get());
    auto snap = telemetry.snapshot();
    CHECK(snap.bypasses == 0); // went through the lock
    CHECK(snap.tasks_enqueued == 2);
    CHECK(snap.tasks_popped == 1);
    CHECK(sched.fetch(0) == tasks[1].get());
}

TEST_CASE("the marking rate tracks 1-p within three sigma") {
    for (double p : {0.1, 0.5, 0.9}) {
        SchedTelemetry telemetry;
        Scheduler sched(1, {Placement::OutsideScheduler, p, 1234}, telemetry);
        auto tasks = make_tasks(2);
        const int draws = 10000;
        int marked = 0;
        for (int i = 0; i < draws; ++i) {
            std::vector<TaskNode*> ready{tasks[0].get()};
            NextAction action = sched.on_task_finished(0, tasks[1].get(), ready);
            if (action.execute_now) {
                marked += 1;
            } else {
                sched.fetch(0); // drain
            }
        }
        double expect = (1.0 - p) * draws;
        double sigma = std::sqrt(p * (1.0 - p) * draws);
        CHECK(std::abs(marked - expect) <= 3.0 * sigma);
    }
}

TEST_CASE("draws are reproducible for a fixed seed") {
    auto run = [](std::uint64_t seed) {
        SchedTelemetry telemetry;
        Scheduler sched(1, {Placement::OutsideScheduler, 0.5, seed}, telemetry);
        auto tasks = make_tasks(2);
        std::vector<bool> marks;
        for (int i = 0; i < 200; ++i) {
            std::vector<TaskNode*> ready{tasks[0].get()};
            NextAction action = sched.on_task_finished(0, tasks[1].get(), ready);
            marks.push_back(action.execute_now != nullptr);
            if (!action.execute_now)
                sched.fetch(0);
        }
        return marks;
    };
    CHECK(run(9) == run(9));
    CHECK(run(9) != run(10));
}
