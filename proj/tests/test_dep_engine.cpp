#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cyclic/dep_engine.hpp"
#include "cyclic/oracle.hpp"

#include <atomic>
#include <memory>
#include <random>
#include <set>
#include <thread>

using namespace cyclic;

namespace {

// Minimal creator-side protocol: guard the counter, register, publish.
struct Program {
    DependencyScope scope{/*track_for_graph=*/true};
    std::vector<std::unique_ptr<TaskNode>> tasks;

    TaskNode& add(std::vector<DataAccess> accesses) {
        auto node = std::make_unique<TaskNode>();
        node->id = tasks.size();
        node->creation_index = static_cast<std::uint32_t>(tasks.size());
        node->accesses = normalize_access_list(std::move(accesses));
        node->slots[0].outstanding.store(1);
        node->slots[0].armed_iteration = 0;
        tasks.push_back(std::move(node));
        TaskNode& t = *tasks.back();
        scope.register_task(t);
        t.slots[0].outstanding.fetch_sub(1);
        return t;
    }

    std::set<std::pair<std::uint64_t, std::uint64_t>> edge_pairs() const {
        std::set<std::pair<std::uint64_t, std::uint64_t>> pairs;
        for (const auto& t : tasks) {
            for (const SuccessorEdge& e : t->successors)
                pairs.insert({t->id, e.to->id});
        }
        return pairs;
    }
};

} // namespace

TEST_CASE("reader after writer depends on the writer") {
    Program p;
    TaskNode& t1 = p.add({in(10)});
    TaskNode& t2 = p.add({out(10)});
    (void)t1;
    CHECK(p.edge_pairs() == std::set<std::pair<std::uint64_t, std::uint64_t>>{{0, 1}});
    CHECK(t2.slots[0].outstanding.load() == 1);
    const BottomEntry& entry = p.scope.bottom_map().at(10);
    CHECK(entry.last_writer == &t2);
    CHECK(entry.trailing_readers.empty());
}

TEST_CASE("the first accessor of a key has no predecessors") {
    Program p;
    TaskNode& t = p.add({out(42)});
    CHECK(t.slots[0].outstanding.load() == 0);
    CHECK(t.successors.empty());
}

TEST_CASE("a reader group orders behind its writer and in front of the next") {
    Program p;
    p.add({out(5)});            // W
    p.add({in(5)});             // R1
    p.add({in(5)});             // R2
    TaskNode& w2 = p.add({out(5)});
    std::set<std::pair<std::uint64_t, std::uint64_t>> expected{{0, 1}, {0, 2}, {1, 3}, {2, 3}};
    CHECK(p.edge_pairs() == expected);
    CHECK(w2.slots[0].outstanding.load() == 2);

    // The registration graph implies exactly the constraints the brute-force
    // pairwise-conflict analysis implies.
    OracleProgram program;
    for (const auto& t : p.tasks)
        program.tasks.push_back(t->accesses);
    PrecedenceClosure oracle = pairwise_conflict_closure(program, 1);

    PrecedenceClosure graph(p.tasks.size());
    for (const auto& t : p.tasks) {
        for (const SuccessorEdge& e : t->successors)
            graph.add_edge_and_close(t->id, e.to->id);
    }
    CHECK(graph == oracle);
}

TEST_CASE("registration graphs imply the same order as pairwise conflicts, randomized") {
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 300; ++trial) {
        OracleProgram program = random_program(rng);
        Program p;
        for (const auto& accesses : program.tasks)
            p.add(std::vector<DataAccess>(accesses));

        PrecedenceClosure graph(p.tasks.size());
        for (std::size_t idx = 0; idx < p.tasks.size(); ++idx) {
            for (const SuccessorEdge& e : p.tasks[idx]->successors)
                graph.add_edge_and_close(idx, e.to->id);
        }
        PrecedenceClosure oracle = pairwise_conflict_closure(program, 1);
        REQUIRE(graph == oracle);
    }
}

TEST_CASE("release returns a single-predecessor successor immediately") {
    Program p;
    TaskNode& t = p.add({out(1)});
    TaskNode& s = p.add({in(1)});
    auto ready = release_successors(t);
    REQUIRE(ready.size() == 1);
    CHECK(ready[0] == &s);
}

TEST_CASE("a join node is returned by the releaser that zeroes it") {
    Program p;
    TaskNode& a = p.add({out(1)});
    TaskNode& b = p.add({out(2)});
    TaskNode& j = p.add({in(1), in(2)});
    CHECK(release_successors(a).empty()); // one of two predecessors: not ready yet
    auto second = release_successors(b);
    REQUIRE(second.size() == 1);
    CHECK(second[0] == &j);
}

TEST_CASE("diamond: the last releaser returns the sink exactly once") {
    for (int trial = 0; trial < 500; ++trial) {
        Program p;
        TaskNode& a = p.add({out(1)});
        TaskNode& b = p.add({in(1), out(2)});
        TaskNode& c = p.add({in(1), out(3)});
        TaskNode& d = p.add({in(2), in(3)});

        auto from_a = release_successors(a);
        REQUIRE(from_a.size() == 2);
        CHECK(from_a[0] == &b);
        CHECK(from_a[1] == &c);

        std::atomic<int> d_ready_count{0};
        std::thread t1([&] {
            for (TaskNode* r : release_successors(b)) {
                if (r == &d)
                    d_ready_count.fetch_add(1);
            }
        });
        std::thread t2([&] {
            for (TaskNode* r : release_successors(c)) {
                if (r == &d)
                    d_ready_count.fetch_add(1);
            }
        });
        t1.join();
        t2.join();
        REQUIRE(d_ready_count.load() == 1);
    }
}

TEST_CASE("exactly-once readiness under many concurrent releasers") {
    std::mt19937_64 rng(77);
    for (int trial = 0; trial < 400; ++trial) {
        Program p;
        OracleProgram program = random_program(rng);
        for (const auto& accesses : program.tasks)
            p.add(std::vector<DataAccess>(accesses));

        // Topological execution with up to 8 releaser threads; count how often
        // each task is reported ready.
        std::vector<std::atomic<int>> ready_count(p.tasks.size());
        for (auto& c : ready_count)
            c.store(0);
        std::vector<TaskNode*> frontier;
        for (const auto& t : p.tasks) {
            if (t->slots[0].outstanding.load() == 0) {
                frontier.push_back(t.get());
                ready_count[t->id].fetch_add(1);
            }
        }
        while (!frontier.empty()) {
            std::vector<TaskNode*> next;
            std::mutex next_mtx;
            std::vector<std::thread> threads;
            std::size_t stride = std::max<std::size_t>(1, frontier.size() / 8);
            for (std::size_t start = 0; start < frontier.size(); start += stride) {
                std::size_t end = std::min(frontier.size(), start + stride);
                threads.emplace_back([&, start, end] {
                    for (std::size_t i = start; i < end; ++i) {
                        auto ready = release_successors(*frontier[i]);
                        std::lock_guard lock(next_mtx);
                        for (TaskNode* r : ready) {
                            ready_count[r->id].fetch_add(1);
                            next.push_back(r);
                        }
                    }
                });
            }
            for (auto& t : threads)
                t.join();
            frontier = std::move(next);
        }
        for (std::size_t i = 0; i < p.tasks.size(); ++i) {
            REQUIRE(ready_count[i].load() == 1);
            REQUIRE(p.tasks[i]->slots[0].outstanding.load() == 0);
        }
    }
}

TEST_CASE("scope reset forgets previous registrations") {
    Program p;
    p.add({out(9)});
    p.scope.reset();
    auto node = std::make_unique<TaskNode>();
    node->accesses = normalize_access_list({in(9)});
    node->slots[0].outstanding.store(1);
    p.scope.register_task(*node);
    CHECK(node->slots[0].outstanding.load() == 1); // only the guard: no edges derived
    CHECK(p.scope.intra_edges().empty());
}

TEST_CASE("match_cross_iteration links the last writer to the leading reader") {
    Program p;
    TaskNode& t1 = p.add({in(7)});
    TaskNode& t2 = p.add({out(7)});
    auto cross = match_cross_iteration(p.scope.top_map(), p.scope.bottom_map());
    REQUIRE(cross.size() == 1);
    CHECK(cross[0].from == &t2);
    CHECK(cross[0].to == &t1);
    CHECK(cross[0].kind == EdgeKind::CrossIteration);
}

TEST_CASE("read-only keys produce no cross edges") {
    Program p;
    p.add({in(3)});
    p.add({in(3)});
    CHECK(match_cross_iteration(p.scope.top_map(), p.scope.bottom_map()).empty());
}

TEST_CASE("a single inout task closes on itself") {
    Program p;
    TaskNode& t = p.add({inout(4)});
    auto cross = match_cross_iteration(p.scope.top_map(), p.scope.bottom_map());
    REQUIRE(cross.size() == 1);
    CHECK(cross[0].from == &t);
    CHECK(cross[0].to == &t);
}

TEST_CASE("trailing readers bind to the next iteration's first writer") {
    Program p;
    TaskNode& r1 = p.add({in(6)});
    TaskNode& w = p.add({inout(6)});
    TaskNode& r2 = p.add({in(6)});
    auto cross = match_cross_iteration(p.scope.top_map(), p.scope.bottom_map());
    // w(i) -> r1(i+1) read-after-write, r2(i) -> w(i+1) write-after-read.
    REQUIRE(cross.size() == 2);
    std::set<std::pair<TaskNode*, TaskNode*>> got;
    for (const EdgeRec& e : cross)
        got.insert({e.from, e.to});
    std::set<std::pair<TaskNode*, TaskNode*>> expected{{&w, &r1}, {&r2, &w}};
    CHECK(got == expected);
}
