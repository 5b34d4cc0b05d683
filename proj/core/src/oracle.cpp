#include "cyclic/oracle.hpp"

#include <map>

namespace cyclic {

PrecedenceClosure::PrecedenceClosure(std::size_t instances)
    : n_(instances), words_((instances + 63) / 64), bits_(n_ * words_, 0) {}

bool PrecedenceClosure::precedes(std::size_t before, std::size_t after) const {
    return (bits_[after * words_ + before / 64] >> (before % 64)) & 1u;
}

void PrecedenceClosure::add_edge_and_close(std::size_t before, std::size_t after) {
    // Inherit the predecessor's own predecessor row, then the predecessor
    // itself. Sound as long as edges arrive in topological order.
    std::uint64_t* dst = &bits_[after * words_];
    const std::uint64_t* src = &bits_[before * words_];
    for (std::size_t w = 0; w < words_; ++w)
        dst[w] |= src[w];
    dst[before / 64] |= std::uint64_t(1) << (before % 64);
}

namespace {

bool lists_conflict(const std::vector<DataAccess>& a, const std::vector<DataAccess>& b) {
    for (const DataAccess& x : a) {
        for (const DataAccess& y : b) {
            if (conflicts(x, y))
                return true;
        }
    }
    return false;
}

} // namespace

PrecedenceClosure pairwise_conflict_closure(const OracleProgram& program,
                                            std::uint32_t iterations) {
    const std::size_t per_iter = program.tasks.size();
    const std::size_t total = per_iter * iterations;
    PrecedenceClosure closure(total);
    for (std::size_t after = 0; after < total; ++after) {
        const auto& al = program.tasks[after % per_iter];
        for (std::size_t before = 0; before < after; ++before) {
            if (lists_conflict(program.tasks[before % per_iter], al))
                closure.add_edge_and_close(before, after);
        }
    }
    return closure;
}

PrecedenceClosure dctg_unrolled_closure(const GraphSnapshot& snapshot, std::uint32_t iterations) {
    const std::size_t per_iter = snapshot.recorded_count;
    const std::size_t total = per_iter * iterations;
    PrecedenceClosure closure(total);

    // Direct edges per unrolled instance, gathered first so they can be
    // closed in (iteration, index) topological order.
    std::vector<std::vector<std::size_t>> preds(total);
    for (const auto& [from, to] : snapshot.intra) {
        if (from >= per_iter || to >= per_iter)
            continue; // condition node machinery
        for (std::uint32_t i = 0; i < iterations; ++i)
            preds[std::size_t(i) * per_iter + to].push_back(std::size_t(i) * per_iter + from);
    }
    for (const auto& [from, to] : snapshot.cross) {
        if (from >= per_iter || to >= per_iter)
            continue;
        for (std::uint32_t i = 0; i + 1 < iterations; ++i)
            preds[std::size_t(i + 1) * per_iter + to].push_back(std::size_t(i) * per_iter + from);
    }
    for (std::size_t inst = 0; inst < total; ++inst) {
        for (std::size_t p : preds[inst])
            closure.add_edge_and_close(p, inst);
    }
    return closure;
}

OracleProgram program_from_snapshot(const GraphSnapshot& snapshot) {
    OracleProgram program;
    program.tasks.reserve(snapshot.recorded_count);
    for (std::uint32_t i = 0; i < snapshot.recorded_count; ++i)
        program.tasks.push_back(snapshot.nodes[i].accesses);
    return program;
}

EquivalenceReport check_dctg_equivalence(const GraphSnapshot& snapshot,
                                         std::uint32_t iterations) {
    EquivalenceReport report;
    OracleProgram program = program_from_snapshot(snapshot);
    PrecedenceClosure oracle = pairwise_conflict_closure(program, iterations);
    PrecedenceClosure graph = dctg_unrolled_closure(snapshot, iterations);

    const std::size_t per_iter = snapshot.recorded_count;
    const std::size_t total = per_iter * iterations;
    for (std::size_t after = 0; after < total; ++after) {
        for (std::size_t before = 0; before < total; ++before) {
            bool want = oracle.precedes(before, after);
            bool got = graph.precedes(before, after);
            if (want != got) {
                report.equal = false;
                report.first_mismatch =
                    "instance (task " + std::to_string(before % per_iter) + ", iter " +
                    std::to_string(before / per_iter) + ") -> (task " +
                    std::to_string(after % per_iter) + ", iter " + std::to_string(after / per_iter) +
                    "): oracle=" + (want ? "yes" : "no") + " dctg=" + (got ? "yes" : "no");
                return report;
            }
        }
    }
    return report;
}

OracleProgram random_program(std::mt19937_64& rng, const RandomProgramParams& params) {
    std::uniform_int_distribution<std::uint32_t> task_count(1, params.max_tasks);
    std::uniform_int_distribution<std::uint32_t> access_count(1, params.max_accesses);
    std::uniform_int_distribution<std::uint64_t> key(1, params.key_pool);
    std::uniform_int_distribution<int> mode(0, 2);

    OracleProgram program;
    std::uint32_t tasks = task_count(rng);
    for (std::uint32_t t = 0; t < tasks; ++t) {
        std::map<std::uint64_t, AccessMode> chosen;
        std::uint32_t accesses = access_count(rng);
        for (std::uint32_t a = 0; a < accesses; ++a)
            chosen.emplace(key(rng), static_cast<AccessMode>(mode(rng)));
        std::vector<DataAccess> list;
        for (auto [k, m] : chosen)
            list.push_back({AccessKey{k}, m});
        program.tasks.push_back(std::move(list));
    }
    return program;
}

std::vector<std::string> order_safety_violations(const GraphSnapshot& snapshot,
                                                 const std::vector<ParsedEvent>& events) {
    struct Interval {
        std::int64_t start = -1, end = -1;
    };
    // (node index, iteration) -> interval; node identity via task id.
    std::map<std::uint64_t, std::uint32_t> index_of;
    for (std::uint32_t i = 0; i < snapshot.nodes.size(); ++i)
        index_of[snapshot.nodes[i].id] = i;

    std::map<std::pair<std::uint32_t, std::uint32_t>, Interval> intervals;
    std::uint32_t max_iter = 0;
    for (const ParsedEvent& e : events) {
        auto it = index_of.find(e.task);
        if (it == index_of.end())
            continue;
        Interval& iv = intervals[{it->second, e.iter}];
        if (e.ev == "start")
            iv.start = e.t_ns;
        else if (e.ev == "end")
            iv.end = e.t_ns;
        max_iter = std::max(max_iter, e.iter);
    }

    std::vector<std::string> violations;
    auto check = [&](std::uint32_t from, std::uint32_t to, std::uint32_t from_iter,
                     std::uint32_t to_iter, const char* kind) {
        auto fi = intervals.find({from, from_iter});
        auto ti = intervals.find({to, to_iter});
        if (fi == intervals.end() || ti == intervals.end())
            return;
        if (fi->second.end < 0 || ti->second.start < 0)
            return;
        if (fi->second.end > ti->second.start) {
            violations.push_back(std::string(kind) + " edge " + std::to_string(from) + "(iter " +
                                 std::to_string(from_iter) + ") -> " + std::to_string(to) +
                                 "(iter " + std::to_string(to_iter) + ") violated: end " +
                                 std::to_string(fi->second.end) + " > start " +
                                 std::to_string(ti->second.start));
        }
    };

    for (const auto& [from, to] : snapshot.intra) {
        for (std::uint32_t i = 0; i <= max_iter; ++i)
            check(from, to, i, i, "intra");
    }
    for (const auto& [from, to] : snapshot.cross) {
        for (std::uint32_t i = 0; i < max_iter; ++i)
            check(from, to, i, i + 1, "cross");
    }
    for (const auto& [from, to] : snapshot.dropped_cross) {
        for (std::uint32_t i = 0; i < max_iter; ++i)
            check(from, to, i, i + 1, "cross");
    }
    return violations;
}

} // namespace cyclic
