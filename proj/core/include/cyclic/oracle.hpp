#pragma once

#include "cyclic/access.hpp"
#include "cyclic/dctg.hpp"
#include "cyclic/trace.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace cyclic {

/// A task program as the verification battery sees it: access lists only.
/// Deliberately independent of the dependency engine; everything here is
/// computed from first principles over the declared accesses.
struct OracleProgram {
    std::vector<std::vector<DataAccess>> tasks;
};

/// Predecessor relation over task instances, instance = iteration * T + index.
class PrecedenceClosure {
public:
    PrecedenceClosure(std::size_t instances);

    bool precedes(std::size_t before, std::size_t after) const;
    void add_edge_and_close(std::size_t before, std::size_t after); // callers add in topological order
    std::size_t size() const { return n_; }

    friend bool operator==(const PrecedenceClosure&, const PrecedenceClosure&) = default;

private:
    std::size_t n_;
    std::size_t words_;
    std::vector<std::uint64_t> bits_; // row = preds of instance
};

/// Ground truth: every ordered instance pair with a conflicting access pair
/// is an edge; the closure of that relation is the full set of execution
/// order constraints the program implies.
PrecedenceClosure pairwise_conflict_closure(const OracleProgram& program,
                                            std::uint32_t iterations);

/// The constraints the recorded graph implies when unrolled `iterations`
/// times. Considers recorded nodes only; the synthetic condition node is
/// iteration-control machinery, not a data dependency.
PrecedenceClosure dctg_unrolled_closure(const GraphSnapshot& snapshot, std::uint32_t iterations);

OracleProgram program_from_snapshot(const GraphSnapshot& snapshot);

struct EquivalenceReport {
    bool equal = true;
    std::string first_mismatch;
};

/// Compares per-instance predecessor sets between the unrolled DCTG and the
/// pairwise-conflict oracle.
EquivalenceReport check_dctg_equivalence(const GraphSnapshot& snapshot,
                                         std::uint32_t iterations);

struct RandomProgramParams {
    std::uint32_t max_tasks = 12;
    std::uint32_t key_pool = 6;
    std::uint32_t max_accesses = 4;
};

OracleProgram random_program(std::mt19937_64& rng, const RandomProgramParams& params = {});

/// Order-safety audit: for every edge and every iteration pairing its kind
/// implies, the predecessor's end must precede the successor's start in the
/// trace. Returns human-readable violations (empty means safe). Dropped
/// cross edges stay in the audited set.
std::vector<std::string> order_safety_violations(const GraphSnapshot& snapshot,
                                                 const std::vector<ParsedEvent>& events);

} // namespace cyclic
