#pragma once

#include "cyclic/runtime.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace cyclic {

enum class Kernel : std::uint8_t { Multisaxpy, Heat, HeatWhile, CgLite, Nbody };

const char* to_string(Kernel k);
std::optional<Kernel> parse_kernel(const std::string& name);

enum class CgMatrix : std::uint8_t { Laplace5, Identity };

struct KernelSpec {
    Kernel kernel = Kernel::Multisaxpy;
    std::uint64_t size = 0;       // multisaxpy: vector length; heat: grid side;
                                  // cg_lite: grid side (n = side^2); nbody: particles
    std::uint32_t block = 0;      // granularity lever, must divide the problem
    std::uint32_t iterations = 0; // fixed-count kernels
    double threshold = 0.0;       // heat_while / cg_lite convergence bound
    std::uint64_t seed = 1;       // seed 0 selects canonical unit inputs
    std::uint32_t unroll = 1;
    bool update = false;          // multisaxpy per-iteration scalar
    CgMatrix cg_matrix = CgMatrix::Laplace5;
    bool dump_state = false;      // copy the output buffers into the result
};

void validate_spec(const KernelSpec& spec); // throws Error on a bad shape

struct KernelResult {
    std::uint64_t checksum = 0;
    std::uint32_t iterations_run = 0;
    double fom_units = 0.0;      // work units completed; divide by wall seconds
    std::uint64_t tasks_per_iteration = 0;
    std::vector<double> residual_history; // cg_lite only
    std::vector<double> state;            // filled when dump_state is set
};

std::uint64_t fnv1a64(const void* data, std::size_t len);

/// Sequential reference; the tasked runs must match it bitwise.
KernelResult run_kernel_sequential(const KernelSpec& spec);

/// Runs the kernel under the runtime's configured variant.
KernelResult run_kernel(Runtime& rt, const KernelSpec& spec);

const char* fom_unit_name(Kernel k);

} // namespace cyclic
