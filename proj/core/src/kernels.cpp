#include "cyclic/kernels.hpp"

#include <cmath>
#include <cstring>
#include <random>

namespace cyclic {

const char* to_string(Kernel k) {
    switch (k) {
    case Kernel::Multisaxpy: return "multisaxpy";
    case Kernel::Heat: return "heat";
    case Kernel::HeatWhile: return "heat_while";
    case Kernel::CgLite: return "cg_lite";
    case Kernel::Nbody: return "nbody";
    }
    return "?";
}

std::optional<Kernel> parse_kernel(const std::string& name) {
    for (Kernel k : {Kernel::Multisaxpy, Kernel::Heat, Kernel::HeatWhile, Kernel::CgLite,
                     Kernel::Nbody}) {
        if (name == to_string(k))
            return k;
    }
    return std::nullopt;
}

const char* fom_unit_name(Kernel k) {
    switch (k) {
    case Kernel::Multisaxpy: return "element-updates/s";
    case Kernel::Heat:
    case Kernel::HeatWhile: return "block-updates/s";
    case Kernel::CgLite: return "iterations/s";
    case Kernel::Nbody: return "pair-interactions/s";
    }
    return "?";
}

std::uint64_t fnv1a64(const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

namespace {

std::uint64_t fnv_accum(std::uint64_t h, const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

std::uint64_t checksum_doubles(std::uint64_t h, const std::vector<double>& v) {
    return fnv_accum(h, v.data(), v.size() * sizeof(double));
}

void fill_uniform(std::mt19937_64& rng, std::vector<double>& v, double lo, double hi) {
    std::uniform_real_distribution<double> dist(lo, hi);
    for (double& x : v)
        x = dist(rng);
}

bool uses_taskiter(const Runtime& rt) { return variant_uses_taskiter(rt.config().variant); }
bool uses_caching(const Runtime& rt) { return rt.config().variant == Variant::Caching; }

std::span<const std::byte> as_bytes(const double& v) {
    return {reinterpret_cast<const std::byte*>(&v), sizeof(double)};
}

// ---------------------------------------------------------------- multisaxpy

struct SaxpyState {
    std::uint64_t n = 0;
    std::uint32_t block = 0, blocks = 0, iterations = 0;
    bool update = false;
    double a = 0.0;
    std::vector<double> x, y;
};

double saxpy_coefficient(const SaxpyState& s, std::uint32_t iter) {
    return s.update ? s.a + 0.125 * double(iter % 7) : s.a;
}

void saxpy_init(SaxpyState& s, const KernelSpec& spec) {
    s.n = spec.size;
    s.block = spec.block;
    s.blocks = static_cast<std::uint32_t>(spec.size / spec.block);
    s.iterations = spec.iterations;
    s.update = spec.update;
    s.x.resize(s.n);
    s.y.resize(s.n);
    if (spec.seed == 0) {
        std::fill(s.x.begin(), s.x.end(), 1.0);
        std::fill(s.y.begin(), s.y.end(), 0.0);
        s.a = 1.0;
        return;
    }
    std::mt19937_64 rng(spec.seed);
    fill_uniform(rng, s.x, -1.0, 1.0);
    fill_uniform(rng, s.y, -1.0, 1.0);
    std::uniform_real_distribution<double> dist(0.25, 1.75);
    s.a = dist(rng);
}

KernelResult saxpy_result(const SaxpyState& s, const KernelSpec& spec) {
    KernelResult r;
    r.checksum = checksum_doubles(0xcbf29ce484222325ull, s.y);
    r.iterations_run = s.iterations;
    r.fom_units = double(s.n) * double(s.iterations);
    r.tasks_per_iteration = s.blocks;
    if (spec.dump_state)
        r.state = s.y;
    return r;
}

KernelResult saxpy_sequential(const KernelSpec& spec) {
    SaxpyState s;
    saxpy_init(s, spec);
    for (std::uint32_t it = 0; it < s.iterations; ++it) {
        double a = saxpy_coefficient(s, it);
        for (std::uint64_t i = 0; i < s.n; ++i)
            s.y[i] += a * s.x[i];
    }
    return saxpy_result(s, spec);
}

KernelResult saxpy_tasked(Runtime& rt, const KernelSpec& spec) {
    SaxpyState s;
    saxpy_init(s, spec);
    const std::uint64_t kx = 1, ky = 1 + s.blocks;

    auto block_body = [&s](std::uint32_t j) {
        return [state = &s, j](const TaskContext& ctx) {
            double a;
            if (state->update)
                std::memcpy(&a, ctx.payload.data(), sizeof a);
            else
                a = state->a;
            std::uint64_t lo = std::uint64_t(j) * state->block;
            std::uint64_t hi = lo + state->block;
            for (std::uint64_t i = lo; i < hi; ++i)
                state->y[i] += a * state->x[i];
        };
    };

    std::uint32_t next_iter = 0;
    auto iteration = [&] {
        double a_i = saxpy_coefficient(s, next_iter);
        for (std::uint32_t j = 0; j < s.blocks; ++j) {
            TaskOptions opts;
            opts.label = "saxpy";
            opts.trace_iteration = next_iter;
            if (s.update)
                opts.payload = as_bytes(a_i);
            rt.spawn({in(kx + j), inout(ky + j)}, block_body(j), opts);
        }
        next_iter += 1;
    };

    if (uses_taskiter(rt)) {
        TaskiterOptions opts;
        opts.iterations = s.iterations;
        opts.unroll = spec.unroll;
        opts.update = s.update;
        rt.run_taskiter(opts, iteration);
    } else if (uses_caching(rt)) {
        if (s.update)
            throw Error("the caching baseline cannot replay per-iteration arguments");
        rt.run_caching(s.iterations, iteration);
    } else {
        for (std::uint32_t it = 0; it < s.iterations; ++it)
            iteration();
        rt.taskwait();
    }
    return saxpy_result(s, spec);
}

// ---------------------------------------------------------------------- heat

struct HeatState {
    std::uint64_t side = 0; // full grid side, boundary ring included
    std::uint32_t block = 0, b = 0;
    std::uint32_t iterations = 0;
    double threshold = 0.0;
    bool with_residual = false;
    std::vector<double> grid;
    std::vector<double> delta; // per-block squared-change subtotals
    double residual = 0.0;

    double& at(std::uint64_t r, std::uint64_t c) { return grid[r * side + c]; }
};

void heat_init(HeatState& s, const KernelSpec& spec) {
    s.side = spec.size;
    s.block = spec.block;
    s.b = static_cast<std::uint32_t>((spec.size - 2) / spec.block);
    s.iterations = spec.iterations;
    s.threshold = spec.threshold;
    s.with_residual = spec.kernel == Kernel::HeatWhile;
    s.grid.assign(s.side * s.side, 0.0);
    s.delta.assign(std::size_t(s.b) * s.b, 0.0);
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    for (std::uint64_t r = 1; r + 1 < s.side; ++r) {
        for (std::uint64_t c = 1; c + 1 < s.side; ++c)
            s.at(r, c) = dist(rng);
    }
    for (std::uint64_t c = 0; c < s.side; ++c)
        s.at(0, c) = 1.0; // heated top edge; the ring stays fixed
}

void heat_cell(HeatState& s, std::uint64_t r, std::uint64_t c, double& dsum) {
    double old = s.at(r, c);
    double v = 0.25 * (s.at(r - 1, c) + s.at(r + 1, c) + s.at(r, c - 1) + s.at(r, c + 1));
    s.at(r, c) = v;
    double d = v - old;
    dsum += d * d;
}

void heat_block(HeatState& s, std::uint32_t R, std::uint32_t C) {
    double dsum = 0.0;
    std::uint64_t r0 = 1 + std::uint64_t(R) * s.block;
    std::uint64_t c0 = 1 + std::uint64_t(C) * s.block;
    for (std::uint64_t r = r0; r < r0 + s.block; ++r) {
        for (std::uint64_t c = c0; c < c0 + s.block; ++c)
            heat_cell(s, r, c, dsum);
    }
    s.delta[std::size_t(R) * s.b + C] = dsum;
}

void heat_gather(HeatState& s) {
    double total = 0.0;
    for (double d : s.delta)
        total += d;
    s.residual = std::sqrt(total);
}

KernelResult heat_result(const HeatState& s, const KernelSpec& spec,
                         std::uint32_t iterations_run) {
    KernelResult r;
    std::uint64_t h = checksum_doubles(0xcbf29ce484222325ull, s.grid);
    if (s.with_residual)
        h = fnv_accum(h, &iterations_run, sizeof(iterations_run));
    r.checksum = h;
    r.iterations_run = iterations_run;
    r.fom_units = double(s.b) * double(s.b) * double(iterations_run);
    r.tasks_per_iteration = std::uint64_t(s.b) * s.b + (s.with_residual ? 1 : 0);
    if (spec.dump_state)
        r.state = s.grid;
    return r;
}

KernelResult heat_sequential(const KernelSpec& spec) {
    HeatState s;
    heat_init(s, spec);
    std::uint32_t count = 0;
    if (!s.with_residual) {
        for (std::uint32_t it = 0; it < s.iterations; ++it, ++count) {
            // Plain row-major Gauss-Seidel sweep over the interior; the
            // per-block subtotals accumulate in the same cell order the
            // blocked version uses.
            std::fill(s.delta.begin(), s.delta.end(), 0.0);
            for (std::uint64_t r = 1; r + 1 < s.side; ++r) {
                for (std::uint64_t c = 1; c + 1 < s.side; ++c) {
                    std::uint32_t R = static_cast<std::uint32_t>((r - 1) / s.block);
                    std::uint32_t C = static_cast<std::uint32_t>((c - 1) / s.block);
                    double dsum = s.delta[std::size_t(R) * s.b + C];
                    heat_cell(s, r, c, dsum);
                    s.delta[std::size_t(R) * s.b + C] = dsum;
                }
            }
        }
    } else {
        do {
            std::fill(s.delta.begin(), s.delta.end(), 0.0);
            for (std::uint64_t r = 1; r + 1 < s.side; ++r) {
                for (std::uint64_t c = 1; c + 1 < s.side; ++c) {
                    std::uint32_t R = static_cast<std::uint32_t>((r - 1) / s.block);
                    std::uint32_t C = static_cast<std::uint32_t>((c - 1) / s.block);
                    double dsum = s.delta[std::size_t(R) * s.b + C];
                    heat_cell(s, r, c, dsum);
                    s.delta[std::size_t(R) * s.b + C] = dsum;
                }
            }
            heat_gather(s);
            ++count;
        } while (s.residual > s.threshold);
    }
    return heat_result(s, spec, count);
}

KernelResult heat_tasked(Runtime& rt, const KernelSpec& spec) {
    HeatState s;
    heat_init(s, spec);
    const std::uint32_t b = s.b;
    const std::uint64_t block_key = 1, residual_key = 1 + std::uint64_t(b) * b;

    auto key_of = [&](std::uint32_t R, std::uint32_t C) {
        return block_key + std::uint64_t(R) * b + C;
    };

    std::uint32_t next_iter = 0;
    auto iteration = [&] {
        for (std::uint32_t R = 0; R < b; ++R) {
            for (std::uint32_t C = 0; C < b; ++C) {
                std::vector<DataAccess> accesses;
                if (R > 0)
                    accesses.push_back(in(key_of(R - 1, C)));
                if (R + 1 < b)
                    accesses.push_back(in(key_of(R + 1, C)));
                if (C > 0)
                    accesses.push_back(in(key_of(R, C - 1)));
                if (C + 1 < b)
                    accesses.push_back(in(key_of(R, C + 1)));
                accesses.push_back(inout(key_of(R, C)));
                TaskOptions opts;
                opts.label = "block computation";
                opts.trace_iteration = next_iter;
                rt.spawn(std::move(accesses),
                         [state = &s, R, C](const TaskContext&) { heat_block(*state, R, C); },
                         opts);
            }
        }
        if (s.with_residual) {
            std::vector<DataAccess> accesses;
            for (std::uint32_t i = 0; i < b * b; ++i)
                accesses.push_back(in(block_key + i));
            accesses.push_back(inout(residual_key));
            TaskOptions opts;
            opts.label = "residual";
            opts.trace_iteration = next_iter;
            rt.spawn(std::move(accesses),
                     [state = &s](const TaskContext&) { heat_gather(*state); }, opts);
        }
        next_iter += 1;
    };

    std::uint32_t count = 0;
    if (uses_taskiter(rt)) {
        TaskiterOptions opts;
        opts.unroll = spec.unroll;
        if (s.with_residual)
            opts.condition = Condition{[state = &s] { return state->residual > state->threshold; },
                                       {in(residual_key)}};
        else
            opts.iterations = s.iterations;
        rt.run_taskiter(opts, iteration);
        count = rt.last_taskiter_iterations();
    } else if (uses_caching(rt)) {
        if (s.with_residual)
            count = rt.run_caching_while(iteration,
                                         [&] { return s.residual > s.threshold; });
        else {
            rt.run_caching(s.iterations, iteration);
            count = s.iterations;
        }
    } else {
        if (s.with_residual) {
            do {
                iteration();
                rt.taskwait();
                ++count;
            } while (s.residual > s.threshold);
        } else {
            for (std::uint32_t it = 0; it < s.iterations; ++it)
                iteration();
            rt.taskwait();
            count = s.iterations;
        }
    }
    return heat_result(s, spec, count);
}

// ------------------------------------------------------------------- cg_lite

struct CgState {
    std::uint64_t g = 0, n = 0;
    std::uint32_t rows_per_block = 0, blocks = 0, iterations = 0;
    double threshold = 0.0;
    CgMatrix matrix = CgMatrix::Laplace5;
    std::vector<double> x, r, p, ap, bvec;
    double rsold = 0.0, rsnew = 0.0, alpha = 0.0, beta = 0.0;
    double residual_norm = 0.0;
    std::vector<double> history;
};

void cg_init(CgState& s, const KernelSpec& spec) {
    s.g = spec.size;
    s.n = s.g * s.g;
    s.rows_per_block = spec.block;
    s.blocks = static_cast<std::uint32_t>(s.g / spec.block);
    s.iterations = spec.iterations;
    s.threshold = spec.threshold;
    s.matrix = spec.cg_matrix;
    s.x.assign(s.n, 0.0);
    s.bvec.resize(s.n);
    if (spec.seed == 0) {
        std::fill(s.bvec.begin(), s.bvec.end(), 0.0);
        s.bvec[0] = 1.0; // e1
    } else {
        std::mt19937_64 rng(spec.seed);
        fill_uniform(rng, s.bvec, -1.0, 1.0);
    }
    s.r = s.bvec; // x0 = 0
    s.p = s.r;
    s.ap.assign(s.n, 0.0);
    double rs = 0.0;
    for (double v : s.r)
        rs += v * v;
    s.rsold = rs;
    s.residual_norm = std::sqrt(rs);
}

void cg_spmv_block(CgState& s, std::uint32_t j) {
    std::uint64_t row0 = std::uint64_t(j) * s.rows_per_block;
    for (std::uint64_t gr = row0; gr < row0 + s.rows_per_block; ++gr) {
        for (std::uint64_t gc = 0; gc < s.g; ++gc) {
            std::uint64_t i = gr * s.g + gc;
            if (s.matrix == CgMatrix::Identity) {
                s.ap[i] = s.p[i];
                continue;
            }
            double v = 4.0 * s.p[i];
            if (gr > 0)
                v -= s.p[i - s.g];
            if (gr + 1 < s.g)
                v -= s.p[i + s.g];
            if (gc > 0)
                v -= s.p[i - 1];
            if (gc + 1 < s.g)
                v -= s.p[i + 1];
            s.ap[i] = v;
        }
    }
}

void cg_alpha(CgState& s) {
    double pap = 0.0;
    for (std::uint64_t i = 0; i < s.n; ++i)
        pap += s.p[i] * s.ap[i];
    s.alpha = s.rsold / pap;
}

void cg_update1_block(CgState& s, std::uint32_t j) {
    std::uint64_t lo = std::uint64_t(j) * s.rows_per_block * s.g;
    std::uint64_t hi = lo + std::uint64_t(s.rows_per_block) * s.g;
    for (std::uint64_t i = lo; i < hi; ++i) {
        s.x[i] += s.alpha * s.p[i];
        s.r[i] -= s.alpha * s.ap[i];
    }
}

void cg_beta(CgState& s) {
    double rs = 0.0;
    for (std::uint64_t i = 0; i < s.n; ++i)
        rs += s.r[i] * s.r[i];
    s.rsnew = rs;
    s.beta = s.rsnew / s.rsold;
    s.rsold = s.rsnew;
    s.residual_norm = std::sqrt(rs);
    s.history.push_back(rs);
}

void cg_update2_block(CgState& s, std::uint32_t j) {
    std::uint64_t lo = std::uint64_t(j) * s.rows_per_block * s.g;
    std::uint64_t hi = lo + std::uint64_t(s.rows_per_block) * s.g;
    for (std::uint64_t i = lo; i < hi; ++i)
        s.p[i] = s.r[i] + s.beta * s.p[i];
}

KernelResult cg_result(const CgState& s, const KernelSpec& spec, std::uint32_t count) {
    KernelResult r;
    std::uint64_t h = checksum_doubles(0xcbf29ce484222325ull, s.x);
    h = checksum_doubles(h, s.history);
    h = fnv_accum(h, &count, sizeof(count));
    r.checksum = h;
    r.iterations_run = count;
    r.fom_units = double(count);
    r.tasks_per_iteration = 3ull * s.blocks + 2;
    r.residual_history = s.history;
    if (spec.dump_state)
        r.state = s.x;
    return r;
}

KernelResult cg_sequential(const KernelSpec& spec) {
    CgState s;
    cg_init(s, spec);
    bool dynamic = s.threshold > 0.0;
    std::uint32_t count = 0;
    for (;;) {
        for (std::uint32_t j = 0; j < s.blocks; ++j)
            cg_spmv_block(s, j);
        cg_alpha(s);
        for (std::uint32_t j = 0; j < s.blocks; ++j)
            cg_update1_block(s, j);
        cg_beta(s);
        for (std::uint32_t j = 0; j < s.blocks; ++j)
            cg_update2_block(s, j);
        ++count;
        if (dynamic) {
            if (!(s.residual_norm > s.threshold))
                break;
        } else if (count == s.iterations) {
            break;
        }
    }
    return cg_result(s, spec, count);
}

KernelResult cg_tasked(Runtime& rt, const KernelSpec& spec) {
    CgState s;
    cg_init(s, spec);
    const std::uint32_t kb = s.blocks;
    const std::uint64_t kp = 1, kap = 1 + kb, kx = 1 + 2ull * kb, kr = 1 + 3ull * kb;
    const std::uint64_t kscal = 1 + 4ull * kb;
    bool dynamic = s.threshold > 0.0;

    std::uint32_t next_iter = 0;
    auto iteration = [&] {
        for (std::uint32_t j = 0; j < kb; ++j) {
            std::vector<DataAccess> acc;
            if (s.matrix != CgMatrix::Identity && j > 0)
                acc.push_back(in(kp + j - 1));
            acc.push_back(in(kp + j));
            if (s.matrix != CgMatrix::Identity && j + 1 < kb)
                acc.push_back(in(kp + j + 1));
            acc.push_back(out(kap + j));
            TaskOptions opts;
            opts.label = "spmv";
            opts.trace_iteration = next_iter;
            rt.spawn(std::move(acc),
                     [state = &s, j](const TaskContext&) { cg_spmv_block(*state, j); }, opts);
        }
        {
            std::vector<DataAccess> acc;
            for (std::uint32_t j = 0; j < kb; ++j) {
                acc.push_back(in(kp + j));
                acc.push_back(in(kap + j));
            }
            acc.push_back(inout(kscal));
            TaskOptions opts;
            opts.label = "dot-alpha";
            opts.trace_iteration = next_iter;
            rt.spawn(std::move(acc), [state = &s](const TaskContext&) { cg_alpha(*state); }, opts);
        }
        for (std::uint32_t j = 0; j < kb; ++j) {
            TaskOptions opts;
            opts.label = "update-xr";
            opts.trace_iteration = next_iter;
            rt.spawn({in(kscal), in(kp + j), in(kap + j), inout(kx + j), inout(kr + j)},
                     [state = &s, j](const TaskContext&) { cg_update1_block(*state, j); }, opts);
        }
        {
            std::vector<DataAccess> acc;
            for (std::uint32_t j = 0; j < kb; ++j)
                acc.push_back(in(kr + j));
            acc.push_back(inout(kscal));
            TaskOptions opts;
            opts.label = "dot-beta";
            opts.trace_iteration = next_iter;
            rt.spawn(std::move(acc), [state = &s](const TaskContext&) { cg_beta(*state); }, opts);
        }
        for (std::uint32_t j = 0; j < kb; ++j) {
            TaskOptions opts;
            opts.label = "update-p";
            opts.trace_iteration = next_iter;
            rt.spawn({in(kscal), in(kr + j), inout(kp + j)},
                     [state = &s, j](const TaskContext&) { cg_update2_block(*state, j); }, opts);
        }
        next_iter += 1;
    };

    std::uint32_t count = 0;
    if (uses_taskiter(rt)) {
        TaskiterOptions opts;
        opts.unroll = spec.unroll;
        if (dynamic)
            opts.condition =
                Condition{[state = &s] { return state->residual_norm > state->threshold; },
                          {in(kscal)}};
        else
            opts.iterations = s.iterations;
        rt.run_taskiter(opts, iteration);
        count = rt.last_taskiter_iterations();
    } else if (uses_caching(rt)) {
        if (dynamic)
            count = rt.run_caching_while(iteration,
                                         [&] { return s.residual_norm > s.threshold; });
        else {
            rt.run_caching(s.iterations, iteration);
            count = s.iterations;
        }
    } else {
        if (dynamic) {
            do {
                iteration();
                rt.taskwait();
                ++count;
            } while (s.residual_norm > s.threshold);
        } else {
            for (std::uint32_t it = 0; it < s.iterations; ++it)
                iteration();
            rt.taskwait();
            count = s.iterations;
        }
    }
    return cg_result(s, spec, count);
}

// --------------------------------------------------------------------- nbody

struct NbodyState {
    std::uint64_t particles = 0;
    std::uint32_t per_block = 0, blocks = 0, steps = 0;
    std::vector<double> px, py, pz, vx, vy, vz, fx, fy, fz, mass;
};

constexpr double kNbodyDt = 1e-2;
constexpr double kNbodySoftening = 1e-3;

void nbody_init(NbodyState& s, const KernelSpec& spec) {
    s.particles = spec.size;
    s.per_block = spec.block;
    s.blocks = static_cast<std::uint32_t>(spec.size / spec.block);
    s.steps = spec.iterations;
    auto resize = [&](std::vector<double>& v) { v.assign(s.particles, 0.0); };
    resize(s.px); resize(s.py); resize(s.pz);
    resize(s.vx); resize(s.vy); resize(s.vz);
    resize(s.fx); resize(s.fy); resize(s.fz);
    s.mass.assign(s.particles, 1.0);
    if (spec.seed == 0) {
        // Mirror-symmetric line of unit masses on the x axis.
        for (std::uint64_t i = 0; i < s.particles; ++i)
            s.px[i] = double(i) - double(s.particles - 1) / 2.0;
        return;
    }
    std::mt19937_64 rng(spec.seed);
    fill_uniform(rng, s.px, -1.0, 1.0);
    fill_uniform(rng, s.py, -1.0, 1.0);
    fill_uniform(rng, s.pz, -1.0, 1.0);
    std::uniform_real_distribution<double> mdist(0.5, 1.5);
    for (double& m : s.mass)
        m = mdist(rng);
}

void nbody_force_block(NbodyState& s, std::uint32_t i, std::uint32_t j) {
    std::uint64_t ai0 = std::uint64_t(i) * s.per_block;
    std::uint64_t aj0 = std::uint64_t(j) * s.per_block;
    for (std::uint64_t a = ai0; a < ai0 + s.per_block; ++a) {
        for (std::uint64_t b = aj0; b < aj0 + s.per_block; ++b) {
            if (a == b)
                continue;
            double dx = s.px[b] - s.px[a];
            double dy = s.py[b] - s.py[a];
            double dz = s.pz[b] - s.pz[a];
            double r2 = dx * dx + dy * dy + dz * dz + kNbodySoftening;
            double inv = 1.0 / (r2 * std::sqrt(r2));
            double f = s.mass[a] * s.mass[b] * inv;
            s.fx[a] += f * dx;
            s.fy[a] += f * dy;
            s.fz[a] += f * dz;
        }
    }
}

void nbody_integrate_block(NbodyState& s, std::uint32_t i) {
    std::uint64_t a0 = std::uint64_t(i) * s.per_block;
    for (std::uint64_t a = a0; a < a0 + s.per_block; ++a) {
        s.vx[a] += s.fx[a] / s.mass[a] * kNbodyDt;
        s.vy[a] += s.fy[a] / s.mass[a] * kNbodyDt;
        s.vz[a] += s.fz[a] / s.mass[a] * kNbodyDt;
        s.px[a] += s.vx[a] * kNbodyDt;
        s.py[a] += s.vy[a] * kNbodyDt;
        s.pz[a] += s.vz[a] * kNbodyDt;
        s.fx[a] = 0.0;
        s.fy[a] = 0.0;
        s.fz[a] = 0.0;
    }
}

KernelResult nbody_result(const NbodyState& s, const KernelSpec& spec) {
    KernelResult r;
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const auto* v : {&s.px, &s.py, &s.pz, &s.vx, &s.vy, &s.vz})
        h = checksum_doubles(h, *v);
    r.checksum = h;
    r.iterations_run = s.steps;
    r.fom_units = double(s.particles) * double(s.particles) * double(s.steps);
    r.tasks_per_iteration = std::uint64_t(s.blocks) * s.blocks + s.blocks;
    if (spec.dump_state) {
        for (const auto* v : {&s.px, &s.py, &s.pz, &s.vx, &s.vy, &s.vz})
            r.state.insert(r.state.end(), v->begin(), v->end());
    }
    return r;
}

KernelResult nbody_sequential(const KernelSpec& spec) {
    NbodyState s;
    nbody_init(s, spec);
    for (std::uint32_t step = 0; step < s.steps; ++step) {
        for (std::uint32_t i = 0; i < s.blocks; ++i) {
            for (std::uint32_t j = 0; j < s.blocks; ++j)
                nbody_force_block(s, i, j);
        }
        for (std::uint32_t i = 0; i < s.blocks; ++i)
            nbody_integrate_block(s, i);
    }
    return nbody_result(s, spec);
}

KernelResult nbody_tasked(Runtime& rt, const KernelSpec& spec) {
    NbodyState s;
    nbody_init(s, spec);
    const std::uint64_t kpos = 1, kforce = 1 + s.blocks;

    std::uint32_t next_iter = 0;
    auto iteration = [&] {
        for (std::uint32_t i = 0; i < s.blocks; ++i) {
            for (std::uint32_t j = 0; j < s.blocks; ++j) {
                std::vector<DataAccess> acc;
                acc.push_back(in(kpos + i));
                if (j != i)
                    acc.push_back(in(kpos + j));
                acc.push_back(inout(kforce + i));
                TaskOptions opts;
                opts.label = "forces";
                opts.trace_iteration = next_iter;
                rt.spawn(std::move(acc),
                         [state = &s, i, j](const TaskContext&) { nbody_force_block(*state, i, j); },
                         opts);
            }
        }
        for (std::uint32_t i = 0; i < s.blocks; ++i) {
            TaskOptions opts;
            opts.label = "integrate";
            opts.trace_iteration = next_iter;
            rt.spawn({inout(kpos + i), inout(kforce + i)},
                     [state = &s, i](const TaskContext&) { nbody_integrate_block(*state, i); },
                     opts);
        }
        next_iter += 1;
    };

    if (uses_taskiter(rt)) {
        TaskiterOptions opts;
        opts.iterations = s.steps;
        opts.unroll = spec.unroll;
        rt.run_taskiter(opts, iteration);
    } else if (uses_caching(rt)) {
        rt.run_caching(s.steps, iteration);
    } else {
        for (std::uint32_t it = 0; it < s.steps; ++it)
            iteration();
        rt.taskwait();
    }
    return nbody_result(s, spec);
}

} // namespace

void validate_spec(const KernelSpec& spec) {
    if (spec.block == 0)
        throw Error("block size must be positive");
    switch (spec.kernel) {
    case Kernel::Multisaxpy:
        if (spec.size == 0 || spec.size % spec.block != 0)
            throw Error("multisaxpy: block must divide the vector length");
        if (spec.iterations == 0)
            throw Error("multisaxpy: iteration count required");
        break;
    case Kernel::Heat:
    case Kernel::HeatWhile:
        if (spec.size < 3 || (spec.size - 2) % spec.block != 0)
            throw Error("heat: block must divide the interior side");
        if (spec.kernel == Kernel::Heat && spec.iterations == 0)
            throw Error("heat: iteration count required");
        if (spec.kernel == Kernel::HeatWhile && !(spec.threshold > 0.0))
            throw Error("heat_while: positive threshold required");
        break;
    case Kernel::CgLite:
        if (spec.size == 0 || spec.size % spec.block != 0)
            throw Error("cg_lite: block must divide the grid side");
        if (spec.iterations == 0 && !(spec.threshold > 0.0))
            throw Error("cg_lite: iteration count or threshold required");
        break;
    case Kernel::Nbody:
        if (spec.size == 0 || spec.size % spec.block != 0)
            throw Error("nbody: block must divide the particle count");
        if (spec.iterations == 0)
            throw Error("nbody: step count required");
        break;
    }
    if (spec.update && spec.kernel != Kernel::Multisaxpy)
        throw Error("update mode is a multisaxpy variant");
    if (spec.unroll == 0)
        throw Error("unroll factor must be positive");
}

KernelResult run_kernel_sequential(const KernelSpec& spec) {
    validate_spec(spec);
    switch (spec.kernel) {
    case Kernel::Multisaxpy: return saxpy_sequential(spec);
    case Kernel::Heat:
    case Kernel::HeatWhile: return heat_sequential(spec);
    case Kernel::CgLite: return cg_sequential(spec);
    case Kernel::Nbody: return nbody_sequential(spec);
    }
    throw Error("unknown kernel");
}

KernelResult run_kernel(Runtime& rt, const KernelSpec& spec) {
    validate_spec(spec);
    switch (spec.kernel) {
    case Kernel::Multisaxpy: return saxpy_tasked(rt, spec);
    case Kernel::Heat:
    case Kernel::HeatWhile: return heat_tasked(rt, spec);
    case Kernel::CgLite: return cg_tasked(rt, spec);
    case Kernel::Nbody: return nbody_tasked(rt, spec);
    }
    throw Error("unknown kernel");
}

} // namespace cyclic
