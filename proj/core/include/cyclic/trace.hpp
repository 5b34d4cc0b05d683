#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace cyclic {

enum class TraceEv : std::uint8_t { Create, Start, End };

struct TraceEvent {
    TraceEv ev = TraceEv::Create;
    std::uint64_t task = 0;
    std::uint32_t label_id = 0;
    std::uint32_t worker = 0;
    std::uint32_t iter = 0;
    std::int64_t t_ns = 0;
};

/// Collects events into per-thread buffers (no shared lock on the hot path)
/// and merges them at write time. Label strings are interned once.
class TraceRecorder {
public:
    explicit TraceRecorder(std::uint32_t lanes, bool enabled);

    bool enabled() const { return enabled_; }
    std::uint32_t intern_label(const std::string& label); // creator thread only
    void record(std::uint32_t lane, TraceEv ev, std::uint64_t task, std::uint32_t label_id,
                std::uint32_t iter);

    std::vector<TraceEvent> merged() const; // timestamp-ordered
    const std::vector<std::string>& labels() const { return labels_; }
    void write_jsonl(const std::string& path) const;
    std::int64_t now_ns() const;

private:
    bool enabled_;
    std::int64_t origin_ns_;
    std::vector<std::vector<TraceEvent>> lanes_;
    std::vector<std::string> labels_;
    std::map<std::string, std::uint32_t> label_ids_;
};

struct ParsedEvent {
    std::string ev;
    std::uint64_t task = 0;
    std::string label;
    std::uint32_t worker = 0;
    std::uint32_t iter = 0;
    std::int64_t t_ns = 0;
};

class TraceParseError : public std::runtime_error {
public:
    TraceParseError(std::size_t line, const std::string& what)
        : std::runtime_error("trace line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

std::vector<ParsedEvent> parse_trace_file(const std::string& path);

struct WorkerStats {
    std::uint32_t worker = 0;
    std::uint64_t executions = 0;
    std::int64_t busy_ns = 0;
    double utilization = 0.0;
};

struct TraceSummary {
    std::uint64_t events = 0;
    std::int64_t span_ns = 0;
    std::vector<WorkerStats> workers;
    std::map<std::string, std::uint64_t> label_counts;
    std::uint64_t inter_iteration_overlaps = 0;
    std::uint64_t starvation_gaps = 0;
    std::int64_t starved_ns = 0;
};

/// Aggregates a parsed trace: per-worker utilization, per-label counts, the
/// number of execution-interval pairs from different iterations that overlap
/// in time, and idle gaps on other workers while the creating thread was
/// still emitting Create events.
TraceSummary summarize_trace(const std::vector<ParsedEvent>& events);

} // namespace cyclic
