#include "cyclic/trace.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <fstream>

namespace cyclic {

namespace {

std::int64_t steady_ns() {
    return std::chrono::duration_cast<std::chrono::nanoseconds>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

const char* ev_name(TraceEv ev) {
    switch (ev) {
    case TraceEv::Create: return "create";
    case TraceEv::Start: return "start";
    case TraceEv::End: return "end";
    }
    return "?";
}

} // namespace

TraceRecorder::TraceRecorder(std::uint32_t lanes, bool enabled)
    : enabled_(enabled), origin_ns_(steady_ns()), lanes_(lanes) {
    for (auto& lane : lanes_)
        lane.reserve(enabled ? 4096 : 0);
    intern_label("");
}

std::uint32_t TraceRecorder::intern_label(const std::string& label) {
    auto [it, inserted] = label_ids_.try_emplace(label, static_cast<std::uint32_t>(labels_.size()));
    if (inserted)
        labels_.push_back(label);
    return it->second;
}

void TraceRecorder::record(std::uint32_t lane, TraceEv ev, std::uint64_t task,
                           std::uint32_t label_id, std::uint32_t iter) {
    if (!enabled_)
        return;
    lanes_[lane].push_back({ev, task, label_id, lane, iter, steady_ns() - origin_ns_});
}

std::int64_t TraceRecorder::now_ns() const { return steady_ns() - origin_ns_; }

std::vector<TraceEvent> TraceRecorder::merged() const {
    std::vector<TraceEvent> all;
    std::size_t total = 0;
    for (const auto& lane : lanes_)
        total += lane.size();
    all.reserve(total);
    for (const auto& lane : lanes_)
        all.insert(all.end(), lane.begin(), lane.end());
    std::stable_sort(all.begin(), all.end(),
                     [](const TraceEvent& a, const TraceEvent& b) { return a.t_ns < b.t_ns; });
    return all;
}

void TraceRecorder::write_jsonl(const std::string& path) const {
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot open trace file for writing: " + path);
    for (const TraceEvent& e : merged()) {
        nlohmann::json j{{"ev", ev_name(e.ev)},
                         {"task", e.task},
                         {"label", labels_[e.label_id]},
                         {"worker", e.worker},
                         {"iter", e.iter},
                         {"t_ns", e.t_ns}};
        out << j.dump() << '\n';
    }
}

std::vector<ParsedEvent> parse_trace_file(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open trace file: " + path);
    std::vector<ParsedEvent> events;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty())
            continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded())
            throw TraceParseError(line_no, "malformed JSON");
        try {
            ParsedEvent e;
            e.ev = j.at("ev").get<std::string>();
            e.task = j.at("task").get<std::uint64_t>();
            e.label = j.at("label").get<std::string>();
            e.worker = j.at("worker").get<std::uint32_t>();
            e.iter = j.at("iter").get<std::uint32_t>();
            e.t_ns = j.at("t_ns").get<std::int64_t>();
            events.push_back(std::move(e));
        } catch (const nlohmann::json::exception& ex) {
            throw TraceParseError(line_no, ex.what());
        }
    }
    return events;
}

TraceSummary summarize_trace(const std::vector<ParsedEvent>& events) {
    TraceSummary summary;
    summary.events = events.size();
    if (events.empty())
        return summary;

    struct Interval {
        std::int64_t start, end;
        std::uint32_t iter, worker;
    };
    std::vector<Interval> intervals;
    std::map<std::uint32_t, std::vector<Interval>> per_worker;
    // Open start events keyed by (task, iter).
    std::map<std::pair<std::uint64_t, std::uint32_t>, std::int64_t> open;
    std::vector<std::int64_t> creates;
    std::int64_t t_min = events.front().t_ns, t_max = events.front().t_ns;

    for (const ParsedEvent& e : events) {
        t_min = std::min(t_min, e.t_ns);
        t_max = std::max(t_max, e.t_ns);
        summary.label_counts[e.label] += 1;
        if (e.ev == "create") {
            creates.push_back(e.t_ns);
        } else if (e.ev == "start") {
            open[{e.task, e.iter}] = e.t_ns;
        } else if (e.ev == "end") {
            auto it = open.find({e.task, e.iter});
            if (it != open.end()) {
                Interval iv{it->second, e.t_ns, e.iter, e.worker};
                intervals.push_back(iv);
                per_worker[e.worker].push_back(iv);
                open.erase(it);
            }
        }
    }
    summary.span_ns = t_max - t_min;

    for (auto& [worker, ivs] : per_worker) {
        WorkerStats ws;
        ws.worker = worker;
        ws.executions = ivs.size();
        for (const Interval& iv : ivs)
            ws.busy_ns += iv.end - iv.start;
        ws.utilization = summary.span_ns > 0 ? double(ws.busy_ns) / double(summary.span_ns) : 0.0;
        summary.workers.push_back(ws);
    }

    // Overlapping execution pairs from different iterations, found with a
    // sweep over start-sorted intervals.
    std::sort(intervals.begin(), intervals.end(),
              [](const Interval& a, const Interval& b) { return a.start < b.start; });
    std::vector<const Interval*> active;
    for (const Interval& iv : intervals) {
        active.erase(std::remove_if(active.begin(), active.end(),
                                    [&](const Interval* a) { return a->end <= iv.start; }),
                     active.end());
        for (const Interval* a : active) {
            if (a->iter != iv.iter)
                summary.inter_iteration_overlaps += 1;
        }
        active.push_back(&iv);
    }

    // Starvation: idle stretches on non-creator workers while Create events
    // were still being emitted.
    if (!creates.empty()) {
        std::int64_t create_begin = *std::min_element(creates.begin(), creates.end());
        std::int64_t create_end = *std::max_element(creates.begin(), creates.end());
        for (auto& [worker, ivs] : per_worker) {
            std::sort(ivs.begin(), ivs.end(),
                      [](const Interval& a, const Interval& b) { return a.start < b.start; });
            std::int64_t cursor = create_begin;
            for (const Interval& iv : ivs) {
                if (iv.start > cursor) {
                    std::int64_t gap_begin = std::max(cursor, create_begin);
                    std::int64_t gap_end = std::min(iv.start, create_end);
                    if (gap_end > gap_begin) {
                        summary.starvation_gaps += 1;
                        summary.starved_ns += gap_end - gap_begin;
                    }
                }
                cursor = std::max(cursor, iv.end);
            }
            if (cursor < create_end) {
                summary.starvation_gaps += 1;
                summary.starved_ns += create_end - cursor;
            }
        }
    }
    return summary;
}

} // namespace cyclic
