#pragma once

#include <chrono>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "nnmd/error.hpp"

namespace nnmd {

enum class Phase {
  classical_md,
  gather_positions,
  dd_build,
  neighbor_build,
  inference,
  ghost_force_route,
  reduce_forces,
  integrate,
};

const char* phase_name(Phase p);

struct Span {
  int rank = 0;
  Phase phase = Phase::inference;
  double t_start = 0.0;  // seconds on the monotonic clock
  double t_end = 0.0;
  long step = 0;
};

/// Append-only span sink, safe for concurrent rank workers. Spans are kept
/// in memory and flushed at run end; per-step file IO would distort the
/// small timings being measured.
class TraceSink {
 public:
  void record_span(int rank, Phase phase, double t_start, double t_end,
                   long step);
  std::vector<Span> spans() const;
  std::size_t size() const;
  void clear();

  static double now();  // monotonic seconds

 private:
  mutable std::mutex mu_;
  std::vector<Span> spans_;
};

/// RAII span around one phase of one rank's step.
class ScopedSpan {
 public:
  ScopedSpan(TraceSink* sink, int rank, Phase phase, long step)
      : sink_(sink), rank_(rank), phase_(phase), step_(step),
        t0_(TraceSink::now()) {}
  ~ScopedSpan() {
    if (sink_) sink_->record_span(rank_, phase_, t0_, TraceSink::now(), step_);
  }
  ScopedSpan(const ScopedSpan&) = delete;
  ScopedSpan& operator=(const ScopedSpan&) = delete;

 private:
  TraceSink* sink_;
  int rank_;
  Phase phase_;
  long step_;
  double t0_;
};

/// Chrome trace-event format: a JSON array of complete ("ph":"X") events,
/// microsecond timestamps, one lane (tid) per rank.
void export_chrome_trace(const std::vector<Span>& spans,
                         const std::string& path);
std::vector<Span> parse_chrome_trace(const std::string& path);

struct PhaseSummary {
  // totals[rank][phase] in seconds, summed over steps
  std::map<int, std::map<Phase, double>> totals;
  // fraction of the per-rank busy time, per rank and phase
  std::map<int, std::map<Phase, double>> fractions;
  std::map<Phase, double> aggregate_fraction;
  // barrier wait attributed to the force reduction: per rank,
  // sum over steps of (max_r t_inference - t_inference_r)
  std::map<int, double> barrier_wait;
  double total_barrier_wait = 0.0;
};

PhaseSummary phase_summary(const std::vector<Span>& spans);

void write_phase_summary_csv(const PhaseSummary& summary,
                             const std::string& path);

}  // namespace nnmd
