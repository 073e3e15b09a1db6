#include "nnmd/trace.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

namespace nnmd {

const char* phase_name(Phase p) {
  switch (p) {
    case Phase::classical_md: return "classical_md";
    case Phase::gather_positions: return "gather_positions";
    case Phase::dd_build: return "dd_build";
    case Phase::neighbor_build: return "neighbor_build";
    case Phase::inference: return "inference";
    case Phase::ghost_force_route: return "ghost_force_route";
    case Phase::reduce_forces: return "reduce_forces";
    case Phase::integrate: return "integrate";
  }
  return "unknown";
}

namespace {

Phase phase_from_name(const std::string& name) {
  for (Phase p : {Phase::classical_md, Phase::gather_positions, Phase::dd_build,
                  Phase::neighbor_build, Phase::inference,
                  Phase::ghost_force_route, Phase::reduce_forces,
                  Phase::integrate})
    if (name == phase_name(p)) return p;
  throw Error("unknown phase name: " + name);
}

}  // namespace

double TraceSink::now() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

void TraceSink::record_span(int rank, Phase phase, double t_start, double t_end,
                            long step) {
  require(t_end >= t_start, "record_span: t_end < t_start");
  std::lock_guard<std::mutex> lock(mu_);
  spans_.push_back({rank, phase, t_start, t_end, step});
}

std::vector<Span> TraceSink::spans() const {
  std::lock_guard<std::mutex> lock(mu_);
  return spans_;
}

std::size_t TraceSink::size() const {
  std::lock_guard<std::mutex> lock(mu_);
  return spans_.size();
}

void TraceSink::clear() {
  std::lock_guard<std::mutex> lock(mu_);
  spans_.clear();
}

void export_chrome_trace(const std::vector<Span>& spans,
                         const std::string& path) {
  nlohmann::json events = nlohmann::json::array();
  double t0 = spans.empty() ? 0.0 : spans.front().t_start;
  for (const auto& s : spans) t0 = std::min(t0, s.t_start);
  for (const auto& s : spans) {
    events.push_back({{"name", phase_name(s.phase)},
                      {"cat", "md"},
                      {"ph", "X"},
                      {"ts", (s.t_start - t0) * 1e6},
                      {"dur", (s.t_end - s.t_start) * 1e6},
                      {"pid", 0},
                      {"tid", s.rank},
                      {"args", {{"step", s.step}}}});
  }
  std::ofstream os(path, std::ios::trunc);
  require(os.good(), "export_chrome_trace: cannot open " + path);
  os << events.dump(1) << "\n";
  require(os.good(), "export_chrome_trace: write failed");
}

std::vector<Span> parse_chrome_trace(const std::string& path) {
  std::ifstream is(path);
  require(is.good(), "parse_chrome_trace: cannot open " + path);
  nlohmann::json events = nlohmann::json::parse(is);
  require(events.is_array(), "parse_chrome_trace: expected a JSON array");
  std::vector<Span> spans;
  for (const auto& e : events) {
    Span s;
    s.rank = e.at("tid").get<int>();
    s.phase = phase_from_name(e.at("name").get<std::string>());
    s.t_start = e.at("ts").get<double>() * 1e-6;
    s.t_end = s.t_start + e.at("dur").get<double>() * 1e-6;
    s.step = e.at("args").at("step").get<long>();
    spans.push_back(s);
  }
  return spans;
}

PhaseSummary phase_summary(const std::vector<Span>& spans) {
  require(!spans.empty(), "phase_summary: no spans");
  PhaseSummary out;
  for (const auto& s : spans)
    out.totals[s.rank][s.phase] += s.t_end - s.t_start;

  double grand_total = 0.0;
  std::map<Phase, double> phase_totals;
  for (const auto& [rank, phases] : out.totals) {
    double rank_total = 0.0;
    for (const auto& [p, t] : phases) rank_total += t;
    for (const auto& [p, t] : phases) {
      out.fractions[rank][p] = rank_total > 0.0 ? t / rank_total : 0.0;
      phase_totals[p] += t;
      grand_total += t;
    }
  }
  for (const auto& [p, t] : phase_totals)
    out.aggregate_fraction[p] = grand_total > 0.0 ? t / grand_total : 0.0;

  // Barrier wait from the per-step inference spread: every rank waits for
  // the slowest inference before the force reduction completes.
  std::map<long, std::map<int, double>> inf;  // step -> rank -> seconds
  for (const auto& s : spans)
    if (s.phase == Phase::inference)
      inf[s.step][s.rank] += s.t_end - s.t_start;
  for (const auto& [step, per_rank] : inf) {
    double mx = 0.0;
    for (const auto& [rank, t] : per_rank) mx = std::max(mx, t);
    for (const auto& [rank, t] : per_rank) {
      out.barrier_wait[rank] += mx - t;
      out.total_barrier_wait += mx - t;
    }
  }
  return out;
}

void write_phase_summary_csv(const PhaseSummary& summary,
                             const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  require(os.good(), "write_phase_summary_csv: cannot open " + path);
  os << "rank,phase,seconds,fraction\n";
  for (const auto& [rank, phases] : summary.totals)
    for (const auto& [p, t] : phases)
      os << rank << "," << phase_name(p) << "," << t << ","
         << summary.fractions.at(rank).at(p) << "\n";
  for (const auto& [rank, w] : summary.barrier_wait)
    os << rank << ",barrier_wait," << w << ",\n";
}

}  // namespace nnmd
