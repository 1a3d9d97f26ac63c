#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "stocpen/solver.hpp"
#include "stocpen/test_problems.hpp"

namespace stocpen {

/// Parsed experiment plan. Text format: key=value lines grouped under
/// [problem], [run], [seeds], [output] and optional [report] sections.
struct ExperimentPlan {
  TestProblemDescriptor problem;
  std::string algorithm = "alg1";        // alg1 | alg2
  std::string schedule = "alg1-general"; // alg1-general | alg2-subquadratic | alg2-general
  double theta_hat = 1.0;
  double theta = 1.0;
  long long iterations = 0;
  long long trace_stride = 0;
  double epsilon = 1e-2;
  bool monitors = true;
  std::vector<std::uint64_t> seeds;
  std::string output_dir = "out";
  std::vector<std::string> formats = {"csv", "json"};
  int jobs = 0;  // 0 = hardware concurrency
  double fit_k_min = 0.0;  // 0 = burn-in default
  double fit_k_max = 0.0;  // 0 = horizon

  static ExperimentPlan parse(const std::string& text, const std::string& origin);
  static ExperimentPlan parse_file(const std::string& path);

  Algorithm algorithm_enum() const;
  ScheduleFamily schedule_family() const;
  RunConfig run_config(std::uint64_t seed) const;
};

/// FNV-1a 64-bit digest of the plan text, hex-encoded.
std::string plan_digest(const std::string& text);

/// Fixed trace schema: k,h,c_norm,resid_exact,resid_surrogate,rho,eta,alpha,
/// step_cond,lemma_verdict. Floats are written round-trippable.
void write_trace_csv(std::ostream& out, const RunRecord& record);
std::vector<TraceRow> read_trace_csv(std::istream& in);

/// Cross-seed aggregation on the shared k-grid.
struct AggregatedSeries {
  std::vector<double> k;
  std::vector<double> mean;      // cross-seed mean
  std::vector<double> envelope;  // cross-seed max
};

AggregatedSeries aggregate_quantity(const std::vector<RunRecord>& records, TraceQuantity quantity);

/// Executes every (problem x algorithm x seed) cell of the plan, writes one
/// trace per cell plus an aggregate JSON report. Cells run concurrently.
struct PlanOutcome {
  std::vector<RunRecord> records;
  std::string report_path;
  std::vector<std::string> trace_paths;
};

PlanOutcome execute_plan(const ExperimentPlan& plan, const std::string& plan_text);

nlohmann::json aggregate_report(const ExperimentPlan& plan, const std::string& plan_text,
                                const std::vector<RunRecord>& records);

/// CLI entry points. Return process exit codes.
int cli_run(const std::string& plan_path, const std::optional<std::string>& out_override,
            std::optional<int> jobs_override);
int cli_verify(const std::string& fault_name);
int cli_report(const std::string& trace_dir, const std::optional<std::string>& out_override,
               const std::string& format);

}  // namespace stocpen
