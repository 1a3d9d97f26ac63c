#include <optional>
#include <string>

#include <CLI11.hpp>

#include "stocpen/harness.hpp"

int main(int argc, char** argv) {
  CLI::App app{"stocpen: variance-reduced stochastic penalty solvers and benchmark harness"};
  app.require_subcommand(1);

  std::string plan_path;
  std::optional<std::string> out_dir;
  std::optional<int> jobs;
  CLI::App* run = app.add_subcommand("run", "execute an experiment plan");
  run->add_option("plan", plan_path, "plan file (key=value sections)")->required();
  run->add_option("--out", out_dir, "output directory override");
  run->add_option("--jobs", jobs, "number of concurrent cells (default: hardware)");

  std::string fault;
  CLI::App* verify = app.add_subcommand("verify", "run the property suites");
  verify->add_option("--fault", fault, "inject a planted fault (truncation-2x | lemma-threshold-flip)");

  std::string trace_dir;
  std::optional<std::string> report_out;
  std::string format = "csv";
  CLI::App* report = app.add_subcommand("report", "aggregate rate fits from trace files");
  report->add_option("dir", trace_dir, "directory holding trace_*.csv files")->required();
  report->add_option("--out", report_out, "output directory (default: the trace directory)");
  report->add_option("--format", format, "plot-ready output format: csv | json")
      ->check(CLI::IsMember({"csv", "json"}));

  CLI11_PARSE(app, argc, argv);

  if (run->parsed()) return stocpen::cli_run(plan_path, out_dir, jobs);
  if (verify->parsed()) return stocpen::cli_verify(fault);
  if (report->parsed()) return stocpen::cli_report(trace_dir, report_out, format);
  return 2;
}
