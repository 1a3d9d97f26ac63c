#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "stocpen/harness.hpp"

using namespace stocpen;
namespace fs = std::filesystem;

namespace {

const char* kMinimalPlan =
    "[problem]\n"
    "family=linear-eq\n"
    "n=4\n"
    "m=2\n"
    "condition_number=2\n"
    "noise_sigma=0.4\n"
    "seed=3\n"
    "objective=quadratic\n"
    "[run]\n"
    "algorithm=alg2\n"
    "schedule=alg2-general\n"
    "K=100\n"
    "epsilon=0.05\n"
    "[seeds]\n"
    "list=1\n"
    "[output]\n"
    "dir=OUTDIR\n"
    "formats=csv,json\n"
    "[report]\n"
    "fit_k_min=10\n";

std::string plan_with_dir(const std::string& text, const fs::path& dir) {
  std::string out = text;
  const auto pos = out.find("OUTDIR");
  out.replace(pos, 6, dir.string());
  return out;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("plan parsing and validation") {
  const ExperimentPlan plan = ExperimentPlan::parse(plan_with_dir(kMinimalPlan, "x"), "test");
  CHECK(plan.problem.family == "linear-eq");
  CHECK(plan.iterations == 100);
  CHECK(plan.seeds.size() == 1);
  CHECK(plan.algorithm_enum() == Algorithm::polyak_momentum);

  // duplicate seeds: named key in the error
  std::string dup = plan_with_dir(kMinimalPlan, "x");
  dup.replace(dup.find("list=1"), 6, "list=1,2,1");
  try {
    ExperimentPlan::parse(dup, "test");
    FAIL("expected duplicate-seed error");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("seeds.list") != std::string::npos);
    CHECK(std::string(e.what()).find("duplicate") != std::string::npos);
  }

  std::string bogus = plan_with_dir(kMinimalPlan, "x");
  bogus.replace(bogus.find("epsilon=0.05"), 12, "epsilonn=0.1");
  CHECK_THROWS_AS(ExperimentPlan::parse(bogus, "test"), std::invalid_argument);

  CHECK_THROWS_AS(ExperimentPlan::parse("[run]\nK=10\n", "test"), std::invalid_argument);
}

TEST_CASE("plan digest is FNV-1a 64") {
  CHECK(plan_digest("") == "cbf29ce484222325");
  CHECK(plan_digest("a") == "af63dc4c8601ec8c");
  CHECK(plan_digest("abc") == "e71fa2190541574b");
}

TEST_CASE("trace CSV round trip") {
  RunRecord rec;
  for (int k = 1; k <= 5; ++k) {
    TraceRow row;
    row.k = k;
    row.h = 0.1 / k;
    row.c_norm = std::sqrt(2 * row.h);
    row.resid_exact = k == 3 ? std::numeric_limits<double>::quiet_NaN() : 1.0 / k;
    row.resid_surrogate = 2.0 / k;
    row.rho = std::sqrt(static_cast<double>(k));
    row.eta = 0.25 / k;
    row.alpha = 1.0 / k;
    row.step_cond = k % 2 == 0;
    row.lemma_verdict = k % 2 ? LemmaVerdict::holds : LemmaVerdict::not_applicable;
    rec.rows.push_back(row);
  }
  std::stringstream s;
  write_trace_csv(s, rec);
  const std::vector<TraceRow> back = read_trace_csv(s);
  REQUIRE(back.size() == rec.rows.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].k == rec.rows[i].k);
    CHECK(back[i].h == rec.rows[i].h);  // %.17g round-trips doubles
    CHECK(back[i].eta == rec.rows[i].eta);
    const bool both_nan = std::isnan(back[i].resid_exact) && std::isnan(rec.rows[i].resid_exact);
    CHECK((both_nan || back[i].resid_exact == rec.rows[i].resid_exact));
    CHECK(back[i].step_cond == rec.rows[i].step_cond);
    CHECK(back[i].lemma_verdict == rec.rows[i].lemma_verdict);
  }
}

TEST_CASE("execute_plan writes traces and an aggregate report") {
  TempDir tmp("stocpen_harness_smoke");
  const std::string text = plan_with_dir(kMinimalPlan, tmp.path);
  const ExperimentPlan plan = ExperimentPlan::parse(text, "test");
  const PlanOutcome outcome = execute_plan(plan, text);

  REQUIRE(outcome.records.size() == 1);
  CHECK(outcome.records[0].rows.size() <= 100);
  REQUIRE(outcome.trace_paths.size() == 1);
  CHECK(fs::exists(outcome.trace_paths[0]));
  REQUIRE_FALSE(outcome.report_path.empty());

  const nlohmann::json rep = nlohmann::json::parse(slurp(outcome.report_path));
  CHECK(rep.contains("plan_digest"));
  CHECK(rep.contains("cells"));
  CHECK(rep.contains("slopes"));
  CHECK(rep.contains("envelopes"));
  CHECK(rep.contains("monitor_tallies"));
  CHECK(rep.contains("terminal_certificates"));
  CHECK(rep["plan_digest"] == plan_digest(text));
  CHECK(rep["cells"].size() == 1);
  CHECK(rep["terminal_certificates"][0].contains("feasibility"));
}

TEST_CASE("re-running a plan reproduces trace files byte for byte") {
  TempDir a("stocpen_det_a"), b("stocpen_det_b");
  std::string base = plan_with_dir(kMinimalPlan, "OUT");
  base.replace(base.find("list=1"), 6, "list=5,9");
  base.replace(base.find("K=100"), 5, "K=400");

  std::string ta = base, tb = base;
  ta.replace(ta.find("OUT"), 3, a.path.string());
  tb.replace(tb.find("OUT"), 3, b.path.string());
  const PlanOutcome oa = execute_plan(ExperimentPlan::parse(ta, "a"), ta);
  const PlanOutcome ob = execute_plan(ExperimentPlan::parse(tb, "b"), tb);
  REQUIRE(oa.trace_paths.size() == 2);
  REQUIRE(ob.trace_paths.size() == 2);
  for (std::size_t i = 0; i < oa.trace_paths.size(); ++i) {
    const std::string bytes_a = slurp(oa.trace_paths[i]);
    CHECK(!bytes_a.empty());
    CHECK(bytes_a == slurp(ob.trace_paths[i]));
  }
}

TEST_CASE("envelope equals a brute-force recomputation") {
  TempDir tmp("stocpen_envelope");
  std::string text = plan_with_dir(kMinimalPlan, tmp.path);
  text.replace(text.find("list=1"), 6, "list=1,2,3");
  const ExperimentPlan plan = ExperimentPlan::parse(text, "test");
  const PlanOutcome outcome = execute_plan(plan, text);
  REQUIRE(outcome.records.size() == 3);

  const AggregatedSeries series =
      aggregate_quantity(outcome.records, TraceQuantity::feasibility_sq);
  REQUIRE(series.k.size() == outcome.records[0].rows.size());
  for (std::size_t i = 0; i < series.k.size(); ++i) {
    double mx = -1.0, sum = 0.0;
    for (const RunRecord& rec : outcome.records) {
      const double v = rec.rows[i].c_norm * rec.rows[i].c_norm;
      mx = std::max(mx, v);
      sum += v;
    }
    CHECK(series.envelope[i] == mx);
    CHECK(series.mean[i] == doctest::Approx(sum / 3.0).epsilon(1e-15));
  }
}

TEST_CASE("cli_report on a directory of traces") {
  TempDir tmp("stocpen_report");
  std::string text = plan_with_dir(kMinimalPlan, tmp.path);
  text.replace(text.find("list=1"), 6, "list=1,2");
  text.replace(text.find("K=100"), 5, "K=600");
  const ExperimentPlan plan = ExperimentPlan::parse(text, "test");
  execute_plan(plan, text);

  CHECK(cli_report(tmp.path.string(), std::nullopt, "csv") == 0);
  CHECK(fs::exists(tmp.path / "slopes.csv"));
  CHECK(fs::exists(tmp.path / "envelope_alg2.csv"));
  CHECK(fs::exists(tmp.path / "plot_alg2_feasibility_sq.csv"));

  TempDir empty("stocpen_report_empty");
  CHECK(cli_report(empty.path.string(), std::nullopt, "csv") != 0);

  // missing cell detection via report.json
  fs::remove(tmp.path / "trace_alg2_seed2.csv");
  CHECK(cli_report(tmp.path.string(), std::nullopt, "csv") != 0);
}

TEST_CASE("aggregate report exposes the selected-iterate quantities") {
  TempDir tmp("stocpen_selected");
  std::string text = plan_with_dir(kMinimalPlan, tmp.path);
  text.replace(text.find("list=1"), 6, "list=1,2");
  const ExperimentPlan plan = ExperimentPlan::parse(text, "test");
  const PlanOutcome outcome = execute_plan(plan, text);
  const nlohmann::json rep = nlohmann::json::parse(slurp(outcome.report_path));
  REQUIRE(rep.contains("selected_iterate"));
  CHECK(rep["selected_iterate"]["seeds"] == 2);
  CHECK(rep["selected_iterate"]["mean_stationarity_sq"].is_number());
  double max_feas = 0.0;
  for (const RunRecord& rec : outcome.records)
    max_feas = std::max(max_feas, rec.terminal.feasibility);
  CHECK(rep["selected_iterate"]["max_feasibility"] == doctest::Approx(max_feas));
}

TEST_CASE("STOCPEN_OUT overrides the plan output directory") {
  TempDir plan_dir("stocpen_env_plan"), out_dir("stocpen_env_out");
  const std::string text = plan_with_dir(kMinimalPlan, plan_dir.path / "ignored");
  const fs::path plan_path = plan_dir.path / "plan.txt";
  std::ofstream(plan_path) << text;
  setenv("STOCPEN_OUT", out_dir.path.c_str(), 1);
  const int rc = cli_run(plan_path.string(), std::nullopt, std::nullopt);
  unsetenv("STOCPEN_OUT");
  CHECK(rc == 0);
  CHECK(fs::exists(out_dir.path / "trace_alg2_seed1.csv"));
  CHECK_FALSE(fs::exists(plan_dir.path / "ignored"));
}

TEST_CASE("verify suite passes on a pristine build") {
  CHECK(cli_verify("") == 0);
}

#ifdef STOCPEN_FAULT_INJECTION
TEST_CASE("planted faults make the verify suite fail") {
  CHECK(cli_verify("truncation-2x") != 0);
  CHECK(cli_verify("lemma-threshold-flip") != 0);
  fs::remove("stocpen-verify-failure.json");
  CHECK(cli_verify("") == 0);  // hooks reset afterwards
}
#endif
