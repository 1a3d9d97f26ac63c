#include "stocpen/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <thread>
#include <tuple>

#include <nlohmann/json.hpp>

#include "stocpen/fault.hpp"

namespace fs = std::filesystem;

namespace stocpen {

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) parts.push_back(trim(cur));
  return parts;
}

double to_double(const std::string& v, const std::string& key) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (...) {
    throw std::invalid_argument("plan: key '" + key + "': bad number '" + v + "'");
  }
}

long long to_int(const std::string& v, const std::string& key) {
  const double x = to_double(v, key);
  const long long r = static_cast<long long>(x);
  if (static_cast<double>(r) != x)
    throw std::invalid_argument("plan: key '" + key + "': expected integer");
  return r;
}

using SectionMap = std::map<std::string, std::vector<std::pair<std::string, std::string>>>;

SectionMap parse_sections(const std::string& text, const std::string& origin) {
  SectionMap sections;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw std::invalid_argument(origin + ":" + std::to_string(lineno) + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      sections.try_emplace(section);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument(origin + ":" + std::to_string(lineno) + ": expected key=value");
    if (section.empty())
      throw std::invalid_argument(origin + ":" + std::to_string(lineno) + ": key outside any [section]");
    sections[section].emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return sections;
}

}  // namespace

ExperimentPlan ExperimentPlan::parse(const std::string& text, const std::string& origin) {
  SectionMap sections = parse_sections(text, origin);
  ExperimentPlan plan;

  for (const auto& name : std::vector<std::string>{"problem", "run", "seeds"})
    if (!sections.count(name))
      throw std::invalid_argument("plan: missing required section [" + name + "]");
  for (const auto& [name, kv] : sections) {
    (void)kv;
    if (name != "problem" && name != "run" && name != "seeds" && name != "output" && name != "report")
      throw std::invalid_argument("plan: unknown section [" + name + "]");
  }

  {
    std::ostringstream desc;
    for (const auto& [k, v] : sections["problem"]) desc << k << "=" << v << "\n";
    plan.problem = TestProblemDescriptor::parse(desc.str());
  }

  for (const auto& [key, value] : sections["run"]) {
    if (key == "algorithm") {
      if (value != "alg1" && value != "alg2")
        throw std::invalid_argument("plan: run.algorithm must be alg1 or alg2");
      plan.algorithm = value;
    } else if (key == "schedule") {
      if (value != "alg1-general" && value != "alg2-subquadratic" && value != "alg2-general")
        throw std::invalid_argument("plan: run.schedule: unknown family '" + value + "'");
      plan.schedule = value;
    } else if (key == "theta_hat") {
      plan.theta_hat = to_double(value, "run.theta_hat");
    } else if (key == "theta") {
      plan.theta = to_double(value, "run.theta");
    } else if (key == "K") {
      plan.iterations = to_int(value, "run.K");
    } else if (key == "trace_stride") {
      plan.trace_stride = value == "auto" ? 0 : to_int(value, "run.trace_stride");
    } else if (key == "epsilon") {
      plan.epsilon = to_double(value, "run.epsilon");
    } else if (key == "monitors") {
      if (value != "on" && value != "off")
        throw std::invalid_argument("plan: run.monitors must be on or off");
      plan.monitors = value == "on";
    } else {
      throw std::invalid_argument("plan: unknown key 'run." + key + "'");
    }
  }
  if (plan.iterations < 2) throw std::invalid_argument("plan: run.K must be >= 2");

  {
    std::optional<long long> count, base;
    for (const auto& [key, value] : sections["seeds"]) {
      if (key == "list") {
        for (const std::string& tok : split(value, ','))
          if (!tok.empty()) plan.seeds.push_back(static_cast<std::uint64_t>(to_int(tok, "seeds.list")));
      } else if (key == "count") {
        count = to_int(value, "seeds.count");
      } else if (key == "base") {
        base = to_int(value, "seeds.base");
      } else {
        throw std::invalid_argument("plan: unknown key 'seeds." + key + "'");
      }
    }
    if (count) {
      const long long b = base.value_or(1);
      for (long long i = 0; i < *count; ++i) plan.seeds.push_back(static_cast<std::uint64_t>(b + i));
    }
    if (plan.seeds.empty()) throw std::invalid_argument("plan: seeds.list: seed list must be nonempty");
    std::set<std::uint64_t> uniq;
    for (std::uint64_t s : plan.seeds)
      if (!uniq.insert(s).second)
        throw std::invalid_argument("plan: seeds.list: duplicate seed " + std::to_string(s));
  }

  if (sections.count("output")) {
    for (const auto& [key, value] : sections["output"]) {
      if (key == "dir") {
        plan.output_dir = value;
      } else if (key == "formats") {
        plan.formats = split(value, ',');
        for (const std::string& f : plan.formats)
          if (f != "csv" && f != "json")
            throw std::invalid_argument("plan: output.formats: unknown format '" + f + "'");
      } else if (key == "jobs") {
        plan.jobs = static_cast<int>(to_int(value, "output.jobs"));
      } else {
        throw std::invalid_argument("plan: unknown key 'output." + key + "'");
      }
    }
  }

  if (sections.count("report")) {
    for (const auto& [key, value] : sections["report"]) {
      if (key == "fit_k_min") {
        plan.fit_k_min = to_double(value, "report.fit_k_min");
      } else if (key == "fit_k_max") {
        plan.fit_k_max = to_double(value, "report.fit_k_max");
      } else {
        throw std::invalid_argument("plan: unknown key 'report." + key + "'");
      }
    }
  }

  // Early surface of schedule parameter errors.
  plan.schedule_family();
  return plan;
}

ExperimentPlan ExperimentPlan::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("plan: cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path);
}

Algorithm ExperimentPlan::algorithm_enum() const {
  return algorithm == "alg1" ? Algorithm::recursive_momentum : Algorithm::polyak_momentum;
}

ScheduleFamily ExperimentPlan::schedule_family() const {
  if (schedule == "alg1-general") return ScheduleFamily::alg1_general(theta_hat);
  if (schedule == "alg2-subquadratic") return ScheduleFamily::alg2_subquadratic(theta);
  return ScheduleFamily::alg2_general();
}

RunConfig ExperimentPlan::run_config(std::uint64_t seed) const {
  RunConfig cfg;
  cfg.algorithm = algorithm_enum();
  cfg.schedule = schedule_family();
  cfg.iterations = iterations;
  cfg.epsilon = epsilon;
  cfg.seed = seed;
  cfg.trace_stride = trace_stride;
  cfg.monitors.exact_residual = monitors;
  cfg.monitors.lemma_monitor = monitors;
  return cfg;
}

std::string plan_digest(const std::string& text) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void write_trace_csv(std::ostream& out, const RunRecord& record) {
  out << "k,h,c_norm,resid_exact,resid_surrogate,rho,eta,alpha,step_cond,lemma_verdict\n";
  for (const TraceRow& r : record.rows) {
    out << r.k << ',' << fmt_double(r.h) << ',' << fmt_double(r.c_norm) << ','
        << fmt_double(r.resid_exact) << ',' << fmt_double(r.resid_surrogate) << ','
        << fmt_double(r.rho) << ',' << fmt_double(r.eta) << ',' << fmt_double(r.alpha) << ','
        << (r.step_cond ? 1 : 0) << ',' << to_string(r.lemma_verdict) << '\n';
  }
}

std::vector<TraceRow> read_trace_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("trace: empty file");
  if (trim(line) != "k,h,c_norm,resid_exact,resid_surrogate,rho,eta,alpha,step_cond,lemma_verdict")
    throw std::invalid_argument("trace: unexpected header row");
  std::vector<TraceRow> rows;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const std::vector<std::string> f = split(line, ',');
    if (f.size() != 10) throw std::invalid_argument("trace: malformed row '" + line + "'");
    TraceRow r;
    r.k = to_int(f[0], "trace.k");
    r.h = to_double(f[1], "trace.h");
    r.c_norm = to_double(f[2], "trace.c_norm");
    r.resid_exact = to_double(f[3], "trace.resid_exact");
    r.resid_surrogate = to_double(f[4], "trace.resid_surrogate");
    r.rho = to_double(f[5], "trace.rho");
    r.eta = to_double(f[6], "trace.eta");
    r.alpha = to_double(f[7], "trace.alpha");
    r.step_cond = f[8] == "1";
    if (f[9] == "holds")
      r.lemma_verdict = LemmaVerdict::holds;
    else if (f[9] == "violated")
      r.lemma_verdict = LemmaVerdict::violated;
    else
      r.lemma_verdict = LemmaVerdict::not_applicable;
    rows.push_back(r);
  }
  return rows;
}

namespace {

double row_quantity(const TraceRow& r, TraceQuantity q) {
  switch (q) {
    case TraceQuantity::feasibility_sq:
      return r.c_norm * r.c_norm;
    case TraceQuantity::exact_residual_sq:
      return r.resid_exact * r.resid_exact;
    case TraceQuantity::surrogate:
      return r.resid_surrogate;
  }
  return std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

AggregatedSeries aggregate_quantity(const std::vector<RunRecord>& records, TraceQuantity quantity) {
  if (records.empty()) throw std::invalid_argument("aggregate_quantity: no records");
  const std::size_t rows = records.front().rows.size();
  for (const RunRecord& r : records)
    if (r.rows.size() != rows)
      throw std::invalid_argument("aggregate_quantity: trace grids differ across records");

  AggregatedSeries out;
  for (std::size_t i = 0; i < rows; ++i) {
    const long long k = records.front().rows[i].k;
    double sum = 0.0, mx = -std::numeric_limits<double>::infinity();
    bool usable = true;
    for (const RunRecord& r : records) {
      if (r.rows[i].k != k)
        throw std::invalid_argument("aggregate_quantity: trace grids differ across records");
      const double v = row_quantity(r.rows[i], quantity);
      if (std::isnan(v)) {
        usable = false;
        break;
      }
      sum += v;
      mx = std::max(mx, v);
    }
    if (!usable) continue;
    out.k.push_back(static_cast<double>(k));
    out.mean.push_back(sum / static_cast<double>(records.size()));
    out.envelope.push_back(mx);
  }
  return out;
}

namespace {

nlohmann::json fit_to_json(const RateFit& f) {
  return {{"slope", f.slope},         {"intercept", f.intercept},
          {"r_squared", f.r_squared}, {"k_min", f.k_min},
          {"k_max", f.k_max},         {"points", f.points},
          {"truncated_at_nonpositive", f.truncated_at_nonpositive}};
}

nlohmann::json terminal_to_json(const RunRecord& rec) {
  std::vector<double> lambda(rec.terminal.multiplier.data(),
                             rec.terminal.multiplier.data() + rec.terminal.multiplier.size());
  return {{"selected_index", rec.terminal.selected_index},
          {"feasibility", rec.terminal.feasibility},
          {"stationarity_exact", rec.terminal.stationarity_exact},
          {"rho_prev", rec.terminal.rho_prev},
          {"multiplier", lambda}};
}

}  // namespace

nlohmann::json aggregate_report(const ExperimentPlan& plan, const std::string& plan_text,
                                const std::vector<RunRecord>& records) {
  nlohmann::json j;
  j["plan_digest"] = plan_digest(plan_text);

  const ProblemInstance problem = make_test_problem(plan.problem);
  const SmoothnessConstants& c = problem.constants();
  j["problem"] = {{"family", plan.problem.family},
                  {"n", problem.dimension()},
                  {"m", problem.constraint_dim()},
                  {"objective", plan.problem.objective},
                  {"noise_sigma", c.noise_sigma},
                  {"gamma", c.error_bound_gamma},
                  {"theta", c.error_bound_theta},
                  {"L_f", c.lipschitz_f},
                  {"L_c", c.lipschitz_c},
                  {"C_c", c.constraint_bound},
                  {"L_grad_c", c.smoothness_c},
                  {"avg_smoothness_f", c.avg_smoothness_f},
                  {"smoothness_f", c.smoothness_f},
                  {"penalty_smoothness", c.penalty_smoothness()},
                  {"region_radius", problem.region_radius()}};

  const TheoryConstants tc = theory_constants(plan.schedule_family(), c);
  double k_min = plan.fit_k_min;
  if (k_min <= 0.0) {
    // Burn-in rule: fits start at 2 K~ when that is desk reachable within
    // the horizon, else at 100.
    k_min = tc.desk_reachable && 2.0 * tc.burn_in <= static_cast<double>(plan.iterations) / 10.0
                ? std::max(100.0, 2.0 * tc.burn_in)
                : 100.0;
  }
  // A window that starts before 2 K~ can only show pre-asymptotic evidence.
  const bool pre_asymptotic = !(tc.desk_reachable && k_min >= 2.0 * tc.burn_in);
  const double k_max = plan.fit_k_max > 0.0 ? plan.fit_k_max : static_cast<double>(plan.iterations);
  j["theory"] = {{"burn_in", tc.desk_reachable ? nlohmann::json(tc.burn_in)
                                               : nlohmann::json("unreachable")},
                 {"desk_reachable", tc.desk_reachable},
                 {"envelope_constant", std::isfinite(tc.envelope_constant)
                                           ? nlohmann::json(tc.envelope_constant)
                                           : nlohmann::json("unreachable")},
                 {"step_condition_threshold", tc.step_condition_threshold},
                 {"fit_window", {{"k_min", k_min}, {"k_max", k_max}}},
                 {"pre_asymptotic", pre_asymptotic}};

  nlohmann::json cells = nlohmann::json::array();
  nlohmann::json certificates = nlohmann::json::array();
  MonitorTallies total;
  total.max_estimator_norm_excess = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < records.size(); ++i) {
    const RunRecord& rec = records[i];
    nlohmann::json cell = {{"algorithm", to_string(rec.algorithm)},
                           {"seed", rec.seed},
                           {"iterations", rec.iterations},
                           {"trace", std::string("trace_") + to_string(rec.algorithm) + "_seed" +
                                         std::to_string(rec.seed) + ".csv"},
                           {"counters",
                            {{"samples", rec.sample_count},
                             {"grad_evals", rec.grad_eval_count},
                             {"constraint_evals", rec.constraint_eval_count}}},
                           {"tallies",
                            {{"lemma_holds", rec.tallies.lemma_holds},
                             {"lemma_violated", rec.tallies.lemma_violated},
                             {"lemma_not_applicable", rec.tallies.lemma_not_applicable},
                             {"surrogate_violations", rec.tallies.surrogate_violations},
                             {"max_estimator_norm_excess", rec.tallies.max_estimator_norm_excess}}},
                           {"terminal", terminal_to_json(rec)},
                           {"wall_seconds", rec.wall_seconds}};
    cells.push_back(std::move(cell));
    certificates.push_back({{"seed", rec.seed},
                            {"selected_index", rec.terminal.selected_index},
                            {"feasibility", rec.terminal.feasibility},
                            {"stationarity_exact", rec.terminal.stationarity_exact},
                            {"multiplier_norm", rec.terminal.multiplier.norm()}});
    total.lemma_holds += rec.tallies.lemma_holds;
    total.lemma_violated += rec.tallies.lemma_violated;
    total.lemma_not_applicable += rec.tallies.lemma_not_applicable;
    total.surrogate_violations += rec.tallies.surrogate_violations;
    total.max_estimator_norm_excess =
        std::max(total.max_estimator_norm_excess, rec.tallies.max_estimator_norm_excess);
  }
  j["cells"] = std::move(cells);
  j["terminal_certificates"] = std::move(certificates);
  j["monitor_tallies"] = {{"lemma_holds", total.lemma_holds},
                          {"lemma_violated", total.lemma_violated},
                          {"lemma_not_applicable", total.lemma_not_applicable},
                          {"surrogate_violations", total.surrogate_violations},
                          {"max_estimator_norm_excess", total.max_estimator_norm_excess}};

  // Headline quantities at the randomly selected iterate: the cross-seed
  // mean of the squared residual at the per-seed selected index, and the
  // worst per-seed feasibility there (the sure-feasibility side is a max,
  // not a mean).
  {
    double sum_sq = 0.0;
    double max_feas = 0.0;
    long long with_resid = 0;
    for (const RunRecord& rec : records) {
      if (!std::isnan(rec.terminal.stationarity_exact)) {
        sum_sq += rec.terminal.stationarity_exact * rec.terminal.stationarity_exact;
        ++with_resid;
      }
      max_feas = std::max(max_feas, rec.terminal.feasibility);
    }
    j["selected_iterate"] = {
        {"mean_stationarity_sq",
         with_resid > 0 ? nlohmann::json(sum_sq / static_cast<double>(with_resid))
                        : nlohmann::json(nullptr)},
        {"max_feasibility", max_feas},
        {"seeds", records.size()}};
  }

  nlohmann::json slopes;
  nlohmann::json envelopes;
  for (auto [q, name] : std::initializer_list<std::pair<TraceQuantity, const char*>>{
           {TraceQuantity::feasibility_sq, "feasibility_sq"},
           {TraceQuantity::exact_residual_sq, "exact_residual_sq"},
           {TraceQuantity::surrogate, "surrogate"}}) {
    const AggregatedSeries series = aggregate_quantity(records, q);
    if (series.k.empty()) continue;
    nlohmann::json entry;
    try {
      entry["mean"] = fit_to_json(fit_loglog(series.k, series.mean, k_min, k_max));
      entry["envelope"] = fit_to_json(fit_loglog(series.k, series.envelope, k_min, k_max));
    } catch (const std::exception& e) {
      entry["error"] = e.what();
    }
    slopes[name] = std::move(entry);
    if (q == TraceQuantity::feasibility_sq)
      envelopes[name] = {{"k", series.k}, {"value", series.envelope}};
  }
  j["slopes"] = std::move(slopes);
  j["envelopes"] = std::move(envelopes);
  return j;
}

PlanOutcome execute_plan(const ExperimentPlan& plan, const std::string& plan_text) {
  const ProblemInstance problem = make_test_problem(plan.problem);

  PlanOutcome outcome;
  outcome.records.resize(plan.seeds.size());
  std::vector<std::string> errors(plan.seeds.size());

  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const unsigned n_threads = std::min<std::size_t>(
      plan.jobs > 0 ? static_cast<unsigned>(plan.jobs) : hw, plan.seeds.size());

  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= plan.seeds.size()) return;
      try {
        outcome.records[i] = run(problem, plan.run_config(plan.seeds[i]));
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  for (std::thread& t : pool) t.join();

  for (std::size_t i = 0; i < errors.size(); ++i)
    if (!errors[i].empty())
      throw std::runtime_error("cell seed=" + std::to_string(plan.seeds[i]) + ": " + errors[i]);

  fs::create_directories(plan.output_dir);
  const bool want_csv = std::count(plan.formats.begin(), plan.formats.end(), "csv") > 0;
  const bool want_json = std::count(plan.formats.begin(), plan.formats.end(), "json") > 0;

  if (want_csv) {
    for (const RunRecord& rec : outcome.records) {
      const fs::path p = fs::path(plan.output_dir) /
                         (std::string("trace_") + to_string(rec.algorithm) + "_seed" +
                          std::to_string(rec.seed) + ".csv");
      std::ofstream out(p);
      if (!out) throw std::runtime_error("cannot write trace file " + p.string());
      write_trace_csv(out, rec);
      outcome.trace_paths.push_back(p.string());
    }
  }
  if (want_json) {
    const fs::path p = fs::path(plan.output_dir) / "report.json";
    std::ofstream out(p);
    if (!out) throw std::runtime_error("cannot write report file " + p.string());
    out << aggregate_report(plan, plan_text, outcome.records).dump(2) << "\n";
    outcome.report_path = p.string();
  }
  return outcome;
}

// ---------------------------------------------------------------------------
// CLI: run
// ---------------------------------------------------------------------------

int cli_run(const std::string& plan_path, const std::optional<std::string>& out_override,
            std::optional<int> jobs_override) {
  try {
    std::ifstream in(plan_path);
    if (!in) {
      std::cerr << "stocpen run: cannot open plan '" << plan_path << "'\n";
      return 1;
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();
    ExperimentPlan plan = ExperimentPlan::parse(text, plan_path);
    if (const char* env = std::getenv("STOCPEN_OUT")) plan.output_dir = env;
    if (out_override) plan.output_dir = *out_override;
    if (jobs_override) plan.jobs = *jobs_override;

    const ProblemInstance problem = make_test_problem(plan.problem);
    std::cout << echo_certified_constants(problem);

    const PlanOutcome outcome = execute_plan(plan, text);
    for (const RunRecord& rec : outcome.records) {
      std::cout << to_string(rec.algorithm) << " seed=" << rec.seed
                << ": iota=" << rec.terminal.selected_index
                << " feasibility=" << rec.terminal.feasibility
                << " stationarity=" << rec.terminal.stationarity_exact
                << " (target epsilon=" << plan.epsilon << ")\n";
    }
    if (!outcome.report_path.empty()) std::cout << "aggregate report: " << outcome.report_path << "\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "stocpen run: " << e.what() << "\n";
    return 1;
  }
}

// ---------------------------------------------------------------------------
// CLI: verify
// ---------------------------------------------------------------------------

namespace {

struct VerifyResult {
  std::string name;
  bool passed;
  std::string detail;
};

TestProblemDescriptor verify_linear_descriptor() {
  TestProblemDescriptor d;
  d.family = "linear-eq";
  d.n = 8;
  d.m = 3;
  d.condition_number = 4.0;
  d.noise_sigma = 0.5;
  d.seed = 11;
  return d;
}

VerifyResult verify_projection_characterization() {
  // Variational inequality <v - P(v), y - P(v)> <= 0 for members y.
  const Eigen::Index n = 6;
  std::vector<FeasibleSet> sets;
  sets.push_back(FeasibleSet::whole_space(n));
  {
    Eigen::VectorXd lo = Eigen::VectorXd::Constant(n, -0.5), hi = Eigen::VectorXd::Constant(n, 1.5);
    lo[1] = -std::numeric_limits<double>::infinity();
    hi[2] = std::numeric_limits<double>::infinity();
    sets.push_back(FeasibleSet::box(lo, hi));
  }
  sets.push_back(FeasibleSet::ball(Eigen::VectorXd::Ones(n), 2.0));

  SampleContext ctx(2024, StreamRole::member_sampling);
  double worst = -std::numeric_limits<double>::infinity();
  for (const FeasibleSet& set : sets) {
    for (int t = 0; t < 1000; ++t) {
      const Eigen::VectorXd v = ctx.normal_vector(n) * 3.0;
      const Eigen::VectorXd p = set.project(v);
      if (!set.contains(p, 1e-12)) return {"projection-characterization", false, "projection left the set"};
      for (int yi = 0; yi < 100; ++yi) {
        const Eigen::VectorXd y = set.sample_member(ctx, 10.0);
        worst = std::max(worst, (v - p).dot(y - p));
      }
    }
  }
  return {"projection-characterization", worst <= 1e-10,
          "max <v-P(v), y-P(v)> = " + fmt_double(worst)};
}

VerifyResult verify_error_bound_certification() {
  const ProblemInstance problem = make_test_problem(verify_linear_descriptor());
  const double gamma = problem.constants().error_bound_gamma;
  SampleContext ctx(7, StreamRole::member_sampling);
  double worst = std::numeric_limits<double>::infinity();
  for (int t = 0; t < 1000; ++t) {
    const Eigen::VectorXd x = problem.feasible_set().sample_member(ctx, problem.region_radius());
    const ConstraintResidual cr = constraint_residual(problem, x);
    if (cr.stacked_norm < 1e-12) continue;
    worst = std::min(worst, problem.feasible_set().normal_cone_distance(x, cr.direction) /
                                cr.stacked_norm);
  }
  const bool ok = worst >= gamma * (1.0 - 1e-12);
  return {"error-bound-certification", ok,
          "min ratio " + fmt_double(worst) + " vs gamma " + fmt_double(gamma)};
}

// Gradients of norm 5 against a declared bound of 1: the truncation
// boundary is active at every step, so a wrong radius is observable.
ProblemInstance verify_binding_instance() {
  struct SteepObjective final : ObjectiveModel {
    Eigen::Index dim() const override { return 2; }
    Eigen::VectorXd mean_gradient(const Eigen::VectorXd&) const override {
      Eigen::VectorXd g(2);
      g << 3.0, 4.0;
      return g;
    }
  };
  struct IdentityConstraint final : ConstraintMap {
    Eigen::Index input_dim() const override { return 2; }
    Eigen::Index output_dim() const override { return 2; }
    ConstraintEvaluation eval(const Eigen::VectorXd& x) const override {
      ConstraintEvaluation e;
      e.value = x;
      e.jac_t_apply = [](const Eigen::VectorXd& w) { return w; };
      return e;
    }
  };
  SmoothnessConstants c;
  c.lipschitz_f = 1.0;  // deliberately below the true gradient norm
  c.lipschitz_c = 1.0;
  c.constraint_bound = 20.0;
  c.smoothness_c = 0.0;
  c.avg_smoothness_f = 0.0;
  c.smoothness_f = 0.0;
  c.noise_sigma = 0.0;
  c.error_bound_gamma = 1.0;
  c.error_bound_theta = 1.0;
  return ProblemInstance("truncation-boundary", std::make_shared<SteepObjective>(),
                         std::make_shared<IdentityConstraint>(), nullptr,
                         FeasibleSet::whole_space(2), c, 10.0);
}

VerifyResult verify_estimator_accounting() {
  const ProblemInstance problem = make_test_problem(verify_linear_descriptor());
  const ProblemInstance binding = verify_binding_instance();
  const long long horizon = 64;
  bool ok = true;
  std::string detail;
  for (Algorithm alg : {Algorithm::recursive_momentum, Algorithm::polyak_momentum}) {
    RunConfig cfg;
    cfg.algorithm = alg;
    cfg.schedule = alg == Algorithm::recursive_momentum ? ScheduleFamily::alg1_general(1.0)
                                                        : ScheduleFamily::alg2_general();
    cfg.iterations = horizon;
    cfg.seed = 3;
    const RunRecord rec = run(problem, cfg);
    const long long state_index = horizon + 1;
    const long long want_grads =
        alg == Algorithm::recursive_momentum ? 2 * state_index - 1 : state_index;
    if (rec.sample_count != state_index || rec.grad_eval_count != want_grads) {
      ok = false;
      detail += std::string(to_string(alg)) + " counters " + std::to_string(rec.sample_count) + "/" +
                std::to_string(rec.grad_eval_count) + " want " + std::to_string(state_index) + "/" +
                std::to_string(want_grads) + "; ";
    }
    if (rec.tallies.max_estimator_norm_excess > 0.0) {
      ok = false;
      detail += std::string(to_string(alg)) +
                " boundedness excess=" + fmt_double(rec.tallies.max_estimator_norm_excess) + "; ";
    }
    const RunRecord bound_rec = run(binding, cfg);
    if (bound_rec.tallies.max_estimator_norm_excess > 0.0) {
      ok = false;
      detail += std::string(to_string(alg)) + " boundedness at the truncation boundary excess=" +
                fmt_double(bound_rec.tallies.max_estimator_norm_excess) + "; ";
    }
  }
  if (detail.empty()) detail = "samples/grad-evals and ||g|| <= L_f as required";
  return {"estimator-accounting", ok, detail};
}

VerifyResult verify_lemma_monitors() {
  bool ok = true;
  std::string detail;
  long long applicable_total = 0;

  auto check = [&](const char* label, const ProblemInstance& problem, Algorithm alg,
                   const ScheduleFamily& fam, long long horizon) {
    RunConfig cfg;
    cfg.algorithm = alg;
    cfg.schedule = fam;
    cfg.iterations = horizon;
    cfg.seed = 5;
    cfg.monitors.exact_residual = false;
    const RunRecord rec = run(problem, cfg);
    applicable_total += rec.tallies.lemma_holds + rec.tallies.lemma_violated;
    if (rec.tallies.lemma_violated != 0) {
      ok = false;
      detail += std::string(label) + ": " + std::to_string(rec.tallies.lemma_violated) +
                " violations; ";
    }
  };

  check("linear", make_test_problem(verify_linear_descriptor()), Algorithm::recursive_momentum,
        ScheduleFamily::alg1_general(1.0), 4000);
  {
    TestProblemDescriptor d;
    d.family = "power";
    d.n = 3;
    d.p = 2;
    d.noise_sigma = 0.3;
    d.seed = 2;
    check("power", make_test_problem(d), Algorithm::polyak_momentum,
          ScheduleFamily::alg2_subquadratic(1.5), 2000);
  }
  {
    TestProblemDescriptor d;
    d.family = "sphere";
    d.n = 4;
    d.noise_sigma = 0.2;
    d.seed = 3;
    check("sphere", make_test_problem(d), Algorithm::polyak_momentum, ScheduleFamily::alg2_general(),
          9000);
  }
  if (applicable_total == 0) {
    ok = false;
    detail += "no applicable iterations observed; ";
  }
  if (detail.empty())
    detail = "0 violations over " + std::to_string(applicable_total) + " applicable iterations";
  return {"lemma-monitors", ok, detail};
}

VerifyResult verify_variance_recursion() {
  const ProblemInstance problem = make_test_problem(verify_linear_descriptor());
  SampleContext ctx(99, StreamRole::replicate_experiments);
  SampleContext member_ctx(13, StreamRole::member_sampling);
  bool ok = true;
  std::string detail;
  for (EstimatorKind kind : {EstimatorKind::recursive, EstimatorKind::polyak}) {
    for (int c = 0; c < 2; ++c) {
      const Eigen::VectorXd x_from = problem.feasible_set().sample_member(member_ctx, 2.0);
      Eigen::VectorXd x_to = x_from + 0.05 * member_ctx.normal_vector(problem.dimension());
      x_to = problem.feasible_set().project(x_to);
      const double alpha = c == 0 ? 1.0 : 0.3;
      const VarianceCheckResult res =
          variance_replicate_check(problem, kind, x_from, x_to, 0.4, alpha, 2000, ctx);
      if (!res.holds) {
        ok = false;
        detail += std::string(kind == EstimatorKind::recursive ? "recursive" : "polyak") +
                  " alpha=" + fmt_double(alpha) + " lhs=" + fmt_double(res.lhs_mean) +
                  " rhs=" + fmt_double(res.rhs_bound) + "; ";
      }
    }
  }
  if (detail.empty()) detail = "both estimators within 3 standard errors";
  return {"variance-recursion", ok, detail};
}

VerifyResult verify_fit_rate() {
  std::vector<double> ks, q1, q2;
  for (int k = 10; k <= 2000; ++k) {
    ks.push_back(k);
    q1.push_back(1.0 / k);
    q2.push_back(5.0 * std::pow(static_cast<double>(k), -2.0 / 3.0));
  }
  const RateFit f1 = fit_loglog(ks, q1, 10, 2000);
  const RateFit f2 = fit_loglog(ks, q2, 10, 2000);
  const bool ok = std::abs(f1.slope + 1.0) < 1e-9 && std::abs(f2.slope + 2.0 / 3.0) < 1e-9 &&
                  std::abs(f2.intercept - std::log(5.0)) < 1e-9;
  return {"fit-rate-selftest", ok,
          "slopes " + fmt_double(f1.slope) + ", " + fmt_double(f2.slope)};
}

VerifyResult verify_falsifier() {
  bool ok = true;
  std::string detail;
  for (const char* family : {"linear-eq", "sphere", "power"}) {
    TestProblemDescriptor d;
    d.family = family;
    d.n = family == std::string("linear-eq") ? 6 : 4;
    d.m = family == std::string("linear-eq") ? 2 : 1;
    d.condition_number = 3.0;
    d.seed = 21;
    const ProblemInstance problem = make_test_problem(d);
    SampleContext ctx(77, StreamRole::member_sampling);
    const FalsifierReport rep = error_bound_falsifier(problem, 100000, ctx);
    if (rep.flagged) {
      ok = false;
      detail += std::string(family) + " flagged min_ratio=" + fmt_double(rep.min_ratio) + "; ";
    }
  }
  // Planted failure: a gamma far above the certified value must be flagged.
  {
    TestProblemDescriptor d = verify_linear_descriptor();
    const ProblemInstance base = make_test_problem(d);
    SmoothnessConstants c = base.constants();
    c.error_bound_gamma *= 10.0;
    // Rebuild an instance claiming the inflated gamma.
    struct Wrap final : ConstraintMap {
      const ProblemInstance* p;
      explicit Wrap(const ProblemInstance* p) : p(p) {}
      Eigen::Index input_dim() const override { return p->dimension(); }
      Eigen::Index output_dim() const override { return p->constraint_dim(); }
      ConstraintEvaluation eval(const Eigen::VectorXd& x) const override {
        return p->eval_constraint(x);
      }
    };
    const ProblemInstance claimed("mis-certified", nullptr, std::make_shared<Wrap>(&base), nullptr,
                                  base.feasible_set(), c, base.region_radius());
    SampleContext ctx(78, StreamRole::member_sampling);
    const FalsifierReport rep = error_bound_falsifier(claimed, 20000, ctx);
    if (!rep.flagged) {
      ok = false;
      detail += "planted mis-certification not flagged; ";
    }
  }
  if (detail.empty()) detail = "built-ins clean, planted mis-certification flagged";
  return {"error-bound-falsifier", ok, detail};
}

}  // namespace

int cli_verify(const std::string& fault_name) {
  fault::reset();
  if (!fault_name.empty()) {
#ifdef STOCPEN_FAULT_INJECTION
    if (fault_name == "truncation-2x") {
      fault::truncation_radius_scale = 2.0;
    } else if (fault_name == "lemma-threshold-flip") {
      fault::flip_step_condition = true;
    } else {
      std::cerr << "stocpen verify: unknown fault '" << fault_name
                << "' (known: truncation-2x, lemma-threshold-flip)\n";
      return 2;
    }
#else
    std::cerr << "stocpen verify: fault injection not compiled into this build\n";
    return 2;
#endif
  }

  std::vector<VerifyResult> results;
  results.push_back(verify_projection_characterization());
  results.push_back(verify_error_bound_certification());
  results.push_back(verify_estimator_accounting());
  results.push_back(verify_lemma_monitors());
  results.push_back(verify_variance_recursion());
  results.push_back(verify_fit_rate());
  results.push_back(verify_falsifier());
  fault::reset();

  bool all = true;
  nlohmann::json failures = nlohmann::json::array();
  for (const VerifyResult& r : results) {
    std::cout << (r.passed ? "[pass] " : "[FAIL] ") << r.name << ": " << r.detail << "\n";
    if (!r.passed) {
      all = false;
      failures.push_back({{"property", r.name}, {"detail", r.detail}, {"fault", fault_name}});
    }
  }
  if (!all) {
    std::ofstream out("stocpen-verify-failure.json");
    out << failures.dump(2) << "\n";
    std::cerr << "stocpen verify: failing cases serialized to stocpen-verify-failure.json\n";
  }
  return all ? 0 : 1;
}

// ---------------------------------------------------------------------------
// CLI: report
// ---------------------------------------------------------------------------

namespace {

struct LoadedTrace {
  std::string algorithm;
  std::uint64_t seed;
  std::string path;
  std::vector<TraceRow> rows;
};

}  // namespace

int cli_report(const std::string& trace_dir, const std::optional<std::string>& out_override,
               const std::string& format) {
  try {
    if (!fs::is_directory(trace_dir)) {
      std::cerr << "stocpen report: '" << trace_dir << "' is not a directory\n";
      return 1;
    }
    std::vector<LoadedTrace> traces;
    for (const auto& entry : fs::directory_iterator(trace_dir)) {
      const std::string fname = entry.path().filename().string();
      if (fname.rfind("trace_", 0) != 0 || entry.path().extension() != ".csv") continue;
      // trace_<alg>_seed<seed>.csv
      const auto us = fname.find('_', 6);
      const auto seed_pos = fname.find("seed");
      if (us == std::string::npos || seed_pos == std::string::npos) continue;
      LoadedTrace t;
      t.algorithm = fname.substr(6, us - 6);
      t.seed = std::stoull(fname.substr(seed_pos + 4));
      t.path = entry.path().string();
      std::ifstream in(entry.path());
      t.rows = read_trace_csv(in);
      traces.push_back(std::move(t));
    }
    if (traces.empty()) {
      std::cerr << "stocpen report: no trace files found in '" << trace_dir << "'\n";
      return 1;
    }

    // When an aggregate report exists, require every cell it names.
    const fs::path report_path = fs::path(trace_dir) / "report.json";
    if (fs::exists(report_path)) {
      std::ifstream in(report_path);
      nlohmann::json rep = nlohmann::json::parse(in);
      std::vector<std::string> missing;
      for (const auto& cell : rep["cells"]) {
        const std::string want = cell["trace"].get<std::string>();
        if (!fs::exists(fs::path(trace_dir) / want)) missing.push_back(want);
      }
      if (!missing.empty()) {
        std::cerr << "stocpen report: missing traces:";
        for (const std::string& m : missing) std::cerr << " " << m;
        std::cerr << "\n";
        return 1;
      }
    }

    std::sort(traces.begin(), traces.end(), [](const LoadedTrace& a, const LoadedTrace& b) {
      return std::tie(a.algorithm, a.seed) < std::tie(b.algorithm, b.seed);
    });

    const std::string out_dir = out_override.value_or(trace_dir);
    fs::create_directories(out_dir);

    // Group by algorithm; emit per-quantity slope fits, per-seed envelopes
    // and plot-ready (k, value, seed) series.
    std::map<std::string, std::vector<const LoadedTrace*>> groups;
    for (const LoadedTrace& t : traces) groups[t.algorithm].push_back(&t);

    std::ofstream slopes(fs::path(out_dir) / "slopes.csv");
    slopes << "algorithm,quantity,series,slope,intercept,r_squared,points,k_min,k_max\n";

    for (const auto& [alg, members] : groups) {
      std::vector<RunRecord> records;
      for (const LoadedTrace* t : members) {
        RunRecord r;
        r.seed = t->seed;
        r.rows = t->rows;
        records.push_back(std::move(r));
      }
      double k_max = 0.0;
      for (const TraceRow& row : records.front().rows)
        k_max = std::max(k_max, static_cast<double>(row.k));
      const double k_min = std::max(100.0, k_max / 1000.0);

      for (auto [q, name] : std::initializer_list<std::pair<TraceQuantity, const char*>>{
               {TraceQuantity::feasibility_sq, "feasibility_sq"},
               {TraceQuantity::exact_residual_sq, "exact_residual_sq"},
               {TraceQuantity::surrogate, "surrogate"}}) {
        const AggregatedSeries series = aggregate_quantity(records, q);
        if (series.k.size() < 2) continue;
        for (auto [vec, label] : std::initializer_list<std::pair<const std::vector<double>*, const char*>>{
                 {&series.mean, "mean"}, {&series.envelope, "envelope"}}) {
          try {
            const RateFit fit = fit_loglog(series.k, *vec, k_min, k_max);
            slopes << alg << ',' << name << ',' << label << ',' << fmt_double(fit.slope) << ','
                   << fmt_double(fit.intercept) << ',' << fmt_double(fit.r_squared) << ','
                   << fit.points << ',' << fmt_double(fit.k_min) << ',' << fmt_double(fit.k_max)
                   << '\n';
          } catch (const std::exception&) {
            // window too small for this quantity; skip the row
          }
        }
        if (format == "csv" || format == "both") {
          std::ofstream plot(fs::path(out_dir) / ("plot_" + std::string(alg) + "_" + name + ".csv"));
          plot << "k," << name << ",seed\n";
          for (const LoadedTrace* t : members) {
            for (const TraceRow& row : t->rows) {
              const double v = q == TraceQuantity::feasibility_sq ? row.c_norm * row.c_norm
                               : q == TraceQuantity::exact_residual_sq
                                   ? row.resid_exact * row.resid_exact
                                   : row.resid_surrogate;
              if (std::isnan(v)) continue;
              plot << row.k << ',' << fmt_double(v) << ',' << t->seed << '\n';
            }
          }
        }
        if (q == TraceQuantity::feasibility_sq) {
          std::ofstream env(fs::path(out_dir) / ("envelope_" + std::string(alg) + ".csv"));
          env << "k,feasibility_sq_envelope\n";
          for (std::size_t i = 0; i < series.k.size(); ++i)
            env << static_cast<long long>(series.k[i]) << ',' << fmt_double(series.envelope[i])
                << '\n';
        }
      }
    }
    std::cout << "stocpen report: wrote slopes.csv and plot-ready series to " << out_dir << "\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "stocpen report: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace stocpen
