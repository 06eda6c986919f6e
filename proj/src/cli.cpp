#include "svyexp/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iterator>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>

#include <CLI11.hpp>
#include <json.hpp>

#include "svyexp/core_model.hpp"
#include "svyexp/design.hpp"
#include "svyexp/diagnostics.hpp"
#include "svyexp/error.hpp"
#include "svyexp/estimators.hpp"
#include "svyexp/io.hpp"
#include "svyexp/rng.hpp"
#include "svyexp/simulation.hpp"
#include "svyexp/uncertainty.hpp"

namespace svyexp {

namespace {

using json = nlohmann::ordered_json;

// Bad flag values and flag combinations; reported with exit code 1.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::vector<std::string> split_list(const std::string& text, char sep = ',') {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(text);
  while (std::getline(in, cur, sep)) {
    std::size_t b = cur.find_first_not_of(" \t");
    std::size_t e = cur.find_last_not_of(" \t");
    if (b == std::string::npos) continue;
    out.push_back(cur.substr(b, e - b + 1));
  }
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open '" + path + "'");
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

unsigned default_threads() {
  if (const char* env = std::getenv("SVYEXP_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v >= 1 && v <= 1024) return static_cast<unsigned>(v);
  }
  return 1;
}

std::string opt_number(const std::optional<double>& v) {
  return v ? format_double(*v) : std::string();
}

json opt_json(const std::optional<double>& v) {
  return v ? json(*v) : json(nullptr);
}

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Writes `<output>.manifest.json` next to a result file.
void write_manifest(const std::string& output, const std::string& subcommand,
                    const json& options, const std::string& input_digest,
                    std::uint64_t seed) {
  json m;
  m["subcommand"] = subcommand;
  m["options"] = options;
  m["input_digest"] = input_digest;
  m["seed"] = seed;
  m["version"] = SVYEXP_VERSION;
  m["timestamp"] = utc_timestamp();
  std::ofstream f(output + ".manifest.json");
  if (!f) throw Error(ErrorCode::kIo, "cannot write manifest for '" + output + "'");
  f << m.dump(2) << '\n';
}

// Sends `text` to `path`, or to `out` when the path is empty.
void emit(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty()) {
    out << text;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::kIo, "cannot write '" + path + "'");
  f << text;
}

void check_format(const std::string& format) {
  if (format != "csv" && format != "json") {
    throw UsageError("--format must be csv or json");
  }
}

BootstrapConfig bootstrap_config(std::size_t replicates, std::uint64_t seed,
                                 double level, const std::string& method,
                                 unsigned threads) {
  BootstrapConfig cfg;
  cfg.replicates = replicates;
  cfg.seed = seed;
  cfg.ci_level = level;
  try {
    cfg.ci_method = parse_ci_method(method);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  cfg.threads = threads;
  if (!(level > 0.0 && level < 1.0)) throw UsageError("--ci-level must be in (0, 1)");
  if (replicates < 2) throw UsageError("--bootstrap needs at least 2 replicates");
  return cfg;
}

// ---------------------------------------------------------------- estimate

struct EstimateOptions {
  std::string input;
  std::string outcome = "y";
  std::string treatment = "t";
  std::string weight = "w";
  std::string strata;
  std::string post_stratify;
  std::string estimators;
  std::string se = "bootstrap";
  std::size_t replicates = 1000;
  std::uint64_t seed = 1;
  double ci_level = 0.95;
  std::string ci_method = "normal";
  std::optional<double> p;
  unsigned threads = 1;
  std::string format = "csv";
  std::string output;
};

StrataRecipe parse_recipe(const EstimateOptions& o) {
  StrataRecipe recipe;
  recipe.covariate = o.strata;
  if (o.post_stratify.empty() || o.post_stratify == "none") return recipe;
  const std::string prefix = "weights:";
  if (o.post_stratify.rfind(prefix, 0) != 0) {
    throw UsageError("--post-stratify expects weights:K");
  }
  const std::string k = o.post_stratify.substr(prefix.size());
  char* end = nullptr;
  const long v = std::strtol(k.c_str(), &end, 10);
  if (k.empty() || *end != '\0' || v < 1 || v > 100000) {
    throw UsageError("--post-stratify weights:K needs a positive integer K");
  }
  recipe.weight_strata = static_cast<int>(v);
  return recipe;
}

std::vector<EstimatorId> parse_estimator_list(const std::string& text, bool stratified) {
  std::vector<EstimatorId> ids;
  if (text.empty()) {
    ids = {EstimatorId::kSateDm, EstimatorId::kDoubleHajek};
    if (stratified) ids.push_back(EstimatorId::kPsDouble);
    return ids;
  }
  for (const auto& name : split_list(text)) {
    try {
      ids.push_back(parse_estimator_id(name));
    } catch (const Error& e) {
      throw UsageError(e.what());
    }
  }
  if (ids.empty()) throw UsageError("--estimators is empty");
  return ids;
}

bool is_post_stratified(EstimatorId id) {
  return id == EstimatorId::kPsDouble || id == EstimatorId::kPsSingle;
}

std::optional<double> plugin_variance(EstimatorId id, const ExperimentView& view) {
  if (id == EstimatorId::kSateDm) return neyman_sate_var_estimate(view);
  if (id == EstimatorId::kDoubleHajek) return hh_plugin_variance(view);
  return std::nullopt;
}

int cmd_estimate(const EstimateOptions& o, std::ostream& out, std::ostream& err) {
  check_format(o.format);
  if (o.se != "bootstrap" && o.se != "plugin" && o.se != "none") {
    throw UsageError("--se must be bootstrap, plugin or none");
  }
  StrataRecipe recipe = parse_recipe(o);
  const std::vector<EstimatorId> ids = parse_estimator_list(o.estimators, !recipe.empty());
  for (EstimatorId id : ids) {
    if (is_post_stratified(id) && recipe.empty()) {
      throw UsageError(std::string(to_string(id)) +
                       " needs --strata NAME or --post-stratify weights:K");
    }
  }
  if (o.p && !(*o.p > 0.0 && *o.p < 1.0)) throw UsageError("--p must be in (0, 1)");
  BootstrapConfig boot_cfg;
  if (o.se != "none") {
    boot_cfg = bootstrap_config(o.replicates, o.seed, o.ci_level, o.ci_method, o.threads);
  }

  const std::string bytes = read_file(o.input);
  std::istringstream in(bytes);
  const CsvTable table = parse_csv(in);
  ColumnMap map{o.outcome, o.treatment, o.weight, {}};
  if (!o.strata.empty()) map.covariates.push_back(o.strata);
  const ExperimentData data = validate_experiment(extract_columns(table, map));
  const ExperimentView view = data.view();
  std::vector<std::string> levels;
  if (!o.strata.empty()) levels = data.covariate(o.strata);

  std::vector<std::string> shared_notes;
  if (recipe.weight_strata > static_cast<int>(data.n())) {
    shared_notes.push_back("weight strata reduced from " +
                           std::to_string(recipe.weight_strata) + " to n = " +
                           std::to_string(data.n()));
    recipe.weight_strata = static_cast<int>(data.n());
  }

  std::vector<EstimatorSpec> specs;
  std::vector<EstimateReport> reports;
  for (EstimatorId id : ids) {
    EstimatorSpec spec;
    spec.id = id;
    if (is_post_stratified(id)) spec.strata = recipe;
    if (id == EstimatorId::kSingleHajek || id == EstimatorId::kPsSingle) spec.p = o.p;
    if (id == EstimatorId::kHtMean) spec.expected_n = static_cast<double>(data.n());
    specs.push_back(spec);

    EstimateReport r;
    r.estimator = id;
    r.n = data.n();
    r.n1 = data.n1();
    r.n0 = data.n0();
    if (is_post_stratified(id)) {
      const StrataPartition part = build_strata(view, levels, spec.strata);
      StrataPartition used;
      r.point = post_stratified(view, part,
                                id == EstimatorId::kPsDouble ? PsVariant::kDouble
                                                             : PsVariant::kSingle,
                                spec.p, &used);
      r.notes = shared_notes;
      r.notes.push_back("strata " + std::to_string(part.k) + " -> " +
                        std::to_string(used.k));
      for (const auto& m : used.merges) r.notes.push_back(m);
    } else {
      r.point = evaluate(spec, view, levels);
    }
    reports.push_back(std::move(r));
  }

  std::vector<std::size_t> need_boot;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (o.se == "bootstrap") {
      need_boot.push_back(i);
    } else if (o.se == "plugin") {
      std::optional<double> v;
      try {
        v = plugin_variance(specs[i].id, view);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kArmTooSmall) throw;
        reports[i].notes.push_back(std::string("no plug-in SE: ") + e.what());
        continue;
      }
      if (!v) {
        reports[i].notes.push_back("no plug-in formula; bootstrap SE used");
        need_boot.push_back(i);
        continue;
      }
      const double z = normal_critical_value(o.ci_level);
      reports[i].se = std::sqrt(*v);
      reports[i].ci_low = reports[i].point - z * *reports[i].se;
      reports[i].ci_high = reports[i].point + z * *reports[i].se;
      reports[i].se_method = SeMethod::kPlugin;
    }
  }
  if (!need_boot.empty()) {
    std::vector<EstimatorSpec> boot_specs;
    for (std::size_t i : need_boot) boot_specs.push_back(specs[i]);
    const std::vector<BootstrapResult> res =
        bootstrap_estimators(view, levels, boot_specs, boot_cfg);
    for (std::size_t j = 0; j < need_boot.size(); ++j) {
      EstimateReport& r = reports[need_boot[j]];
      r.se = res[j].se;
      r.ci_low = res[j].ci_low;
      r.ci_high = res[j].ci_high;
      r.se_method = SeMethod::kBootstrap;
      if (res[j].redraws > 0) {
        r.notes.push_back(std::to_string(res[j].redraws) + " bootstrap redraws");
      }
    }
  }

  std::ostringstream text;
  if (o.format == "csv") {
    write_csv_row(text, {"estimator", "point", "se", "ci_low", "ci_high", "se_method", "n",
                         "n1", "n0", "notes"});
    for (const auto& r : reports) {
      std::string notes;
      for (std::size_t i = 0; i < r.notes.size(); ++i) notes += (i ? "; " : "") + r.notes[i];
      write_csv_row(text, {std::string(to_string(r.estimator)), format_double(r.point),
                           opt_number(r.se), opt_number(r.ci_low), opt_number(r.ci_high),
                           std::string(to_string(r.se_method)), std::to_string(r.n),
                           std::to_string(r.n1), std::to_string(r.n0), notes});
    }
  } else {
    json arr = json::array();
    for (const auto& r : reports) {
      json j;
      j["estimator"] = to_string(r.estimator);
      j["point"] = r.point;
      j["se"] = opt_json(r.se);
      j["ci_low"] = opt_json(r.ci_low);
      j["ci_high"] = opt_json(r.ci_high);
      j["se_method"] = to_string(r.se_method);
      j["n"] = r.n;
      j["n1"] = r.n1;
      j["n0"] = r.n0;
      j["notes"] = r.notes;
      arr.push_back(j);
    }
    text << json{{"reports", arr}}.dump(2) << '\n';
  }
  emit(o.output, text.str(), out);
  if (!o.output.empty()) {
    json opts{{"input", o.input},         {"outcome", o.outcome},
              {"treatment", o.treatment}, {"weight", o.weight},
              {"strata", o.strata},       {"post_stratify", o.post_stratify},
              {"estimators", o.estimators}, {"se", o.se},
              {"bootstrap", o.replicates}, {"ci_level", o.ci_level},
              {"ci_method", o.ci_method}, {"p", opt_json(o.p)},
              {"format", o.format}};
    write_manifest(o.output, "estimate", opts, content_digest(bytes), o.seed);
  }
  (void)err;
  return kExitOk;
}

// ---------------------------------------------------------------- simulate

struct SimulateOptions {
  std::string scenario = "A";
  std::string config;
  std::vector<std::string> overrides;
  std::optional<std::size_t> reps;
  std::optional<std::uint64_t> seed;
  unsigned threads = 1;
  std::string format = "csv";
  std::string output;
};

const std::vector<std::string>& known_keys() {
  static const std::vector<std::string> keys{
      "population.N",          "population.gamma",      "population.a",
      "population.b",          "population.noise_sd",   "population.effect",
      "population.constant_effect",
      "study.sample_n",        "study.reps",            "study.strata",
      "study.assignment",      "study.p",               "study.n1",
      "study.sampling",        "study.seed",
      "estimator.list",
      "bootstrap.replicates",  "bootstrap.ci_level",    "bootstrap.ci_method",
      "sweep.gammas",          "sweep.populations"};
  return keys;
}

Config scenario_defaults(const std::string& scenario) {
  Config c;
  c.set("population.N", "10000");
  c.set("population.gamma", "1");
  c.set("population.a", "1.2");
  c.set("population.b", "25.08");
  c.set("population.noise_sd", "5");
  c.set("population.effect", "heterogeneous");
  c.set("population.constant_effect", "30");
  c.set("study.sample_n", "500");
  c.set("study.reps", "10000");
  c.set("study.strata", "7");
  c.set("study.assignment", "complete");
  c.set("study.p", "0.5");
  c.set("study.sampling", "systematic");
  c.set("study.seed", "1");
  c.set("estimator.list", "sate_dm,double_hajek,ps_double");
  c.set("bootstrap.replicates", "400");
  c.set("bootstrap.ci_level", "0.95");
  c.set("bootstrap.ci_method", "normal");
  if (scenario == "B") {
    c.set("population.effect", "constant");
  } else if (scenario == "C") {
    c.set("study.reps", "1000");
    c.set("bootstrap.replicates", "0");
    c.set("sweep.gammas", "0,0.25,0.5,0.75,1");
    c.set("sweep.populations", "20");
  } else if (scenario != "A") {
    throw UsageError("--scenario must be A, B or C");
  }
  return c;
}

std::size_t require_count(const Config& c, const std::string& key, long long min) {
  const long long v = c.get_int(key).value();
  if (v < min) {
    throw Error(ErrorCode::kConfig,
                "'" + key + "' must be >= " + std::to_string(min) + ", got " +
                    std::to_string(v));
  }
  return static_cast<std::size_t>(v);
}

struct ResolvedSimulation {
  DgpConfig dgp;
  StudyConfig study;
  std::vector<double> gammas;
  std::size_t populations = 0;
};

ResolvedSimulation resolve_simulation(const Config& c) {
  c.require_known(known_keys());
  ResolvedSimulation r;
  r.dgp.population_size = require_count(c, "population.N", 100);
  r.dgp.gamma = c.get_double("population.gamma").value();
  r.dgp.a = c.get_double("population.a").value();
  r.dgp.b = c.get_double("population.b").value();
  r.dgp.noise_sd = c.get_double("population.noise_sd").value();
  r.dgp.constant_effect = c.get_double("population.constant_effect").value();
  const std::string effect = c.get("population.effect").value();
  if (effect == "heterogeneous") {
    r.dgp.effect = EffectModel::kHeterogeneous;
  } else if (effect == "constant") {
    r.dgp.effect = EffectModel::kConstant;
  } else {
    throw Error(ErrorCode::kConfig, "'population.effect' must be heterogeneous or constant");
  }

  r.study.sample_n = require_count(c, "study.sample_n", 2);
  r.study.reps = require_count(c, "study.reps", 2);
  r.study.strata = static_cast<int>(require_count(c, "study.strata", 1));
  r.study.assignment.mechanism = parse_assignment_mechanism(c.get("study.assignment").value());
  r.study.assignment.p = c.get_double("study.p").value();
  if (c.has("study.n1")) r.study.assignment.n1 = require_count(c, "study.n1", 1);
  r.study.sampling = parse_sampling_scheme(c.get("study.sampling").value());
  r.study.seed = static_cast<std::uint64_t>(c.get_int("study.seed").value());
  r.study.estimators.clear();
  for (const auto& name : split_list(c.get("estimator.list").value())) {
    r.study.estimators.push_back(parse_estimator_id(name));
  }
  r.study.bootstrap_replicates = require_count(c, "bootstrap.replicates", 0);
  r.study.ci_level = c.get_double("bootstrap.ci_level").value();
  r.study.ci_method = parse_ci_method(c.get("bootstrap.ci_method").value());

  if (c.has("sweep.gammas")) {
    for (const auto& g : split_list(c.get("sweep.gammas").value())) {
      auto v = parse_double(g);
      if (!v) throw Error(ErrorCode::kConfig, "'sweep.gammas' has a non-number '" + g + "'");
      r.gammas.push_back(*v);
    }
    r.populations = c.has("sweep.populations") ? require_count(c, "sweep.populations", 1) : 1;
  }
  return r;
}

std::string fixed(double x, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, x);
  return buf;
}

void print_table1(const std::string& scenario, const SimulationSummary& s, std::ostream& out) {
  char line[160];
  out << "Scenario " << scenario << "  tau = " << fixed(s.tau) << "  reps = " << s.reps
      << "  mean tau_S = " << fixed(s.mean_oracle_sate) << "\n";
  std::snprintf(line, sizeof line, "%-14s %10s %8s %8s %8s %8s %8s\n", "estimator", "E[est]",
                "bias", "SE", "RMSE", "bootSE", "cover");
  out << line;
  for (const auto& r : s.rows) {
    std::snprintf(line, sizeof line, "%-14s %10s %8s %8s %8s %8s %8s\n", r.name.c_str(),
                  fixed(r.mean).c_str(), fixed(r.bias).c_str(), fixed(r.se).c_str(),
                  fixed(r.rmse).c_str(),
                  r.mean_boot_se ? fixed(*r.mean_boot_se).c_str() : "-",
                  r.coverage ? (fixed(100.0 * *r.coverage, 1) + "%").c_str() : "-");
    out << line;
  }
}

int cmd_simulate(const SimulateOptions& o, std::ostream& out, std::ostream& err) {
  check_format(o.format);
  Config c = scenario_defaults(o.scenario);
  std::string digest = content_digest("");
  if (!o.config.empty()) {
    const std::string bytes = read_file(o.config);
    digest = content_digest(bytes);
    std::istringstream in(bytes);
    const Config file = Config::parse(in, o.config);
    file.require_known(known_keys());
    for (const auto& [k, v] : file.values()) c.set(k, v);
  }
  for (const auto& ov : o.overrides) c.apply_override(ov);
  if (o.reps) c.set("study.reps", std::to_string(*o.reps));
  if (o.seed) c.set("study.seed", std::to_string(*o.seed));
  ResolvedSimulation r = resolve_simulation(c);
  r.study.threads = o.threads;

  std::ostringstream text;
  const bool sweep = o.scenario == "C" || !r.gammas.empty();
  if (!sweep) {
    Rng pop_rng = Rng::substream(r.study.seed, 0xD06FULL);
    const GeneratedPopulation gen = generate_population(r.dgp, r.study.sample_n, pop_rng);
    const SimulationSummary s = run_study(gen.population, r.study);
    if (o.format == "csv") {
      write_csv_row(text, {"scenario", "estimator", "oracle", "tau", "mean", "bias", "se",
                           "rmse", "mean_boot_se", "coverage", "reps", "degenerate_redraws",
                           "bootstrap_redraws"});
      for (const auto& row : s.rows) {
        write_csv_row(text, {o.scenario, row.name, row.oracle ? "1" : "0",
                             format_double(s.tau), format_double(row.mean),
                             format_double(row.bias), format_double(row.se),
                             format_double(row.rmse), opt_number(row.mean_boot_se),
                             opt_number(row.coverage), std::to_string(s.reps),
                             std::to_string(s.assignment_redraws),
                             std::to_string(s.bootstrap_redraws)});
      }
    } else {
      json rows = json::array();
      for (const auto& row : s.rows) {
        rows.push_back(json{{"estimator", row.name},
                            {"oracle", row.oracle},
                            {"mean", row.mean},
                            {"bias", row.bias},
                            {"se", row.se},
                            {"rmse", row.rmse},
                            {"mean_boot_se", opt_json(row.mean_boot_se)},
                            {"coverage", opt_json(row.coverage)}});
      }
      text << json{{"scenario", o.scenario},
                   {"tau", s.tau},
                   {"mean_oracle_sate", s.mean_oracle_sate},
                   {"reps", s.reps},
                   {"degenerate_redraws", s.assignment_redraws},
                   {"bootstrap_redraws", s.bootstrap_redraws},
                   {"rows", rows}}
                  .dump(2)
           << '\n';
    }
    if (!o.output.empty()) print_table1(o.scenario, s, out);
  } else {
    if (r.gammas.empty()) throw Error(ErrorCode::kConfig, "scenario C needs sweep.gammas");
    const SweepResult res = gamma_sweep(r.dgp, r.study, r.gammas, r.populations);
    auto row_fields = [](const SweepRow& row) {
      return std::vector<std::string>{
          format_double(row.gamma),
          row.population < 0 ? std::string("avg") : std::to_string(row.population),
          row.estimator,          format_double(row.tau), format_double(row.mean),
          format_double(row.bias), format_double(row.se), format_double(row.rmse),
          format_double(row.bias_mcse)};
    };
    if (o.format == "csv") {
      write_csv_row(text, {"gamma", "population", "estimator", "tau", "mean", "bias", "se",
                           "rmse", "bias_mcse"});
      for (const auto& row : res.rows) write_csv_row(text, row_fields(row));
      for (const auto& row : res.averages) write_csv_row(text, row_fields(row));
    } else {
      auto to_json = [](const SweepRow& row) {
        return json{{"gamma", row.gamma},
                    {"population", row.population < 0 ? json("avg") : json(row.population)},
                    {"estimator", row.estimator},
                    {"tau", row.tau},
                    {"mean", row.mean},
                    {"bias", row.bias},
                    {"se", row.se},
                    {"rmse", row.rmse},
                    {"bias_mcse", row.bias_mcse}};
      };
      json rows = json::array();
      json avgs = json::array();
      for (const auto& row : res.rows) rows.push_back(to_json(row));
      for (const auto& row : res.averages) avgs.push_back(to_json(row));
      text << json{{"scenario", o.scenario}, {"rows", rows}, {"averages", avgs}}.dump(2)
           << '\n';
    }
    if (!o.output.empty()) {
      char line[160];
      std::snprintf(line, sizeof line, "%-8s %-14s %9s %9s %9s\n", "gamma", "estimator", "bias",
                    "SE", "RMSE");
      out << line;
      for (const auto& row : res.averages) {
        std::snprintf(line, sizeof line, "%-8s %-14s %9s %9s %9s\n",
                      fixed(row.gamma).c_str(), row.estimator.c_str(),
                      fixed(row.bias, 3).c_str(), fixed(row.se, 3).c_str(),
                      fixed(row.rmse, 3).c_str());
        out << line;
      }
    }
  }
  emit(o.output, text.str(), out);
  if (!o.output.empty()) {
    json opts = json::object();
    for (const auto& [k, v] : c.values()) opts[k] = v;
    opts["scenario"] = o.scenario;
    opts["format"] = o.format;
    write_manifest(o.output, "simulate", opts, digest, r.study.seed);
  }
  (void)err;
  return kExitOk;
}

// ---------------------------------------------------------------- compare

struct CompareOptions {
  std::vector<std::string> inputs;
  std::string group;
  std::string experiment;
  std::string outcome = "y";
  std::string treatment = "t";
  std::string weight = "w";
  std::size_t replicates = 1000;
  std::uint64_t seed = 1;
  unsigned threads = 1;
  std::string format = "csv";
  std::string output;
  std::string qq_output;
};

int cmd_compare(const CompareOptions& o, std::ostream& out, std::ostream& err) {
  check_format(o.format);
  const BootstrapConfig base = bootstrap_config(o.replicates, o.seed, 0.95, "normal", o.threads);

  CsvTable table;
  std::string all_bytes;
  for (std::size_t f = 0; f < o.inputs.size(); ++f) {
    const std::string bytes = read_file(o.inputs[f]);
    all_bytes += bytes;
    std::istringstream in(bytes);
    CsvTable t = parse_csv(in);
    if (f == 0) {
      table = std::move(t);
    } else {
      if (t.header != table.header) {
        throw Error(ErrorCode::kParse, "'" + o.inputs[f] + "' has a different header");
      }
      for (auto& row : t.rows) table.rows.push_back(std::move(row));
    }
  }
  for (const std::string* col : {&o.group, &o.experiment}) {
    if (!col->empty()) table.index_of(*col);
  }

  struct Slice {
    std::string group;
    std::string experiment;
    std::vector<std::size_t> rows;
  };
  std::vector<Slice> slices;
  std::map<std::pair<std::string, std::string>, std::size_t> where;
  auto key_cell = [&](const CsvRow& row, const std::string& col) -> std::optional<std::string> {
    if (col.empty()) return std::string();
    const std::size_t i = table.index_of(col);
    if (i >= row.fields.size()) return std::nullopt;
    return row.fields[i];
  };
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    auto g = key_cell(table.rows[r], o.group);
    auto e = key_cell(table.rows[r], o.experiment);
    std::pair<std::string, std::string> key;
    if (g && e) {
      key = {*g, *e};
    } else {
      key = {"", "line " + std::to_string(table.rows[r].line)};
    }
    auto it = where.find(key);
    if (it == where.end()) {
      where.emplace(key, slices.size());
      slices.push_back(Slice{key.first, key.second, {r}});
    } else {
      slices[it->second].rows.push_back(r);
    }
  }

  const ColumnMap map{o.outcome, o.treatment, o.weight, {}};
  std::vector<DeltaReport> reports;
  std::vector<std::string> status;
  std::vector<double> deltas;
  std::size_t failures = 0;
  for (std::size_t s = 0; s < slices.size(); ++s) {
    BootstrapConfig cfg = base;
    cfg.seed = mix64(o.seed ^ mix64(s + 1));
    DeltaReport rep;
    try {
      const ExperimentData data =
          validate_experiment(extract_columns(table, map, slices[s].rows));
      rep = delta_statistic(data, cfg);
      status.push_back("ok");
      deltas.push_back(rep.delta);
    } catch (const Error& e) {
      status.push_back(std::string("error: ") + e.what());
      ++failures;
    }
    rep.group = slices[s].group;
    rep.experiment = slices[s].experiment;
    reports.push_back(rep);
  }

  std::vector<QqPoint> qq;
  if (deltas.size() >= 2) {
    qq = qq_points(deltas);
  } else {
    err << "qq table skipped: fewer than two experiments produced a delta\n";
  }

  std::ostringstream text;
  std::ostringstream qq_text;
  if (o.format == "csv") {
    write_csv_row(text, {"group", "experiment_id", "sate", "hh", "se_diff", "delta", "status"});
    for (std::size_t i = 0; i < reports.size(); ++i) {
      const DeltaReport& r = reports[i];
      const bool ok = status[i] == "ok";
      write_csv_row(text, {r.group, r.experiment, ok ? format_double(r.sate_est) : "",
                           ok ? format_double(r.hh_est) : "",
                           ok ? format_double(r.se_diff) : "",
                           ok ? format_double(r.delta) : "", status[i]});
    }
    write_csv_row(qq_text, {"theoretical_q", "observed_q"});
    for (const auto& p : qq) {
      write_csv_row(qq_text, {format_double(p.theoretical), format_double(p.observed)});
    }
  } else {
    json rows = json::array();
    for (std::size_t i = 0; i < reports.size(); ++i) {
      const DeltaReport& r = reports[i];
      const bool ok = status[i] == "ok";
      rows.push_back(json{{"group", r.group},
                          {"experiment_id", r.experiment},
                          {"sate", ok ? json(r.sate_est) : json(nullptr)},
                          {"hh", ok ? json(r.hh_est) : json(nullptr)},
                          {"se_diff", ok ? json(r.se_diff) : json(nullptr)},
                          {"delta", ok ? json(r.delta) : json(nullptr)},
                          {"status", status[i]}});
    }
    json q = json::array();
    for (const auto& p : qq) {
      q.push_back(json{{"theoretical_q", p.theoretical}, {"observed_q", p.observed}});
    }
    text << json{{"experiments", rows}}.dump(2) << '\n';
    qq_text << json{{"qq", q}}.dump(2) << '\n';
  }

  emit(o.output, text.str(), out);
  if (!o.qq_output.empty()) {
    emit(o.qq_output, qq_text.str(), out);
  } else if (o.output.empty()) {
    out << '\n' << qq_text.str();
  }
  if (!o.output.empty()) {
    json opts{{"inputs", o.inputs},       {"group", o.group},
              {"experiment", o.experiment}, {"outcome", o.outcome},
              {"treatment", o.treatment}, {"weight", o.weight},
              {"bootstrap", o.replicates}, {"format", o.format}};
    write_manifest(o.output, "compare", opts, content_digest(all_bytes), o.seed);
  }
  if (failures > 0) err << failures << " experiment(s) failed; see the status column\n";
  return kExitOk;
}

int exit_code_for(const Error& e) {
  switch (e.code()) {
    case ErrorCode::kInvalidArgument:
      return kExitUsage;
    default:
      return kExitData;
  }
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Design-based estimators for experiments embedded in weighted surveys",
               "svyexp"};
  app.require_subcommand(1);
  app.set_version_flag("--version", SVYEXP_VERSION);

  const unsigned env_threads = default_threads();

  EstimateOptions eo;
  eo.threads = env_threads;
  auto* est = app.add_subcommand("estimate", "Point estimates and standard errors");
  est->add_option("input", eo.input, "CSV file with a header row")->required();
  est->add_option("--outcome", eo.outcome, "Outcome column")->capture_default_str();
  est->add_option("--treatment", eo.treatment, "0/1 treatment column")->capture_default_str();
  est->add_option("--weight", eo.weight, "Survey weight column")->capture_default_str();
  est->add_option("--strata", eo.strata, "Categorical column for post-stratification");
  est->add_option("--post-stratify", eo.post_stratify, "weights:K weight-quantile strata");
  est->add_option("--estimators", eo.estimators,
                  "Comma list (sate_dm, hajek_mean, ht_mean, double_hajek, single_hajek, "
                  "tau_sd, ps_double, ps_single)");
  est->add_option("--se", eo.se, "bootstrap, plugin or none")->capture_default_str();
  est->add_option("--bootstrap", eo.replicates, "Bootstrap replicates")->capture_default_str();
  est->add_option("--seed", eo.seed, "Master seed")->capture_default_str();
  est->add_option("--ci-level", eo.ci_level, "Confidence level")->capture_default_str();
  est->add_option("--ci-method", eo.ci_method, "normal or percentile")->capture_default_str();
  est->add_option("--p", eo.p, "Assignment probability for single-Hajek estimators");
  est->add_option("--threads", eo.threads, "Worker threads (default $SVYEXP_THREADS or 1)");
  est->add_option("--format", eo.format, "csv or json")->capture_default_str();
  est->add_option("-o,--output", eo.output, "Output file (default stdout)");

  SimulateOptions so;
  so.threads = env_threads;
  std::size_t sim_reps = 0;
  std::uint64_t sim_seed = 0;
  auto* sim = app.add_subcommand("simulate", "Finite-population Monte Carlo studies");
  sim->add_option("--scenario", so.scenario, "Built-in scenario A, B or C")
      ->capture_default_str();
  sim->add_option("--config", so.config, "Key-value scenario file");
  sim->add_option("--set", so.overrides, "Override section.key=value (repeatable)");
  auto* reps_opt = sim->add_option("--reps", sim_reps, "Replicates per population");
  auto* seed_opt = sim->add_option("--seed", sim_seed, "Master seed");
  sim->add_option("--threads", so.threads, "Worker threads (default $SVYEXP_THREADS or 1)");
  sim->add_option("--format", so.format, "csv or json")->capture_default_str();
  sim->add_option("-o,--output", so.output, "Output file (default stdout)");

  CompareOptions co;
  co.threads = env_threads;
  auto* cmp = app.add_subcommand("compare", "Standardized SATE vs double-Hajek differences");
  cmp->add_option("inputs", co.inputs, "CSV files sharing one header")->required();
  cmp->add_option("--group", co.group, "Survey (group) column");
  cmp->add_option("--experiment", co.experiment, "Experiment id column");
  cmp->add_option("--outcome", co.outcome, "Outcome column")->capture_default_str();
  cmp->add_option("--treatment", co.treatment, "0/1 treatment column")->capture_default_str();
  cmp->add_option("--weight", co.weight, "Survey weight column")->capture_default_str();
  cmp->add_option("--bootstrap", co.replicates, "Bootstrap replicates")->capture_default_str();
  cmp->add_option("--seed", co.seed, "Master seed")->capture_default_str();
  cmp->add_option("--threads", co.threads, "Worker threads (default $SVYEXP_THREADS or 1)");
  cmp->add_option("--format", co.format, "csv or json")->capture_default_str();
  cmp->add_option("-o,--output", co.output, "Delta table file (default stdout)");
  cmp->add_option("--qq", co.qq_output, "qq table file");

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (est->parsed()) {
      if (eo.threads < 1) throw UsageError("--threads must be >= 1");
      return cmd_estimate(eo, out, err);
    }
    if (sim->parsed()) {
      if (so.threads < 1) throw UsageError("--threads must be >= 1");
      if (reps_opt->count() > 0) so.reps = sim_reps;
      if (seed_opt->count() > 0) so.seed = sim_seed;
      return cmd_simulate(so, out, err);
    }
    if (co.threads < 1) throw UsageError("--threads must be >= 1");
    return cmd_compare(co, out, err);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kExitInternal;
  }
}

}  // namespace svyexp
