#include "voltcraft/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "voltcraft/baseline.hpp"
#include "voltcraft/error.hpp"
#include "voltcraft/powerflow.hpp"

namespace voltcraft {

namespace {

using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

json parse_json(const std::string& text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorCode::Parse, std::string(what) + ": " + e.what());
  }
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void spit(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::Io, "cannot write " + path);
  out << text;
  if (!out) fail(ErrorCode::Io, "failed writing " + path);
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

double quantile(std::vector<double> v, double q) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  if (q == 0.5 && v.size() % 2 == 0) return 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
  const auto k = static_cast<std::size_t>(std::ceil(q * static_cast<double>(v.size()))) - 1;
  return v[std::min(k, v.size() - 1)];
}

// Reads `key` into `out` when present; type errors surface as ParseError.
template <class T>
void take(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void reject_unknown(const json& j, std::initializer_list<const char*> known, const char* what) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find_if(known.begin(), known.end(), [&](const char* k) { return it.key() == k; }) == known.end())
      fail(ErrorCode::Parse, std::string(what) + ": unknown key '" + it.key() + "'");
  }
}

json config_json(const RunConfig& c) {
  const TrainConfig& t = c.train;
  return {{"learning_rate", t.learning_rate},
          {"batch_size", t.batch_size},
          {"epochs", t.epochs},
          {"optimizer", to_string(t.optimizer)},
          {"adam_beta1", t.adam_beta1},
          {"adam_beta2", t.adam_beta2},
          {"adam_eps", t.adam_eps},
          {"penalty_coeff", t.penalty_coeff},
          {"baseline_mode", to_string(t.baseline_mode)},
          {"baseline_window", t.baseline_window},
          {"seed", t.seed},
          {"sigma_floor", t.sigma_floor},
          {"hidden", t.hidden},
          {"clip_norm", t.clip_norm},
          {"trace_window", t.trace_window},
          {"power_factor", c.power_factor},
          {"train_fraction", c.train_fraction},
          {"record_baseline", c.record_baseline}};
}

RunConfig config_from(const json& j) {
  if (!j.is_object()) fail(ErrorCode::Parse, "config must be a JSON object");
  reject_unknown(j,
                 {"learning_rate", "batch_size", "epochs", "optimizer", "adam_beta1", "adam_beta2", "adam_eps",
                  "penalty_coeff", "baseline_mode", "baseline_window", "seed", "sigma_floor", "hidden", "clip_norm",
                  "trace_window", "power_factor", "train_fraction", "record_baseline"},
                 "config");
  RunConfig c;
  TrainConfig& t = c.train;
  try {
    take(j, "learning_rate", t.learning_rate);
    take(j, "batch_size", t.batch_size);
    take(j, "epochs", t.epochs);
    if (j.contains("optimizer")) {
      const std::string o = j.at("optimizer").get<std::string>();
      if (o == "adam")
        t.optimizer = OptimizerKind::Adam;
      else if (o == "sgd")
        t.optimizer = OptimizerKind::Sgd;
      else
        fail(ErrorCode::Parse, "config: optimizer must be 'adam' or 'sgd'");
    }
    take(j, "adam_beta1", t.adam_beta1);
    take(j, "adam_beta2", t.adam_beta2);
    take(j, "adam_eps", t.adam_eps);
    take(j, "penalty_coeff", t.penalty_coeff);
    if (j.contains("baseline_mode")) {
      const std::string m = j.at("baseline_mode").get<std::string>();
      if (m == "running_mean")
        t.baseline_mode = BaselineMode::RunningMean;
      else if (m == "none")
        t.baseline_mode = BaselineMode::None;
      else
        fail(ErrorCode::Parse, "config: baseline_mode must be 'running_mean' or 'none'");
    }
    take(j, "baseline_window", t.baseline_window);
    take(j, "seed", t.seed);
    take(j, "sigma_floor", t.sigma_floor);
    take(j, "hidden", t.hidden);
    take(j, "clip_norm", t.clip_norm);
    take(j, "trace_window", t.trace_window);
    take(j, "power_factor", c.power_factor);
    take(j, "train_fraction", c.train_fraction);
    take(j, "record_baseline", c.record_baseline);
  } catch (const json::exception& e) {
    fail(ErrorCode::Parse, std::string("config: ") + e.what());
  }
  validate(t);
  return c;
}

std::string status_name(ErrorCode code) { return to_string(code); }

json inverter_kvar(const NetworkModel& model, const std::vector<double>& q) {
  json out = json::object();
  for (std::size_t k = 0; k < q.size(); ++k) out[model.label(model.inverters()[k].bus)] = model.pu_to_kw(q[k]);
  return out;
}

std::string q_header(const NetworkModel& model) {
  std::string h;
  for (const InverterSpec& inv : model.inverters()) h += "," + model.label(inv.bus) + "_qg_kvar";
  return h;
}

std::string q_fields(const NetworkModel& model, const std::vector<double>& q) {
  std::string f;
  for (std::size_t k = 0; k < model.num_inverters(); ++k) f += "," + (k < q.size() ? format_double(model.pu_to_kw(q[k])) : "");
  return f;
}

}  // namespace

SplitSel parse_split(const std::string& name) {
  if (name == "all") return SplitSel::All;
  if (name == "train") return SplitSel::Train;
  if (name == "test") return SplitSel::Test;
  fail(ErrorCode::InvalidArgument, "split must be 'all', 'train' or 'test'");
}

std::vector<std::size_t> select(const TimeSeriesDataset& data, SplitSel sel) {
  if (sel == SplitSel::Train) return data.train;
  if (sel == SplitSel::Test) return data.test;
  std::vector<std::size_t> all(data.intervals.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return all;
}

RunConfig parse_run_config(const std::string& json_text) { return config_from(parse_json(json_text, "config")); }
std::string run_config_to_json(const RunConfig& config) { return config_json(config).dump(2); }

ProfileConfig parse_profile(const std::string& json_text) {
  const json j = parse_json(json_text, "profile");
  if (!j.is_object()) fail(ErrorCode::Parse, "profile must be a JSON object");
  reject_unknown(j,
                 {"days", "interval_s", "start_timestamp", "load_scale", "load_base", "load_noise", "solar_scale",
                  "sunrise_h", "sunset_h", "cloud_rate", "max_ramp", "power_factor", "train_fraction"},
                 "profile");
  ProfileConfig p;
  try {
    take(j, "days", p.days);
    take(j, "interval_s", p.interval_s);
    take(j, "start_timestamp", p.start_timestamp);
    take(j, "load_scale", p.load_scale);
    take(j, "load_base", p.load_base);
    take(j, "load_noise", p.load_noise);
    take(j, "solar_scale", p.solar_scale);
    take(j, "sunrise_h", p.sunrise_h);
    take(j, "sunset_h", p.sunset_h);
    take(j, "cloud_rate", p.cloud_rate);
    take(j, "max_ramp", p.max_ramp);
    take(j, "power_factor", p.power_factor);
    take(j, "train_fraction", p.train_fraction);
  } catch (const json::exception& e) {
    fail(ErrorCode::Parse, std::string("profile: ") + e.what());
  }
  return p;
}

std::string manifest_to_json(const TrainManifest& m) {
  json j;
  j["version"] = TrainManifest::kVersion;
  j["feeder"] = {{"path", m.feeder_path}, {"digest", m.feeder_digest}};
  j["data"] = {{"path", m.data_path}, {"digest", m.data_digest}};
  j["config"] = config_json(m.config);
  j["outputs"] = {{"model", m.model_out}, {"trace", m.trace_out}};
  return j.dump(2);
}

TrainManifest manifest_from_json(const std::string& json_text) {
  const json j = parse_json(json_text, "manifest");
  try {
    if (!j.is_object() || !j.contains("version")) fail(ErrorCode::Parse, "manifest has no version tag");
    const std::string version = j.at("version").get<std::string>();
    if (version != TrainManifest::kVersion)
      fail(ErrorCode::VersionMismatch, "manifest version '" + version + "', expected '" + TrainManifest::kVersion + "'");
    TrainManifest m;
    m.feeder_path = j.at("feeder").at("path").get<std::string>();
    m.feeder_digest = j.at("feeder").at("digest").get<std::string>();
    m.data_path = j.at("data").at("path").get<std::string>();
    m.data_digest = j.at("data").at("digest").get<std::string>();
    m.config = config_from(j.at("config"));
    m.model_out = j.at("outputs").at("model").get<std::string>();
    m.trace_out = j.at("outputs").at("trace").get<std::string>();
    return m;
  } catch (const json::exception& e) {
    fail(ErrorCode::Parse, std::string("manifest: ") + e.what());
  }
}

TrainManifest make_manifest(const std::string& feeder_path, const std::string& data_path,
                            const std::optional<std::string>& config_path, const std::string& model_out) {
  TrainManifest m;
  m.feeder_path = feeder_path;
  m.feeder_digest = file_digest(feeder_path);
  m.data_path = data_path;
  m.data_digest = file_digest(data_path);
  if (config_path) m.config = parse_run_config(slurp(*config_path));
  if (const char* env = std::getenv(kSeedEnv); env && *env) {
    char* end = nullptr;
    const unsigned long long seed = std::strtoull(env, &end, 10);
    if (*end != '\0') fail(ErrorCode::InvalidArgument, std::string(kSeedEnv) + " must be an unsigned integer");
    m.config.train.seed = seed;
  }
  m.model_out = model_out;
  m.trace_out = model_out + ".trace.csv";
  return m;
}

std::string validate_report(const NetworkModel& model, const std::string& feeder_path) {
  json j;
  j["name"] = model.name();
  if (!feeder_path.empty()) j["digest"] = file_digest(feeder_path);
  j["buses"] = model.num_buses();
  j["lines"] = model.size();
  j["depth"] = model.depth();
  j["base_mva"] = model.base_mva();
  j["base_kv"] = model.base_kv();
  j["v0_pu"] = std::sqrt(model.v0());
  double peak = 0.0;
  for (BusId b = 1; b <= model.size(); ++b) peak += model.peak_load()[b];
  j["total_peak_load_kw"] = model.pu_to_kw(peak);
  json invs = json::array();
  for (const InverterSpec& inv : model.inverters())
    invs.push_back({{"bus", model.label(inv.bus)},
                    {"p_rated_kw", model.pu_to_kw(inv.p_rated)},
                    {"s_rated_kva", model.pu_to_kw(inv.s_rated)},
                    {"q_min_kvar", model.pu_to_kw(inv.q_min)},
                    {"q_max_kvar", model.pu_to_kw(inv.q_max)}});
  j["inverters"] = invs;
  j["valid"] = true;
  return j.dump(2);
}

StateFile parse_state_file(const NetworkModel& model, const std::string& json_text) {
  const json j = parse_json(json_text, "state file");
  if (!j.is_object()) fail(ErrorCode::Parse, "state file must be a JSON object");
  reject_unknown(j, {"timestamp", "power_factor", "pc_kw", "pg_kw", "q_g_kvar"}, "state file");
  StateFile out;
  out.state.p.assign(model.size(), 0.0);
  out.state.q_c.assign(model.size(), 0.0);
  out.q_g.assign(model.num_inverters(), 0.0);
  try {
    take(j, "timestamp", out.state.timestamp);
    double pf = kDefaultPowerFactor;
    take(j, "power_factor", pf);
    if (!(pf > 0.0 && pf <= 1.0)) fail(ErrorCode::InvalidArgument, "power factor must lie in (0, 1]");
    const double tan_phi = std::sqrt(1.0 - pf * pf) / pf;
    auto bus_of = [&](const std::string& label) {
      auto b = model.find_label(label);
      if (!b || *b == 0) fail(ErrorCode::UnknownBus, "state file names unknown bus '" + label + "'");
      return *b;
    };
    if (j.contains("pc_kw"))
      for (auto it = j.at("pc_kw").begin(); it != j.at("pc_kw").end(); ++it) {
        const BusId b = bus_of(it.key());
        const double pc = it.value().get<double>();
        out.state.p[b - 1] -= model.kw_to_pu(pc);
        out.state.q_c[b - 1] = model.kw_to_pu(pc * tan_phi);
      }
    if (j.contains("pg_kw"))
      for (auto it = j.at("pg_kw").begin(); it != j.at("pg_kw").end(); ++it) {
        const BusId b = bus_of(it.key());
        if (!model.inverter_at(b)) fail(ErrorCode::UnknownBus, "no inverter at bus '" + it.key() + "'");
        out.state.p[b - 1] += model.kw_to_pu(it.value().get<double>());
      }
    if (j.contains("q_g_kvar"))
      for (auto it = j.at("q_g_kvar").begin(); it != j.at("q_g_kvar").end(); ++it) {
        const auto k = model.inverter_at(bus_of(it.key()));
        if (!k) fail(ErrorCode::UnknownBus, "no inverter at bus '" + it.key() + "'");
        out.q_g[*k] = model.kw_to_pu(it.value().get<double>());
      }
  } catch (const json::exception& e) {
    fail(ErrorCode::Parse, std::string("state file: ") + e.what());
  }
  validate_state(model, out.state);
  return out;
}

std::string run_pf(const NetworkModel& model, const StateFile& sf) {
  LossOptions lopts;
  lopts.strict = true;
  const LossEvaluation ev = evaluate_loss(model, sf.state, sf.q_g, lopts);
  const PowerFlowSolution& pf = ev.flow;
  json j;
  j["timestamp"] = sf.state.timestamp;
  j["loss_pu"] = pf.loss;
  j["loss_kw"] = model.pu_to_kw(pf.loss);
  j["iterations"] = pf.iterations;
  j["converged"] = pf.converged;
  j["max_residual"] = pf.max_residual;
  j["violation"] = ev.violation;
  j["feasible"] = ev.feasible;
  j["q_g_kvar"] = inverter_kvar(model, sf.q_g);
  json buses = json::array();
  buses.push_back({{"bus", model.label(0)}, {"v", pf.v[0]}, {"v_mag", std::sqrt(pf.v[0])}});
  for (const Line& ln : model.lines()) {
    const std::size_t i = ln.bus - 1;
    buses.push_back({{"bus", model.label(ln.bus)},
                     {"parent", model.label(ln.parent)},
                     {"P", pf.P[i]},
                     {"Q", pf.Q[i]},
                     {"ell", pf.ell[i]},
                     {"v", pf.v[ln.bus]},
                     {"v_mag", std::sqrt(pf.v[ln.bus])}});
  }
  j["buses"] = buses;
  return j.dump(2);
}

std::string run_baseline(const NetworkModel& model, const TimeSeriesDataset& data, SplitSel sel,
                         const std::string& out_csv) {
  const auto idx = select(data, sel);
  std::string csv = "timestamp,index,status,loss_pu,max_cone_slack,exact,kkt_residual,iterations" + q_header(model) + "\n";
  std::size_t optimal = 0, infeasible = 0, failed = 0, exact = 0;
  double max_slack = 0.0, loss_sum = 0.0;
  std::vector<double> times;
  for (std::size_t i : idx) {
    const GridState& s = data.intervals[i];
    std::string row = std::to_string(s.timestamp) + "," + std::to_string(i) + ",";
    const auto t0 = Clock::now();
    try {
      const OpfSolution sol = solve_baseline(model, s);
      times.push_back(seconds_since(t0));
      const ExactnessReport rep = exactness_check(sol);
      ++optimal;
      exact += rep.exact;
      max_slack = std::max(max_slack, rep.max_abs_slack);
      loss_sum += sol.objective;
      row += "optimal," + format_double(sol.objective) + "," + format_double(rep.max_abs_slack) + "," +
             (rep.exact ? "1" : "0") + "," + format_double(sol.kkt_residual) + "," + std::to_string(sol.iterations) +
             q_fields(model, sol.q_g_star);
    } catch (const Error& e) {
      (e.code() == ErrorCode::Infeasible ? infeasible : failed) += 1;
      row += status_name(e.code()) + ",,,,," + q_fields(model, {});
    }
    csv += row + "\n";
  }
  if (!out_csv.empty()) spit(out_csv, csv);
  json j;
  j["intervals"] = idx.size();
  j["optimal"] = optimal;
  j["infeasible"] = infeasible;
  j["failed"] = failed;
  j["exact"] = exact;
  j["max_cone_slack"] = max_slack;
  j["mean_loss_pu"] = optimal ? loss_sum / static_cast<double>(optimal) : 0.0;
  j["median_solve_ms"] = 1e3 * quantile(times, 0.5);
  return j.dump(2);
}

std::string run_train(const TrainManifest& m) {
  const auto t0 = Clock::now();
  if (file_digest(m.feeder_path) != m.feeder_digest)
    fail(ErrorCode::InvalidArgument, "feeder file " + m.feeder_path + " changed since the manifest was written");
  if (file_digest(m.data_path) != m.data_digest)
    fail(ErrorCode::InvalidArgument, "data file " + m.data_path + " changed since the manifest was written");
  const NetworkModel model = load_network(m.feeder_path);
  const TimeSeriesDataset data = load_timeseries(m.data_path, model, m.config.power_factor, m.config.train_fraction);
  const TrainConfig& cfg = m.config.train;

  std::vector<GridState> states;
  for (std::size_t i : data.train) states.push_back(data.intervals[i]);
  std::vector<double> opt;
  if (m.config.record_baseline) {
    for (const GridState& s : states) {
      try {
        opt.push_back(solve_baseline(model, s).objective);
      } catch (const Error&) {
        opt.push_back(std::nan(""));
      }
    }
  }

  PolicyModel policy = PolicyModel::for_network(model, cfg.hidden, cfg.sigma_floor, derive_seed(cfg.seed, 0));
  const TrainResult res = train(std::move(policy), model, states, cfg, opt);
  res.model.save(m.model_out);
  spit(m.trace_out, format_trace_csv(res.trace));

  const auto& ra = res.trace.running_avg;
  std::size_t feasible = 0;
  for (bool f : res.trace.feasible) feasible += f;
  json j;
  j["model"] = m.model_out;
  j["trace"] = m.trace_out;
  j["steps"] = res.trace.raw.size();
  j["updates"] = res.updates;
  j["train_intervals"] = states.size();
  j["clipped_readings"] = data.clipped;
  j["first_running_avg"] = ra.empty() ? 0.0 : ra[std::min<std::size_t>(ra.size() - 1, cfg.trace_window - 1)];
  j["final_running_avg"] = ra.empty() ? 0.0 : ra.back();
  j["feasible_fraction"] = ra.empty() ? 0.0 : static_cast<double>(feasible) / static_cast<double>(ra.size());
  j["seconds"] = seconds_since(t0);
  return j.dump(2);
}

InferOptions parse_infer_options(const std::string& json_text) {
  InferOptions o;
  if (json_text.empty()) return o;
  const json j = parse_json(json_text, "options");
  if (!j.is_object()) fail(ErrorCode::Parse, "options must be a JSON object");
  reject_unknown(j, {"split", "deterministic", "seed", "penalty_coeff"}, "options");
  try {
    if (j.contains("split")) o.split = parse_split(j.at("split").get<std::string>());
    if (j.contains("deterministic"))
      o.mode = j.at("deterministic").get<bool>() ? InferMode::Deterministic : InferMode::Sample;
    take(j, "seed", o.seed);
    take(j, "penalty_coeff", o.penalty_coeff);
  } catch (const json::exception& e) {
    fail(ErrorCode::Parse, std::string("options: ") + e.what());
  }
  return o;
}

std::string run_infer(const PolicyModel& policy, const NetworkModel& model, const TimeSeriesDataset& data,
                      const InferOptions& opts, const std::string& out_csv) {
  check_compatible(policy, model);
  Rng rng(opts.seed);
  LossOptions lopts;
  lopts.penalty_coeff = opts.penalty_coeff;
  lopts.strict = true;
  std::string csv = "timestamp,index,loss_pu,penalized,violation,feasible" + q_header(model) + "\n";
  const auto idx = select(data, opts.split);
  double loss_sum = 0.0;
  std::size_t feasible = 0;
  for (std::size_t i : idx) {
    const GridState& s = data.intervals[i];
    const std::vector<double> q = infer(policy, s, opts.mode, &rng);
    const LossEvaluation ev = evaluate_loss(model, s, q, lopts);
    loss_sum += ev.objective;
    feasible += ev.feasible;
    csv += std::to_string(s.timestamp) + "," + std::to_string(i) + "," + format_double(ev.objective) + "," +
           format_double(ev.penalized) + "," + format_double(ev.violation) + "," + (ev.feasible ? "1" : "0") +
           q_fields(model, q) + "\n";
  }
  if (!out_csv.empty()) spit(out_csv, csv);
  json j;
  j["intervals"] = idx.size();
  j["mode"] = opts.mode == InferMode::Sample ? "sample" : "deterministic";
  j["mean_loss_pu"] = idx.empty() ? 0.0 : loss_sum / static_cast<double>(idx.size());
  j["feasible_fraction"] = idx.empty() ? 0.0 : static_cast<double>(feasible) / static_cast<double>(idx.size());
  return j.dump(2);
}

CompareResult compare(const PolicyModel& policy, const NetworkModel& model, const TimeSeriesDataset& data,
                      const InferOptions& opts) {
  check_compatible(policy, model);
  Rng rng(opts.seed);
  LossOptions lopts;
  lopts.penalty_coeff = opts.penalty_coeff;
  lopts.strict = true;
  CompareResult r;
  double learned_paired = 0.0, opt_sum = 0.0, learned_all = 0.0;
  std::size_t paired = 0, feasible = 0;
  for (std::size_t i : select(data, opts.split)) {
    const GridState& s = data.intervals[i];
    CompareRow row;
    row.timestamp = s.timestamp;
    row.index = i;
    const LossEvaluation ev = evaluate_loss(model, s, infer(policy, s, opts.mode, &rng), lopts);
    row.learned = ev.objective;
    row.learned_feasible = ev.feasible;
    try {
      row.optimal = solve_baseline(model, s).objective;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::Infeasible && e.code() != ErrorCode::MaxIterations && e.code() != ErrorCode::Numerical)
        throw;
    }
    learned_all += row.learned;
    feasible += row.learned_feasible;
    if (row.optimal) {
      learned_paired += row.learned;
      opt_sum += *row.optimal;
      ++paired;
    }
    r.rows.push_back(row);
  }
  if (!r.rows.empty()) {
    r.mean_learned = learned_all / static_cast<double>(r.rows.size());
    r.feasible_fraction = static_cast<double>(feasible) / static_cast<double>(r.rows.size());
  }
  if (paired) {
    r.mean_optimal = opt_sum / static_cast<double>(paired);
    r.relative_gap = (learned_paired - opt_sum) / opt_sum;
  }
  return r;
}

std::string run_compare(const PolicyModel& policy, const NetworkModel& model, const TimeSeriesDataset& data,
                        const InferOptions& opts, const std::string& out_csv) {
  const CompareResult r = compare(policy, model, data, opts);
  std::string csv = "t,learned_loss,optimal_loss,gap,learned_feasible\n";
  for (const CompareRow& row : r.rows) {
    csv += std::to_string(row.timestamp) + "," + format_double(row.learned) + ",";
    if (row.optimal) csv += format_double(*row.optimal) + "," + format_double(row.learned - *row.optimal);
    else csv += ",";
    csv += row.learned_feasible ? ",1\n" : ",0\n";
  }
  if (!out_csv.empty()) spit(out_csv, csv);
  json j;
  j["intervals"] = r.rows.size();
  j["mean_learned_loss"] = r.mean_learned;
  j["mean_optimal_loss"] = r.mean_optimal;
  j["relative_gap"] = r.relative_gap;
  j["feasible_fraction"] = r.feasible_fraction;
  return j.dump(2);
}

BenchResult bench(const PolicyModel& policy, const NetworkModel& model, const TimeSeriesDataset& data,
                  const InferOptions& opts) {
  check_compatible(policy, model);
  Rng rng(opts.seed);
  std::vector<double> t_infer, t_base;
  double sink = 0.0;
  for (std::size_t i : select(data, opts.split)) {
    const GridState& s = data.intervals[i];
    auto t0 = Clock::now();
    const std::vector<double> q = infer(policy, s, opts.mode, &rng);
    t_infer.push_back(seconds_since(t0));
    sink += q.empty() ? 0.0 : q[0];
    t0 = Clock::now();
    try {
      sink += solve_baseline(model, s).objective;
      t_base.push_back(seconds_since(t0));
    } catch (const Error&) {
    }
  }
  BenchResult r;
  r.intervals = t_infer.size();
  r.infer_median_s = quantile(t_infer, 0.5);
  r.infer_p95_s = quantile(t_infer, 0.95);
  r.baseline_median_s = quantile(t_base, 0.5);
  r.baseline_p95_s = quantile(t_base, 0.95);
  r.ratio = r.baseline_median_s > 0.0 ? r.infer_median_s / r.baseline_median_s : 0.0;
  if (!std::isfinite(sink)) r.ratio = std::nan("");
  return r;
}

std::string run_bench(const PolicyModel& policy, const NetworkModel& model, const TimeSeriesDataset& data,
                      const InferOptions& opts) {
  const BenchResult r = bench(policy, model, data, opts);
  json j;
  j["intervals"] = r.intervals;
  j["infer_median_ms"] = 1e3 * r.infer_median_s;
  j["infer_p95_ms"] = 1e3 * r.infer_p95_s;
  j["baseline_median_ms"] = 1e3 * r.baseline_median_s;
  j["baseline_p95_ms"] = 1e3 * r.baseline_p95_s;
  j["median_ratio"] = r.ratio;
  return j.dump(2);
}

}  // namespace voltcraft
