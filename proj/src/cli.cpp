#include "equiroute/cli.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "equiroute/baselines.hpp"
#include "equiroute/checkpoint.hpp"
#include "equiroute/oracle.hpp"
#include "equiroute/report.hpp"

namespace equiroute {

namespace fs = std::filesystem;

namespace {

const std::vector<std::string> kRouterKinds{"oracle", "equirouter", "equirouter-nojoint", "mse", "knn", "mlp"};

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

double parse_real(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  double v = 0.0;
  if (t == "inf" || t == "+inf") return std::numeric_limits<double>::infinity();
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc{} || ptr != t.data() + t.size() || t.empty()) {
    throw ValidationError("config key '" + key + "': expected a number, got '" + text + "'");
  }
  return v;
}

std::uint64_t parse_unsigned(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc{} || ptr != t.data() + t.size() || t.empty()) {
    throw ValidationError("config key '" + key + "': expected a nonnegative integer, got '" + text + "'");
  }
  return v;
}

std::vector<double> parse_real_list(const std::string& key, const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_real(key, item));
  if (out.empty()) throw ValidationError("config key '" + key + "': empty list");
  return out;
}

struct KeySpec {
  std::string key;
  std::string help;
  std::function<void(ExperimentConfig&, const std::string&, const std::string&)> apply;
};

template <class T>
auto size_setter(T ExperimentConfig::*group, std::size_t T::*field) {
  return [group, field](ExperimentConfig& c, const std::string& k, const std::string& v) {
    (c.*group).*field = static_cast<std::size_t>(parse_unsigned(k, v));
  };
}

template <class T>
auto real_setter(T ExperimentConfig::*group, double T::*field) {
  return [group, field](ExperimentConfig& c, const std::string& k, const std::string& v) {
    (c.*group).*field = parse_real(k, v);
  };
}

template <class T>
auto synth_setter(T SynthConfig::*field) {
  return [field](ExperimentConfig& c, const std::string& k, const std::string& v) {
    if constexpr (std::is_same_v<T, double>) {
      c.synth.*field = parse_real(k, v);
    } else {
      c.synth.*field = static_cast<T>(parse_unsigned(k, v));
    }
    c.synth_keys_given = true;
  };
}

void add_regressor_keys(std::vector<KeySpec>& keys, const std::string& prefix, RegressorHyper ExperimentConfig::*g,
                        const std::string& what) {
  keys.push_back({prefix + ".hidden", what + " hidden width", size_setter(g, &RegressorHyper::hidden)});
  keys.push_back({prefix + ".learning_rate", what + " Adam learning rate", real_setter(g, &RegressorHyper::learning_rate)});
  keys.push_back({prefix + ".weight_decay", what + " decoupled weight decay", real_setter(g, &RegressorHyper::weight_decay)});
  keys.push_back({prefix + ".epochs", what + " training epochs", size_setter(g, &RegressorHyper::epochs)});
  keys.push_back({prefix + ".batch_size", what + " minibatch size", size_setter(g, &RegressorHyper::batch_size)});
}

const std::vector<KeySpec>& key_specs() {
  static const std::vector<KeySpec> keys = [] {
    std::vector<KeySpec> k;
    using C = ExperimentConfig;
    k.push_back({"table", "routing-table directory (omit to use the synthetic generator)",
                 [](C& c, const std::string&, const std::string& v) { c.table = fs::path(trim(v)); }});
    k.push_back({"synth.n_queries", "synthetic query count", synth_setter(&SynthConfig::n_queries)});
    k.push_back({"synth.n_models", "synthetic model count", synth_setter(&SynthConfig::n_models)});
    k.push_back({"synth.embed_dim", "synthetic embedding dimension", synth_setter(&SynthConfig::embed_dim)});
    k.push_back({"synth.tie_fraction", "share of queries with a tied best model", synth_setter(&SynthConfig::tie_fraction)});
    k.push_back({"synth.margin_scale", "performance gap between adjacent levels", synth_setter(&SynthConfig::margin_scale)});
    k.push_back({"synth.cost_spread", "price ratio of the most to least expensive model", synth_setter(&SynthConfig::cost_spread)});
    k.push_back({"synth.noise_seed", "generator seed", synth_setter(&SynthConfig::noise_seed)});
    k.push_back({"split.ratio", "train:valid:test ratio",
                 [](C& c, const std::string&, const std::string& v) { c.split_ratio = parse_split_ratio(trim(v)); }});
    k.push_back({"split.seed", "split shuffle seed",
                 [](C& c, const std::string& key, const std::string& v) { c.split_seed = parse_unsigned(key, v); }});
    k.push_back({"router", "oracle | equirouter | equirouter-nojoint | mse | knn | mlp",
                 [](C& c, const std::string&, const std::string& v) { c.router = trim(v); }});
    k.push_back({"seed", "training seed",
                 [](C& c, const std::string& key, const std::string& v) { c.seed = parse_unsigned(key, v); }});
    k.push_back({"cost_source", "predicted | oracle",
                 [](C& c, const std::string&, const std::string& v) { c.cost_source = parse_cost_source(trim(v)); }});
    k.push_back({"grid_points", "budget grid size",
                 [](C& c, const std::string& key, const std::string& v) {
                   c.grid_points = static_cast<std::size_t>(parse_unsigned(key, v));
                 }});
    k.push_back({"out", "output directory", [](C& c, const std::string&, const std::string& v) { c.out = trim(v); }});
    k.push_back({"checkpoint", "router checkpoint for sweep (default <out>/router.ckpt)",
                 [](C& c, const std::string&, const std::string& v) { c.checkpoint = fs::path(trim(v)); }});
    k.push_back({"net.hidden", "network width D", size_setter(&C::network, &EquiRouterHyper::hidden)});
    k.push_back({"net.model_dim", "model embedding width", size_setter(&C::network, &EquiRouterHyper::model_dim)});
    k.push_back({"net.weight_decay", "decoupled weight decay", real_setter(&C::network, &EquiRouterHyper::weight_decay)});
    k.push_back({"net.learning_rate", "Adam learning rate", real_setter(&C::network, &EquiRouterHyper::learning_rate)});
    k.push_back({"net.epochs", "training epochs", size_setter(&C::network, &EquiRouterHyper::epochs)});
    k.push_back({"net.batch_size", "minibatch size", size_setter(&C::network, &EquiRouterHyper::batch_size)});
    add_regressor_keys(k, "mlp", &C::mlp, "mlp baseline");
    add_regressor_keys(k, "cost", &C::cost, "cost predictor");
    k.push_back({"knn.k", "neighbors for the knn baseline",
                 [](C& c, const std::string& key, const std::string& v) {
                   c.knn_k = static_cast<std::size_t>(parse_unsigned(key, v));
                 }});
    k.push_back({"threshold.min_nauc", "fail sweep when nauc is lower",
                 [](C& c, const std::string& key, const std::string& v) { c.thresholds.min_nauc = parse_real(key, v); }});
    k.push_back({"threshold.min_peak_score", "fail sweep when the peak score is lower",
                 [](C& c, const std::string& key, const std::string& v) {
                   c.thresholds.min_peak_score = parse_real(key, v);
                 }});
    k.push_back({"threshold.max_rci", "fail sweep when rci is higher",
                 [](C& c, const std::string& key, const std::string& v) { c.thresholds.max_rci = parse_real(key, v); }});
    k.push_back({"threshold.max_qnc_relative", "fail sweep when relative qnc is higher or not achieved",
                 [](C& c, const std::string& key, const std::string& v) {
                   c.thresholds.max_qnc_relative = parse_real(key, v);
                 }});
    k.push_back({"diagnose.sigmas", "comma-separated noise levels",
                 [](C& c, const std::string& key, const std::string& v) { c.noise_sigmas = parse_real_list(key, v); }});
    k.push_back({"diagnose.margin_thresholds", "comma-separated ascending margin thresholds",
                 [](C& c, const std::string& key, const std::string& v) {
                   c.margin_thresholds = parse_real_list(key, v);
                 }});
    k.push_back({"diagnose.budget", "budget for margin and noise diagnostics (inf for none)",
                 [](C& c, const std::string& key, const std::string& v) { c.diagnose_budget = parse_real(key, v); }});
    k.push_back({"diagnose.mc_sigma", "noise level for the selection-frequency simulation",
                 [](C& c, const std::string& key, const std::string& v) { c.mc_sigma = parse_real(key, v); }});
    k.push_back({"diagnose.mc_trials", "trials for the selection-frequency simulation",
                 [](C& c, const std::string& key, const std::string& v) {
                   c.mc_trials = static_cast<std::size_t>(parse_unsigned(key, v));
                 }});
    return k;
  }();
  return keys;
}

std::string checkpoint_tag(const std::string& router) {
  return router == "equirouter-nojoint" ? "equirouter_nojoint" : router;
}

fs::path router_checkpoint_path(const ExperimentConfig& cfg) {
  return cfg.checkpoint ? *cfg.checkpoint : cfg.out / "router.ckpt";
}

fs::path cost_checkpoint_path(const ExperimentConfig& cfg) {
  return router_checkpoint_path(cfg).parent_path() / "cost.ckpt";
}

// The oracle router filters on true costs; every other router follows the config.
CostSource effective_cost_source(const ExperimentConfig& cfg) {
  return cfg.router == "oracle" ? CostSource::oracle : cfg.cost_source;
}

void check_thresholds(const Thresholds& t, const MetricsSummary& m) {
  std::vector<std::string> failures;
  if (t.min_nauc && (!m.nauc || *m.nauc < *t.min_nauc)) failures.push_back("nauc below threshold");
  if (t.min_peak_score && m.peak_score < *t.min_peak_score) failures.push_back("peak_score below threshold");
  if (t.max_rci && m.rci > *t.max_rci) failures.push_back("rci above threshold");
  if (t.max_qnc_relative && (!m.qnc.relative || *m.qnc.relative > *t.max_qnc_relative)) {
    failures.push_back("qnc_relative above threshold or not achieved");
  }
  if (failures.empty()) return;
  std::string msg = "metric thresholds violated:";
  for (const auto& f : failures) msg += " " + f + ";";
  msg.pop_back();
  throw ThresholdFailure(msg);
}

}  // namespace

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  for (const auto& spec : key_specs()) {
    if (spec.key == key) {
      spec.apply(*this, key, value);
      return;
    }
  }
  throw ValidationError("unknown config key '" + key + "'");
}

void ExperimentConfig::validate() const {
  if (table && synth_keys_given) throw ValidationError("config sets both a table path and synth.* keys");
  if (table && !fs::is_directory(*table)) throw ValidationError("table directory not found: " + table->string());
  if (!table) synth.validate();
  if (!(split_ratio.train > 0 && split_ratio.valid > 0 && split_ratio.test > 0)) {
    throw ValidationError("split ratio parts must be positive");
  }
  if (std::find(kRouterKinds.begin(), kRouterKinds.end(), router) == kRouterKinds.end()) {
    throw ValidationError("unknown router '" + router + "'");
  }
  if (grid_points < 2) throw ValidationError("grid_points must be at least 2");
  if (network.hidden == 0 || network.model_dim == 0 || network.epochs == 0 || network.batch_size == 0) {
    throw ValidationError("net.* sizes must be positive");
  }
  if (!(network.learning_rate > 0) || !(network.weight_decay >= 0)) {
    throw ValidationError("net.learning_rate must be > 0 and net.weight_decay >= 0");
  }
  for (const RegressorHyper* h : {&mlp, &cost}) {
    if (h->hidden == 0 || h->epochs == 0 || h->batch_size == 0 || !(h->learning_rate > 0) || !(h->weight_decay >= 0)) {
      throw ValidationError("mlp.* and cost.* hyperparameters must be positive");
    }
  }
  if (knn_k == 0) throw ValidationError("knn.k must be positive");
  for (double s : noise_sigmas) {
    if (!(s >= 0) || !std::isfinite(s)) throw ValidationError("diagnose.sigmas must be finite and >= 0");
  }
  if (!std::is_sorted(margin_thresholds.begin(), margin_thresholds.end())) {
    throw ValidationError("diagnose.margin_thresholds must be ascending");
  }
  if (!(diagnose_budget > 0)) throw ValidationError("diagnose.budget must be > 0");
  if (!(mc_sigma >= 0) || mc_trials == 0) throw ValidationError("diagnose.mc_sigma must be >= 0 and mc_trials > 0");
  if (checkpoint && router == "oracle") throw ValidationError("the oracle router takes no checkpoint");
}

std::map<std::string, std::string> parse_config_text(const std::string& text) {
  std::map<std::string, std::string> out;
  std::stringstream ss(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ValidationError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(std::string_view(body).substr(0, eq));
    if (key.empty()) throw ValidationError("config line " + std::to_string(line_no) + ": empty key");
    out[key] = trim(std::string_view(body).substr(eq + 1));
  }
  return out;
}

ExperimentConfig load_config(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw ValidationError("cannot read config " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  ExperimentConfig cfg;
  for (const auto& [k, v] : parse_config_text(ss.str())) cfg.set(k, v);
  return cfg;
}

const std::vector<std::pair<std::string, std::string>>& config_keys() {
  static const auto keys = [] {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& s : key_specs()) out.emplace_back(s.key, s.help);
    return out;
  }();
  return keys;
}

RoutingTable config_table(const ExperimentConfig& cfg) {
  return cfg.table ? load_table(*cfg.table) : generate_synthetic(cfg.synth);
}

SplitIndices config_split(const ExperimentConfig& cfg, const RoutingTable& table) {
  if (cfg.table && fs::exists(*cfg.table / "split.json")) {
    return load_split(*cfg.table / "split.json", table.num_queries());
  }
  return make_split(table.num_queries(), cfg.split_ratio, cfg.split_seed);
}

TrainedRouter train_router(const ExperimentConfig& cfg, const RoutingTable& table, const SplitIndices& split) {
  TrainedRouter out;
  EquiRouterHyper h = cfg.network;
  h.seed = cfg.seed;
  h.query_dim = table.embed_dim();
  h.num_models = table.num_models();
  auto network = [&](EquiRouterFit fit, const char* tag) {
    out.log = std::move(fit.log);
    out.router = std::make_unique<EquiRouter>(std::move(fit.params), tag);
  };
  if (cfg.router == "oracle") {
    out.router = std::make_unique<OracleRouter>(table.num_models());
  } else if (cfg.router == "equirouter") {
    network(train_equirouter(table, split, h), "equirouter");
  } else if (cfg.router == "equirouter-nojoint") {
    network(train_no_joint_ablation(table, split, h), "equirouter_nojoint");
  } else if (cfg.router == "mse") {
    network(train_mse_ablation(table, split, h), "mse");
  } else if (cfg.router == "knn") {
    out.router = std::make_unique<KnnRouter>(train_knn(table, split, cfg.knn_k));
  } else if (cfg.router == "mlp") {
    RegressorHyper m = cfg.mlp;
    m.seed = cfg.seed;
    auto fit = train_mlp_router(table, split, m);
    out.log = std::move(fit.log);
    out.router = std::make_unique<MlpRouter>(std::move(fit.router));
  } else {
    throw ValidationError("unknown router '" + cfg.router + "'");
  }
  return out;
}

SynthSummary cmd_synth(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.table) throw ValidationError("synth writes a generated table; remove the table key");
  const RoutingTable table = generate_synthetic(cfg.synth);
  const SplitIndices split = make_split(table.num_queries(), cfg.split_ratio, cfg.split_seed);
  const double inf = std::numeric_limits<double>::infinity();
  const double zero[] = {0.0};
  const MarginStats margins = margin_stats(table, inf, zero);

  SynthSummary s;
  s.n_queries = table.num_queries();
  s.n_models = table.num_models();
  s.tie_rate = margins.tie_rate;
  const auto all = all_indices(table.num_queries());
  std::vector<double> mean_cost(table.num_models(), 0.0);
  for (std::size_t n : all) {
    for (std::size_t j = 0; j < mean_cost.size(); ++j) mean_cost[j] += table.cost(n, j);
  }
  s.cost_ratio = *std::max_element(mean_cost.begin(), mean_cost.end()) /
                 *std::min_element(mean_cost.begin(), mean_cost.end());

  save_table(table, cfg.out);
  save_split(split, cfg.out / "split.json");
  nlohmann::ordered_json j;
  j["n_queries"] = s.n_queries;
  j["n_models"] = s.n_models;
  j["embed_dim"] = table.embed_dim();
  j["tie_rate"] = s.tie_rate;
  j["cost_ratio"] = s.cost_ratio;
  write_text(cfg.out / "synth_summary.json", j.dump(2) + '\n');
  return s;
}

void cmd_train(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.router == "oracle") throw ValidationError("the oracle router needs no training");
  const RoutingTable table = config_table(cfg);
  const SplitIndices split = config_split(cfg, table);
  const auto trained = train_router(cfg, table, split);
  const Checkpoint ckpt = trained.router->to_checkpoint();
  std::optional<CostPredictorFit> cost;
  if (cfg.cost_source == CostSource::predicted) {
    RegressorHyper h = cfg.cost;
    h.seed = cfg.seed;
    cost = train_cost_predictor(table, split, h);
  }
  write_checkpoint(ckpt, router_checkpoint_path(cfg));
  write_text(router_checkpoint_path(cfg).parent_path() / "train_log.csv", train_log_csv(trained.log));
  if (cost) {
    write_checkpoint(cost->predictor.to_checkpoint(), cost_checkpoint_path(cfg));
    write_text(cost_checkpoint_path(cfg).parent_path() / "cost_log.csv", train_log_csv(cost->log));
  }
}

MetricsSummary cmd_sweep(const ExperimentConfig& cfg) {
  cfg.validate();
  const RoutingTable table = config_table(cfg);
  const SplitIndices split = config_split(cfg, table);
  std::unique_ptr<Router> router;
  if (cfg.router == "oracle") {
    router = std::make_unique<OracleRouter>(table.num_models());
  } else {
    const Checkpoint ckpt = read_checkpoint(router_checkpoint_path(cfg));
    if (ckpt.kind != checkpoint_tag(cfg.router)) {
      throw ValidationError("checkpoint holds a '" + ckpt.kind + "' router but router is '" + cfg.router + "'");
    }
    router = router_from_checkpoint(ckpt, table);
  }
  const CostSource source = effective_cost_source(cfg);
  std::optional<CostPredictor> predictor;
  if (source == CostSource::predicted) {
    predictor = CostPredictor::from_checkpoint(read_checkpoint(cost_checkpoint_path(cfg)));
  }
  const Evaluation ev =
      evaluate_router(*router, table, split.test, cfg.grid_points, source, predictor ? &*predictor : nullptr);
  write_text(cfg.out / "curve.csv", curve_csv(ev.curve));
  write_text(cfg.out / "metrics.json", metrics_json(ev.metrics));
  write_text(cfg.out / "rci_detail.csv", rci_detail_csv(ev.collapse));
  write_text(cfg.out / "callrates.csv", callrates_csv(ev.curve, most_expensive_model(table, split.test)));
  check_thresholds(cfg.thresholds, ev.metrics);
  return ev.metrics;
}

void cmd_diagnose(const ExperimentConfig& cfg) {
  cfg.validate();
  const RoutingTable table = config_table(cfg);
  const SplitIndices split = config_split(cfg, table);
  const auto all = all_indices(table.num_queries());

  const MarginStats margins = margin_stats(table, cfg.diagnose_budget, cfg.margin_thresholds);
  const auto noise = noise_sensitivity(table, split.test, cfg.noise_sigmas, cfg.diagnose_budget, cfg.seed);

  std::vector<double> means(table.num_models(), 0.0);
  for (std::size_t n : all) {
    for (std::size_t j = 0; j < means.size(); ++j) means[j] += table.perf(n, j) / static_cast<double>(all.size());
  }
  const auto freq = mc_selection_frequencies(means, cfg.mc_sigma, cfg.mc_trials, cfg.seed);

  RegressorHyper cost_hyper = cfg.cost;
  cost_hyper.seed = cfg.seed;
  const RouterTrainer trainer = [&cfg](const RoutingTable& t, const SplitIndices& s) {
    return train_router(cfg, t, s).router;
  };
  const Evaluation trainset = training_set_eval(trainer, table, cfg.grid_points, effective_cost_source(cfg), cost_hyper);

  write_text(cfg.out / "margins.csv", margins_csv(margins));
  write_text(cfg.out / "noise.csv", noise_csv(noise));
  write_text(cfg.out / "mc_frequencies.csv", frequencies_csv(freq));
  write_text(cfg.out / "trainset_metrics.json", metrics_json(trainset.metrics));
  write_text(cfg.out / "trainset_curve.csv", curve_csv(trainset.curve));
  write_text(cfg.out / "callrates.csv", callrates_csv(trainset.curve, most_expensive_model(table, all)));
}

MetricsSummary cmd_pipeline(const ExperimentConfig& cfg) {
  cfg.validate();
  ExperimentConfig run = cfg;
  if (!cfg.table) {
    ExperimentConfig synth = cfg;
    synth.out = cfg.out / "table";
    cmd_synth(synth);
    run.table = synth.out;
    run.synth_keys_given = false;
  }
  if (run.router != "oracle") cmd_train(run);
  return cmd_sweep(run);
}

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Budget-constrained model routing experiments"};
  app.require_subcommand(1);

  std::string config_file;
  std::vector<std::string> overrides;
  std::vector<std::pair<std::string, std::string>> flag_values;
  auto flag = [&](const std::string& name, const std::string& key, const std::string& help) {
    app.add_option_function<std::string>(
           name, [&flag_values, key](const std::string& v) { flag_values.emplace_back(key, v); }, help)
        ->trigger_on_parse();
  };
  app.add_option("--config", config_file, "flat key = value config file")->check(CLI::ExistingFile);
  flag("--table", "table", "routing-table directory");
  flag("--router", "router", "oracle|equirouter|equirouter-nojoint|mse|knn|mlp");
  flag("--cost-source", "cost_source", "predicted|oracle");
  flag("--grid-points", "grid_points", "budget grid size (default 100)");
  flag("--seed", "seed", "training and diagnostics seed");
  flag("--out", "out", "output directory");
  flag("--checkpoint", "checkpoint", "router checkpoint to sweep");
  app.add_option("--set", overrides, "extra key=value overrides");
  app.fallthrough();

  auto* synth = app.add_subcommand("synth", "generate a synthetic routing table");
  auto* train = app.add_subcommand("train", "train a router and the cost predictor");
  auto* sweep_cmd = app.add_subcommand("sweep", "sweep the budget grid on the test split");
  auto* diagnose = app.add_subcommand("diagnose", "margin, noise, training-set and call-rate diagnostics");
  auto* pipeline = app.add_subcommand("pipeline", "synth (when no table), train and sweep");
  auto* keys = app.add_subcommand("keys", "list config keys");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (keys->parsed()) {
      for (const auto& [k, h] : config_keys()) std::cout << k << "\t" << h << "\n";
      return kExitOk;
    }
    ExperimentConfig cfg = config_file.empty() ? ExperimentConfig{} : load_config(config_file);
    for (const auto& [k, v] : flag_values) cfg.set(k, v);
    for (const auto& o : overrides) {
      const auto eq = o.find('=');
      if (eq == std::string::npos) throw ValidationError("--set expects key=value, got '" + o + "'");
      cfg.set(trim(std::string_view(o).substr(0, eq)), o.substr(eq + 1));
    }

    if (synth->parsed()) {
      const auto s = cmd_synth(cfg);
      std::cout << "wrote " << s.n_queries << " queries x " << s.n_models << " models to " << cfg.out.string()
                << "; tie rate " << s.tie_rate << ", cost ratio " << s.cost_ratio << "\n";
    } else if (train->parsed()) {
      cmd_train(cfg);
      std::cout << "wrote " << router_checkpoint_path(cfg).string() << "\n";
    } else {
      MetricsSummary m;
      if (diagnose->parsed()) {
        cmd_diagnose(cfg);
        std::cout << "wrote diagnostics to " << cfg.out.string() << "\n";
        return kExitOk;
      }
      m = sweep_cmd->parsed() ? cmd_sweep(cfg) : cmd_pipeline(cfg);
      (void)pipeline;
      std::cout << metrics_json(m);
    }
    return kExitOk;
  } catch (const ThresholdFailure& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitThreshold;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace equiroute
