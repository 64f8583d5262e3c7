#include "lobwm/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include "lobwm/common.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace lobwm {

// ----------------------------------------------------------------- config

namespace {

void check_keys(const json& j, std::initializer_list<const char*> allowed,
                const std::string& where) {
  if (!j.is_object()) throw ConfigError("config section " + where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    (void)value;
    bool ok = false;
    for (const char* a : allowed)
      if (key == a) {
        ok = true;
        break;
      }
    if (!ok) throw ConfigError("unknown config key: " + where + key);
  }
}

void parse_train(const json& j, const std::string& where, nn::TrainConfig& t) {
  check_keys(j, {"epochs", "lr", "batch_size", "patience", "clip_norm", "optimizer"}, where);
  t.epochs = j.value("epochs", t.epochs);
  t.lr = j.value("lr", t.lr);
  t.batch_size = j.value("batch_size", t.batch_size);
  t.patience = j.value("patience", t.patience);
  t.clip_norm = j.value("clip_norm", t.clip_norm);
  t.optimizer = j.value("optimizer", t.optimizer);
}

json train_to_json(const nn::TrainConfig& t) {
  return {{"epochs", t.epochs},   {"lr", t.lr},
          {"batch_size", t.batch_size}, {"patience", t.patience},
          {"clip_norm", t.clip_norm},   {"optimizer", t.optimizer}};
}

}  // namespace

RunConfig RunConfig::from_json(const json& j) {
  RunConfig c;
  check_keys(j, {"seed", "po_max", "actions", "fees", "data", "ae", "transition", "reward",
                 "agent", "classifier", "eval"},
             "");
  c.seed = j.value("seed", c.seed);
  c.po_max = j.value("po_max", c.po_max);

  if (j.contains("actions")) {
    const auto& a = j.at("actions");
    check_keys(a, {"count", "step"}, "actions.");
    c.actions.count = a.value("count", c.actions.count);
    c.actions.step = a.value("step", c.actions.step);
  }
  if (j.contains("fees")) {
    check_keys(j.at("fees"), {"rate"}, "fees.");
    c.fee_rate = j.at("fees").value("rate", c.fee_rate);
  }
  if (j.contains("data")) {
    const auto& d = j.at("data");
    check_keys(d,
               {"window_ticks", "context_capacity", "levels", "train_days", "test_days",
                "ticks_per_day", "regime", "synth"},
               "data.");
    c.window_ticks = d.value("window_ticks", c.window_ticks);
    c.context_capacity = d.value("context_capacity", c.context_capacity);
    c.levels = d.value("levels", c.levels);
    c.train_days = d.value("train_days", c.train_days);
    c.test_days = d.value("test_days", c.test_days);
    c.ticks_per_day = d.value("ticks_per_day", c.ticks_per_day);
    c.regime = d.value("regime", c.regime);
    if (d.contains("synth")) {
      const auto& s = d.at("synth");
      check_keys(s,
                 {"base_price", "drift", "noise_sigma", "osc_amplitude", "osc_period", "ou_theta",
                  "ou_sigma", "spread", "level_gap", "depth_mean", "depth_log_step", "depth_min",
                  "depth_max", "trade_prob", "outlier_prob"},
                 "data.synth.");
      c.synth.base_price = s.value("base_price", c.synth.base_price);
      c.synth.drift = s.value("drift", c.synth.drift);
      c.synth.noise_sigma = s.value("noise_sigma", c.synth.noise_sigma);
      c.synth.osc_amplitude = s.value("osc_amplitude", c.synth.osc_amplitude);
      c.synth.osc_period = s.value("osc_period", c.synth.osc_period);
      c.synth.ou_theta = s.value("ou_theta", c.synth.ou_theta);
      c.synth.ou_sigma = s.value("ou_sigma", c.synth.ou_sigma);
      c.synth.spread = s.value("spread", c.synth.spread);
      c.synth.level_gap = s.value("level_gap", c.synth.level_gap);
      c.synth.depth_mean = s.value("depth_mean", c.synth.depth_mean);
      c.synth.depth_log_step = s.value("depth_log_step", c.synth.depth_log_step);
      c.synth.depth_min = s.value("depth_min", c.synth.depth_min);
      c.synth.depth_max = s.value("depth_max", c.synth.depth_max);
      c.synth.trade_prob = s.value("trade_prob", c.synth.trade_prob);
      c.synth.outlier_prob = s.value("outlier_prob", c.synth.outlier_prob);
    }
  }
  if (j.contains("ae")) {
    const auto& a = j.at("ae");
    check_keys(a, {"latent_dim", "kernel", "channels", "train"}, "ae.");
    c.latent_dim = a.value("latent_dim", c.latent_dim);
    c.ae_kernel = a.value("kernel", c.ae_kernel);
    if (a.contains("channels")) {
      const auto ch = a.at("channels").get<std::vector<std::size_t>>();
      if (ch.size() != 3) throw ConfigError("ae.channels must list exactly 3 values");
      c.ae_channels0 = ch[0];
      c.ae_channels1 = ch[1];
      c.ae_channels2 = ch[2];
    }
    if (a.contains("train")) parse_train(a.at("train"), "ae.train.", c.ae_train);
  }
  if (j.contains("transition")) {
    const auto& t = j.at("transition");
    check_keys(t, {"seq_len", "rnn_units", "components", "context_dim", "train"}, "transition.");
    c.seq_len = t.value("seq_len", c.seq_len);
    c.rnn_units = t.value("rnn_units", c.rnn_units);
    c.components = t.value("components", c.components);
    c.context_dim = t.value("context_dim", c.context_dim);
    if (t.contains("train")) parse_train(t.at("train"), "transition.train.", c.transition_train);
  }
  if (j.contains("reward")) {
    const auto& r = j.at("reward");
    check_keys(r, {"lstm_units", "dense_units", "squash_lo", "squash_hi", "train"}, "reward.");
    c.reward_lstm = r.value("lstm_units", c.reward_lstm);
    c.reward_dense = r.value("dense_units", c.reward_dense);
    c.squash_lo = r.value("squash_lo", c.squash_lo);
    c.squash_hi = r.value("squash_hi", c.squash_hi);
    if (r.contains("train")) parse_train(r.at("train"), "reward.train.", c.reward_train);
  }
  if (j.contains("agent")) {
    const auto& a = j.at("agent");
    check_keys(a,
               {"kind", "gamma", "horizon", "hidden", "iterations", "episodes_per_update", "lr",
                "temperature"},
               "agent.");
    c.agent_kind = agent_kind_from_string(a.value("kind", std::string(to_string(c.agent_kind))));
    c.gamma = a.value("gamma", c.gamma);
    c.horizon = a.value("horizon", c.horizon);
    c.agent_hidden = a.value("hidden", c.agent_hidden);
    c.agent_iterations = a.value("iterations", c.agent_iterations);
    c.episodes_per_update = a.value("episodes_per_update", c.episodes_per_update);
    c.agent_lr = a.value("lr", c.agent_lr);
    c.temperature = a.value("temperature", c.temperature);
  }
  if (j.contains("classifier")) {
    const auto& cl = j.at("classifier");
    check_keys(cl, {"dense_units", "train"}, "classifier.");
    c.classifier_dense = cl.value("dense_units", c.classifier_dense);
    if (cl.contains("train")) parse_train(cl.at("train"), "classifier.train.", c.classifier_train);
  }
  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    check_keys(e,
               {"max_states", "momentum_alpha", "regime_segment_ticks", "regime_slope_threshold",
                "aggressive_quantity", "conservative_quantity", "compare_days",
                "dream_replay_horizon", "val_fraction"},
               "eval.");
    c.eval_max_states = e.value("max_states", c.eval_max_states);
    c.momentum_alpha = e.value("momentum_alpha", c.momentum_alpha);
    c.regime_segment_ticks = e.value("regime_segment_ticks", c.regime_segment_ticks);
    c.regime_slope_threshold = e.value("regime_slope_threshold", c.regime_slope_threshold);
    c.aggressive_quantity = e.value("aggressive_quantity", c.aggressive_quantity);
    c.conservative_quantity = e.value("conservative_quantity", c.conservative_quantity);
    c.compare_days = e.value("compare_days", c.compare_days);
    c.dream_replay_horizon = e.value("dream_replay_horizon", c.dream_replay_horizon);
    c.val_fraction = e.value("val_fraction", c.val_fraction);
  }
  c.validate();
  return c;
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw IoError("malformed config " + path + ": " + e.what());
  }
  return from_json(j);
}

json RunConfig::to_json() const {
  json j;
  j["seed"] = seed;
  j["po_max"] = po_max;
  j["actions"] = {{"count", actions.count}, {"step", actions.step}};
  j["fees"] = {{"rate", fee_rate}};
  j["data"] = {{"window_ticks", window_ticks},
               {"context_capacity", context_capacity},
               {"levels", levels},
               {"train_days", train_days},
               {"test_days", test_days},
               {"ticks_per_day", ticks_per_day},
               {"regime", regime},
               {"synth",
                {{"base_price", synth.base_price},
                 {"drift", synth.drift},
                 {"noise_sigma", synth.noise_sigma},
                 {"osc_amplitude", synth.osc_amplitude},
                 {"osc_period", synth.osc_period},
                 {"ou_theta", synth.ou_theta},
                 {"ou_sigma", synth.ou_sigma},
                 {"spread", synth.spread},
                 {"level_gap", synth.level_gap},
                 {"depth_mean", synth.depth_mean},
                 {"depth_log_step", synth.depth_log_step},
                 {"depth_min", synth.depth_min},
                 {"depth_max", synth.depth_max},
                 {"trade_prob", synth.trade_prob},
                 {"outlier_prob", synth.outlier_prob}}}};
  j["ae"] = {{"latent_dim", latent_dim},
             {"kernel", ae_kernel},
             {"channels", {ae_channels0, ae_channels1, ae_channels2}},
             {"train", train_to_json(ae_train)}};
  j["transition"] = {{"seq_len", seq_len},
                     {"rnn_units", rnn_units},
                     {"components", components},
                     {"context_dim", context_dim},
                     {"train", train_to_json(transition_train)}};
  j["reward"] = {{"lstm_units", reward_lstm},
                 {"dense_units", reward_dense},
                 {"squash_lo", squash_lo},
                 {"squash_hi", squash_hi},
                 {"train", train_to_json(reward_train)}};
  j["agent"] = {{"kind", to_string(agent_kind)},
                {"gamma", gamma},
                {"horizon", horizon},
                {"hidden", agent_hidden},
                {"iterations", agent_iterations},
                {"episodes_per_update", episodes_per_update},
                {"lr", agent_lr},
                {"temperature", temperature}};
  j["classifier"] = {{"dense_units", classifier_dense}, {"train", train_to_json(classifier_train)}};
  j["eval"] = {{"max_states", eval_max_states},
               {"momentum_alpha", momentum_alpha},
               {"regime_segment_ticks", regime_segment_ticks},
               {"regime_slope_threshold", regime_slope_threshold},
               {"aggressive_quantity", aggressive_quantity},
               {"conservative_quantity", conservative_quantity},
               {"compare_days", compare_days},
               {"dream_replay_horizon", dream_replay_horizon},
               {"val_fraction", val_fraction}};
  return j;
}

void RunConfig::validate() const {
  actions.validate();
  synth.validate();
  if (po_max <= 0) throw ConfigError("po_max must be positive");
  if (!(fee_rate >= 0.0)) throw ConfigError("fees.rate must be non-negative");
  if (window_ticks == 0 || window_ticks % 8 != 0)
    throw ConfigError("data.window_ticks must be a positive multiple of 8");
  if (train_days == 0) throw ConfigError("data.train_days must be positive");
  if (ticks_per_day < 2 * window_ticks)
    throw ConfigError("data.ticks_per_day must cover at least two windows");
  if (regime != "ascending" && regime != "descending" && regime != "oscillating" &&
      regime != "mixed")
    throw ConfigError("data.regime must be ascending|descending|oscillating|mixed");
  if (!(gamma > 0.0) || gamma > 1.0) throw ConfigError("agent.gamma must be in (0,1]");
  if (!(temperature > 0.0)) throw ConfigError("agent.temperature must be positive");
  if (val_fraction < 0.0 || val_fraction >= 1.0)
    throw ConfigError("eval.val_fraction must be in [0,1)");
  if (!(momentum_alpha > 0.0)) throw ConfigError("eval.momentum_alpha must be positive");
}

std::uint64_t RunConfig::stage_seed(const std::string& stage) const {
  return fnv1a64(stage, seed ^ 0x9e3779b97f4a7c15ull);
}

AeConfig RunConfig::ae_config() const {
  AeConfig a;
  a.window = window_ticks;
  a.features = 4 * levels;
  a.latent_dim = latent_dim;
  a.channels0 = ae_channels0;
  a.channels1 = ae_channels1;
  a.channels2 = ae_channels2;
  a.kernel = ae_kernel;
  a.train = ae_train;
  a.train.seed = stage_seed("train-ae");
  return a;
}

TransitionConfig RunConfig::transition_config() const {
  TransitionConfig t;
  t.latent_dim = latent_dim;
  t.seq_len = seq_len;
  t.hidden = rnn_units;
  t.components = components;
  t.context_dim = context_dim;
  t.train = transition_train;
  t.train.seed = stage_seed("train-transition");
  return t;
}

RewardModelConfig RunConfig::reward_config() const {
  RewardModelConfig r;
  r.latent_dim = latent_dim;
  r.lstm_units = reward_lstm;
  r.dense_units = reward_dense;
  r.train = reward_train;
  r.train.seed = stage_seed("train-reward");
  return r;
}

ClassifierConfig RunConfig::classifier_config() const {
  ClassifierConfig cl;
  cl.window = window_ticks;
  cl.features = 4 * levels;
  cl.dense_units = classifier_dense;
  cl.alpha = momentum_alpha;
  cl.train = classifier_train;
  cl.train.seed = stage_seed("train-classifier");
  return cl;
}

AgentConfig RunConfig::agent_config() const {
  AgentConfig a;
  a.kind = agent_kind;
  a.hidden = agent_hidden;
  a.gamma = gamma;
  a.lr = agent_lr;
  a.iterations = agent_iterations;
  a.episodes_per_update = episodes_per_update;
  a.seed = stage_seed("train-agent");
  return a;
}

EvalConfig RunConfig::eval_config() const {
  EvalConfig e;
  e.window_ticks = window_ticks;
  e.context_capacity = context_capacity;
  e.po_max = po_max;
  e.fees.rate = fee_rate;
  e.actions = actions;
  e.max_states = eval_max_states;
  return e;
}

// ------------------------------------------------------------- pipeline

namespace {

std::string file_hash(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot hash missing file: " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string content = ss.str();
  return hash_hex(fnv1a64(content));
}

}  // namespace

Pipeline::Pipeline(RunConfig cfg, std::string out_dir) : cfg_(std::move(cfg)), out_(std::move(out_dir)) {
  cfg_.validate();
  fs::create_directories(out_);
  fs::create_directories(fs::path(out_) / "data");
  fs::create_directories(fs::path(out_) / "checkpoints");
  fs::create_directories(fs::path(out_) / "reports");
  fs::create_directories(fs::path(out_) / "encoded");
  load_manifest();
  std::ofstream cfg_out(fs::path(out_) / "config.resolved.json");
  cfg_out << cfg_.to_json().dump(1) << "\n";
}

std::string Pipeline::data_manifest_path() const {
  return (fs::path(out_) / "data" / "manifest.json").string();
}

std::string Pipeline::checkpoint_path(const std::string& name) const {
  return (fs::path(out_) / "checkpoints" / (name + ".json")).string();
}

std::string Pipeline::report_path(const std::string& name) const {
  return (fs::path(out_) / "reports" / name).string();
}

void Pipeline::load_manifest() {
  const fs::path p = fs::path(out_) / "manifest.json";
  manifest_ = json::object();
  manifest_["version"] = 1;
  manifest_["stages"] = json::object();
  if (fs::exists(p)) {
    std::ifstream in(p);
    try {
      in >> manifest_;
    } catch (const json::exception&) {
      manifest_ = {{"version", 1}, {"stages", json::object()}};
    }
  }
}

void Pipeline::save_manifest() const {
  std::ofstream out(fs::path(out_) / "manifest.json");
  out << manifest_.dump(1) << "\n";
}

void Pipeline::require_stage(const std::string& stage) const {
  if (!manifest_.at("stages").contains(stage))
    throw Error("missing dependency: stage '" + stage + "' has not been run in " + out_);
}

StageResult Pipeline::run_stage(const std::string& name, const json& config_subset,
                                const std::vector<std::string>& dep_stages,
                                const std::vector<std::string>& outputs,
                                const std::function<void()>& body) {
  for (const auto& dep : dep_stages) require_stage(dep);

  std::uint64_t h = fnv1a64(name);
  h = fnv1a64(config_subset.dump(), h);
  for (const auto& dep : dep_stages)
    h = fnv1a64(manifest_["stages"][dep]["hash"].get<std::string>(), h);
  const std::string hash = hash_hex(h);

  const auto& stages = manifest_.at("stages");
  if (stages.contains(name) && stages.at(name).value("hash", "") == hash) {
    bool all_exist = true;
    for (const auto& o : outputs)
      if (!fs::exists(fs::path(out_) / o)) all_exist = false;
    if (all_exist) {
      std::cout << "[" << name << "] up to date, skipped\n";
      return {name, true, hash};
    }
  }

  std::cout << "[" << name << "] running...\n";
  body();

  json outs = json::object();
  for (const auto& o : outputs) outs[o] = file_hash(fs::path(out_) / o);
  manifest_["stages"][name] = {{"hash", hash}, {"outputs", outs}};
  save_manifest();
  std::cout << "[" << name << "] done\n";
  return {name, false, hash};
}

StageResult Pipeline::gen_data() {
  json subset = cfg_.to_json()["data"];
  subset["seed"] = cfg_.seed;

  std::vector<std::string> outputs = {"data/manifest.json"};
  std::vector<std::pair<std::string, Split>> day_specs;
  for (std::size_t i = 0; i < cfg_.train_days; ++i)
    day_specs.push_back({"train" + std::to_string(i), Split::train});
  for (std::size_t i = 0; i < cfg_.test_days; ++i)
    day_specs.push_back({"test" + std::to_string(i), Split::test});
  for (const auto& [id, split] : day_specs) {
    (void)split;
    outputs.push_back("data/" + id + "_lob.csv");
    outputs.push_back("data/" + id + "_trades.csv");
  }

  return run_stage("gen-data", subset, {}, outputs, [&] {
    Dataset ds;
    std::size_t index = 0;
    for (const auto& [id, split] : day_specs) {
      const std::uint64_t day_seed = fnv1a64(id, cfg_.stage_seed("gen-data"));
      if (cfg_.regime == "mixed") {
        const std::size_t third = cfg_.ticks_per_day / 3;
        const Regime order[3] = {Regime::ascending, Regime::descending, Regime::oscillating};
        std::vector<std::pair<Regime, std::size_t>> segs;
        for (std::size_t s = 0; s < 3; ++s) {
          const std::size_t n = s == 2 ? cfg_.ticks_per_day - 2 * third : third;
          segs.push_back({order[(s + index) % 3], n});
        }
        ds.days.push_back(generate_mixed_day(day_seed, segs, cfg_.synth, id, split));
      } else {
        ds.days.push_back(generate_synthetic_day(day_seed, cfg_.ticks_per_day,
                                                 regime_from_string(cfg_.regime), cfg_.synth, id,
                                                 split));
      }
      ++index;
    }
    save_dataset(ds, (fs::path(out_) / "data").string());
  });
}

StageResult Pipeline::train_ae() {
  json subset = cfg_.to_json()["ae"];
  subset["window_ticks"] = cfg_.window_ticks;
  subset["levels"] = cfg_.levels;
  subset["val_fraction"] = cfg_.val_fraction;

  return run_stage("train-ae", subset, {"gen-data"}, {"checkpoints/ae.json"}, [&] {
    const Dataset ds = load_dataset(data_manifest_path(), Split::train);
    auto samples = build_window_samples(ds, Split::train, cfg_.window_ticks);
    auto [train_set, val_set] =
        nn::split_train_val(std::move(samples), cfg_.val_fraction, cfg_.stage_seed("ae-split"));
    Autoencoder ae(cfg_.ae_config());
    const auto fit = ae.train(train_set, val_set);
    std::cout << "[train-ae] epochs=" << fit.epochs_run << " best_val=" << fit.best_val << "\n";
    ae.save(checkpoint_path("ae"));
  });
}

StageResult Pipeline::encode() {
  json subset = {{"window_ticks", cfg_.window_ticks},
                 {"context_capacity", cfg_.context_capacity},
                 {"latent_dim", cfg_.latent_dim},
                 {"context_dim", cfg_.context_dim}};

  return run_stage("encode", subset, {"gen-data", "train-ae"}, {"encoded/latent_train.csv"}, [&] {
    const Dataset ds = load_dataset(data_manifest_path(), Split::train);
    Autoencoder ae = Autoencoder::load(checkpoint_path("ae"));
    const ContextEmbedding embedding =
        ContextEmbedding::make(cfg_.context_dim, cfg_.transition_config().embed_seed);

    std::vector<EncodedDay> encoded;
    for (const auto& day : ds.days) {
      EncodedDay ed;
      ed.day_id = day.id;
      const auto assembled = assemble_transitions(day, cfg_.window_ticks, cfg_.context_capacity);
      for (const auto& tr : assembled.transitions) {
        LatentTransition row;
        row.z_state = ae.encode(normalize_window(tr.state.window));
        row.z_next = ae.encode(normalize_window(tr.next_state.window));
        row.action_norm = normalize_action(
            static_cast<double>(tr.action.direction) * tr.action.quantity,
            cfg_.actions.max_quantity());
        row.context = embedding.embed(tr.state.context, tr.state.window.first_tick(),
                                      cfg_.window_ticks);
        row.delta_mid = tr.delta_mid;
        ed.rows.push_back(std::move(row));
      }
      encoded.push_back(std::move(ed));
    }
    write_latent_csv(encoded, cfg_.latent_dim, cfg_.context_dim,
                     (fs::path(out_) / "encoded" / "latent_train.csv").string());
  });
}

StageResult Pipeline::train_transition() {
  json subset = cfg_.to_json()["transition"];
  subset["val_fraction"] = cfg_.val_fraction;

  return run_stage("train-transition", subset, {"encode"}, {"checkpoints/transition.json"}, [&] {
    const auto encoded = read_latent_csv((fs::path(out_) / "encoded" / "latent_train.csv").string(),
                                         cfg_.latent_dim, cfg_.context_dim);
    const TransitionConfig tc = cfg_.transition_config();
    std::vector<nn::Sample> samples;
    for (const auto& day : encoded) {
      auto day_samples = build_transition_sequences(day.rows, tc);
      samples.insert(samples.end(), std::make_move_iterator(day_samples.begin()),
                     std::make_move_iterator(day_samples.end()));
    }
    if (samples.empty()) throw Error("train-transition: no sequences (too few trades per day?)");
    auto [train_set, val_set] = nn::split_train_val(std::move(samples), cfg_.val_fraction,
                                                    cfg_.stage_seed("transition-split"));
    TransitionModel model(tc);
    const auto fit = model.train(train_set, val_set);
    std::cout << "[train-transition] epochs=" << fit.epochs_run << " best_val=" << fit.best_val
              << "\n";
    model.save(checkpoint_path("transition"));
  });
}

StageResult Pipeline::train_reward() {
  json subset = cfg_.to_json()["reward"];
  subset["po_max"] = cfg_.po_max;
  subset["val_fraction"] = cfg_.val_fraction;

  return run_stage("train-reward", subset, {"encode"}, {"checkpoints/reward.json"}, [&] {
    const auto encoded = read_latent_csv((fs::path(out_) / "encoded" / "latent_train.csv").string(),
                                         cfg_.latent_dim, cfg_.context_dim);
    std::vector<LatentTransition> rows;
    for (const auto& day : encoded) rows.insert(rows.end(), day.rows.begin(), day.rows.end());
    if (rows.empty()) throw Error("train-reward: no latent rows");

    std::vector<double> deltas;
    deltas.reserve(rows.size());
    for (const auto& r : rows) deltas.push_back(r.delta_mid);
    const RewardBounds bounds = compute_reward_bounds(
        deltas, static_cast<double>(cfg_.po_max), cfg_.squash_lo, cfg_.squash_hi);

    auto samples = build_reward_samples(rows);
    auto [train_set, val_set] =
        nn::split_train_val(std::move(samples), cfg_.val_fraction, cfg_.stage_seed("reward-split"));
    RewardModel model(cfg_.reward_config());
    const auto fit = model.train(train_set, val_set);
    std::cout << "[train-reward] epochs=" << fit.epochs_run << " best_val=" << fit.best_val << "\n";
    model.save(checkpoint_path("reward"), bounds);
  });
}

StageResult Pipeline::train_agent_stage(std::optional<AgentKind> kind_override) {
  AgentConfig ac = cfg_.agent_config();
  if (kind_override) ac.kind = *kind_override;
  json subset = cfg_.to_json()["agent"];
  subset["kind"] = to_string(ac.kind);
  subset["po_max"] = cfg_.po_max;
  subset["actions"] = {{"count", cfg_.actions.count}, {"step", cfg_.actions.step}};

  return run_stage(
      "train-agent", subset, {"gen-data", "train-ae", "train-transition", "train-reward"},
      {"checkpoints/agent.json", "reports/agent_curve.csv"}, [&] {
        const Dataset ds = load_dataset(data_manifest_path(), Split::train);
        Autoencoder ae = Autoencoder::load(checkpoint_path("ae"));
        TransitionModel transition = TransitionModel::load(checkpoint_path("transition"));
        auto reward_loaded = load_reward_model(checkpoint_path("reward"));

        std::vector<DreamInitialState> rho0;
        for (const auto& day : ds.days) {
          const auto windows = windows_of_day(day, cfg_.window_ticks);
          if (windows.empty()) continue;
          DreamInitialState init;
          init.z = ae.encode(normalize_window(windows[0]));
          init.context = TradeContext::from_prints(
              trades_in_range(day, windows[0].first_tick(), windows[0].last_tick() + 1),
              cfg_.context_capacity);
          init.first_tick = windows[0].first_tick();
          rho0.push_back(std::move(init));
        }
        if (rho0.empty()) throw Error("train-agent: no initial states");

        DreamConfig dc;
        dc.horizon = cfg_.horizon;
        dc.temperature = cfg_.temperature;
        dc.po_max = cfg_.po_max;
        dc.actions = cfg_.actions;
        DreamEnv env(transition, reward_loaded.model, reward_loaded.bounds, std::move(rho0), dc,
                     cfg_.window_ticks);

        TrainedAgent agent = train_agent(ac, env);
        agent.save(checkpoint_path("agent"));
        std::ofstream curve(report_path("agent_curve.csv"));
        curve << "iteration,mean_dream_return\n";
        for (std::size_t i = 0; i < agent.curve.size(); ++i)
          curve << i << ',' << agent.curve[i] << "\n";
        std::cout << "[train-agent] kind=" << to_string(ac.kind)
                  << " final_return=" << (agent.curve.empty() ? 0.0 : agent.curve.back()) << "\n";
      });
}

StageResult Pipeline::train_classifier() {
  json subset = cfg_.to_json()["classifier"];
  subset["alpha"] = cfg_.momentum_alpha;
  subset["window_ticks"] = cfg_.window_ticks;
  subset["val_fraction"] = cfg_.val_fraction;

  return run_stage("train-classifier", subset, {"gen-data"},
                   {"checkpoints/classifier.json", "reports/classifier_report.json"}, [&] {
                     const Dataset ds = load_dataset(data_manifest_path(), Split::train);
                     auto samples = build_classifier_samples(ds, Split::train, cfg_.window_ticks,
                                                             cfg_.momentum_alpha);
                     if (samples.empty()) throw Error("train-classifier: no labeled windows");
                     auto [train_set, val_set] = nn::split_train_val(
                         std::move(samples), cfg_.val_fraction, cfg_.stage_seed("clf-split"));
                     MovementClassifier clf(cfg_.classifier_config());
                     clf.train(train_set, val_set);
                     const auto& eval_set = val_set.empty() ? train_set : val_set;
                     const ClassificationReport report = evaluate_classifier(clf, eval_set);
                     std::ofstream rep(report_path("classifier_report.json"));
                     rep << report.to_json().dump(1) << "\n";
                     clf.save(checkpoint_path("classifier"));
                     std::cout << "[train-classifier] accuracy=" << report.accuracy << "\n";
                   });
}

namespace {

std::vector<std::string> eval_output_names(const RunConfig& cfg) {
  std::vector<std::string> outs;
  const std::vector<std::string> policies = {
      std::string("rl_") + to_string(cfg.agent_kind),
      "momentum_q" + std::to_string(cfg.aggressive_quantity),
      "momentum_q" + std::to_string(cfg.conservative_quantity),
      "classifier_q" + std::to_string(cfg.conservative_quantity),
      "greedy"};
  for (std::size_t i = 0; i < cfg.test_days; ++i) {
    const std::string day = "test" + std::to_string(i);
    for (const auto& p : policies) {
      outs.push_back("reports/eval_" + p + "_" + day + ".json");
      outs.push_back("reports/eval_" + p + "_" + day + ".csv");
    }
    outs.push_back("reports/envelope_" + day + ".csv");
  }
  outs.push_back("reports/variance.json");
  outs.push_back("reports/transfer.json");
  return outs;
}

}  // namespace

StageResult Pipeline::evaluate() {
  json subset = cfg_.to_json()["eval"];
  subset["fees"] = cfg_.fee_rate;
  subset["po_max"] = cfg_.po_max;

  return run_stage(
      "evaluate", subset,
      {"gen-data", "train-ae", "train-transition", "train-reward", "train-agent",
       "train-classifier"},
      eval_output_names(cfg_), [&] {
        const Dataset ds = load_dataset(data_manifest_path(), Split::test);
        Autoencoder ae = Autoencoder::load(checkpoint_path("ae"));
        TransitionModel transition = TransitionModel::load(checkpoint_path("transition"));
        auto reward_loaded = load_reward_model(checkpoint_path("reward"));
        TrainedAgent agent = TrainedAgent::load(checkpoint_path("agent"));
        MovementClassifier clf = MovementClassifier::load(checkpoint_path("classifier"));

        const EvalConfig ec = cfg_.eval_config();
        std::vector<EvalReport> all_reports;

        for (const auto& day : ds.days) {
          RlPolicy rl(agent, std::string("rl_") + to_string(agent.kind));
          MomentumPolicy mom_aggr(cfg_.momentum_alpha, cfg_.aggressive_quantity, cfg_.actions);
          MomentumPolicy mom_cons(cfg_.momentum_alpha, cfg_.conservative_quantity, cfg_.actions);
          ClassifierPolicy clf_policy(clf, cfg_.conservative_quantity, cfg_.actions);
          GreedyConfig gc{cfg_.actions, cfg_.po_max, ec.fees};
          // greedy plans on the same state slice the evaluator replays
          DayStream day_slice = day;
          if (ec.max_states > 0 && day_slice.snapshots.size() > ec.max_states * cfg_.window_ticks)
            day_slice.snapshots.resize(ec.max_states * cfg_.window_ticks);
          GreedyPolicy greedy(day_slice, cfg_.window_ticks, gc);

          const std::vector<Policy*> policies = {&rl, &mom_aggr, &mom_cons, &clf_policy, &greedy};
          for (Policy* p : policies) {
            const EvalReport rep = replay_policy(*p, &ae, &transition.embedding(), day, ec);
            std::ofstream jout(report_path("eval_" + rep.policy_name + "_" + day.id + ".json"));
            jout << rep.to_json().dump(1) << "\n";
            rep.write_csv(report_path("eval_" + rep.policy_name + "_" + day.id + ".csv"));
            all_reports.push_back(rep);
          }

          // momentum envelope across the full quantity grid
          std::vector<long long> quantities;
          for (long long q = static_cast<long long>(cfg_.actions.step);
               q <= static_cast<long long>(cfg_.actions.max_quantity());
               q += static_cast<long long>(cfg_.actions.step))
            quantities.push_back(q);
          const StrategyEnvelope env = momentum_envelope(day, cfg_.window_ticks,
                                                         cfg_.momentum_alpha, quantities,
                                                         cfg_.po_max, ec.fees, ec.max_states);
          std::ofstream eout(report_path("envelope_" + day.id + ".csv"));
          eout << "step,lower,upper\n";
          for (std::size_t i = 0; i < env.lower.size(); ++i)
            eout << i << ',' << env.lower[i] << ',' << env.upper[i] << "\n";
        }

        const VarianceReport var = variance_report(all_reports);
        std::ofstream vout(report_path("variance.json"));
        vout << var.to_json().dump(1) << "\n";

        // dream-vs-replay transferability on matched test days
        std::vector<const DayStream*> compare_set;
        for (const auto& day : ds.days) {
          if (compare_set.size() >= cfg_.compare_days) break;
          compare_set.push_back(&day);
        }
        const DreamReplayComparison cmp = compare_dream_vs_replay(
            agent, transition, reward_loaded.model, reward_loaded.bounds, ae, compare_set, ec,
            cfg_.dream_replay_horizon, cfg_.temperature, cfg_.stage_seed("transfer"));
        std::ofstream tout(report_path("transfer.json"));
        tout << cmp.to_json().dump(1) << "\n";
        std::cout << "[evaluate] days=" << ds.days.size()
                  << " sign_agreement=" << cmp.sign_agreement << "\n";
      });
}

StageResult Pipeline::compare() {
  return run_stage("compare", json::object(), {"evaluate"},
                   {"reports/compare.json", "reports/compare.csv"}, [&] {
                     std::map<std::string, std::vector<double>> totals;
                     for (const auto& entry :
                          fs::directory_iterator(fs::path(out_) / "reports")) {
                       const std::string name = entry.path().filename().string();
                       if (name.rfind("eval_", 0) != 0 || entry.path().extension() != ".json")
                         continue;
                       std::ifstream in(entry.path());
                       json j;
                       in >> j;
                       const EvalReport rep = EvalReport::from_json(j);
                       totals[rep.policy_name].push_back(rep.total_net);
                     }
                     if (totals.size() < 2)
                       throw Error("compare: need at least two evaluated policies");

                     struct Row {
                       std::string policy;
                       double mean;
                       std::size_t days;
                     };
                     std::vector<Row> rows;
                     for (const auto& [policy, vals] : totals) {
                       double mean = 0.0;
                       for (double v : vals) mean += v;
                       mean /= static_cast<double>(vals.size());
                       rows.push_back({policy, mean, vals.size()});
                     }
                     std::sort(rows.begin(), rows.end(),
                               [](const Row& a, const Row& b) { return a.mean > b.mean; });

                     json j = json::array();
                     std::ofstream csv(report_path("compare.csv"));
                     csv << "rank,policy,mean_total_net,days\n";
                     for (std::size_t i = 0; i < rows.size(); ++i) {
                       j.push_back({{"rank", i + 1},
                                    {"policy", rows[i].policy},
                                    {"mean_total_net", rows[i].mean},
                                    {"days", rows[i].days}});
                       csv << (i + 1) << ',' << rows[i].policy << ',' << rows[i].mean << ','
                           << rows[i].days << "\n";
                     }
                     std::ofstream jout(report_path("compare.json"));
                     jout << j.dump(1) << "\n";
                   });
}

std::vector<StageResult> Pipeline::run_all() {
  std::vector<StageResult> results;
  results.push_back(gen_data());
  results.push_back(train_ae());
  results.push_back(encode());
  results.push_back(train_transition());
  results.push_back(train_reward());
  results.push_back(train_agent_stage());
  results.push_back(train_classifier());
  results.push_back(evaluate());
  results.push_back(compare());
  return results;
}

void Pipeline::run_benchmark(const std::string& strategy) {
  require_stage("gen-data");
  const Dataset ds = load_dataset(data_manifest_path(), Split::test);
  if (ds.days.empty()) throw Error("run-benchmark: no test days");
  EvalConfig ec = cfg_.eval_config();

  if (strategy == "momentum") {
    for (const auto& day : ds.days) {
      for (long long q : {cfg_.aggressive_quantity, cfg_.conservative_quantity}) {
        MomentumPolicy p(cfg_.momentum_alpha, q, cfg_.actions);
        const EvalReport rep = replay_policy(p, nullptr, nullptr, day, ec);
        std::ofstream jout(report_path("benchmark_" + rep.policy_name + "_" + day.id + ".json"));
        jout << rep.to_json().dump(1) << "\n";
        std::cout << "[run-benchmark] " << rep.policy_name << " " << day.id
                  << " total_net=" << rep.total_net << "\n";
      }
    }
  } else if (strategy == "classifier") {
    train_classifier();  // cached when fresh
    MovementClassifier clf = MovementClassifier::load(checkpoint_path("classifier"));
    for (const auto& day : ds.days) {
      ClassifierPolicy p(clf, cfg_.conservative_quantity, cfg_.actions);
      const EvalReport rep = replay_policy(p, nullptr, nullptr, day, ec);
      std::ofstream jout(report_path("benchmark_" + rep.policy_name + "_" + day.id + ".json"));
      jout << rep.to_json().dump(1) << "\n";
      std::cout << "[run-benchmark] " << rep.policy_name << " " << day.id
                << " total_net=" << rep.total_net << "\n";
    }
  } else if (strategy == "greedy") {
    for (const auto& day : ds.days) {
      GreedyConfig gc{cfg_.actions, cfg_.po_max, ec.fees};
      DayStream day_slice = day;
      if (ec.max_states > 0 && day_slice.snapshots.size() > ec.max_states * cfg_.window_ticks)
        day_slice.snapshots.resize(ec.max_states * cfg_.window_ticks);
      GreedyPolicy p(day_slice, cfg_.window_ticks, gc);
      const EvalReport rep = replay_policy(p, nullptr, nullptr, day, ec);
      std::ofstream jout(report_path("benchmark_greedy_" + day.id + ".json"));
      jout << rep.to_json().dump(1) << "\n";
      std::cout << "[run-benchmark] greedy " << day.id << " total_net=" << rep.total_net << "\n";
    }
  } else if (strategy == "bfs") {
    const DayStream& day = ds.days[0];
    const auto windows = windows_of_day(day, cfg_.window_ticks);
    const std::size_t states = std::min<std::size_t>(windows.size(), 7);  // <= 6 steps
    if (states < 2) throw Error("run-benchmark: day too short for bfs");
    std::vector<double> avgs(states);
    for (std::size_t i = 0; i < states; ++i) avgs[i] = avg_mid(windows[i]);
    const std::vector<long long> actions = {-1000, -500, 0, 500, 1000};
    const double bfs = bfs_optimal(avgs, actions, cfg_.po_max, ec.fees);
    GreedyConfig gc{cfg_.actions, cfg_.po_max, ec.fees};
    const GreedyPlan plan = greedy_optimal(avgs, gc);
    json j = {{"day", day.id},
              {"steps", states - 1},
              {"bfs_optimal", bfs},
              {"greedy_total", plan.total},
              {"gap", bfs - plan.total}};
    std::ofstream jout(report_path("bfs_check.json"));
    jout << j.dump(1) << "\n";
    std::cout << "[run-benchmark] bfs=" << bfs << " greedy=" << plan.total << "\n";
  } else {
    throw ConfigError("unknown strategy: " + strategy +
                      " (expected momentum|classifier|greedy|bfs)");
  }
}

// --------------------------------------------------- latent table on disk

void write_latent_csv(const std::vector<EncodedDay>& days, std::size_t latent_dim,
                      std::size_t context_dim, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "day";
  for (std::size_t i = 0; i < latent_dim; ++i) out << ",z" << i;
  out << ",action";
  for (std::size_t i = 0; i < context_dim; ++i) out << ",u" << i;
  for (std::size_t i = 0; i < latent_dim; ++i) out << ",zn" << i;
  out << ",delta_mid\n";

  char buf[32];
  const auto fmt = [&](double v) {
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc()) throw IoError("failed to format double");
    return std::string_view(buf, ptr - buf);
  };
  for (const auto& day : days) {
    for (const auto& r : day.rows) {
      out << day.day_id;
      for (double v : r.z_state) out << ',' << fmt(v);
      out << ',' << fmt(r.action_norm);
      for (double v : r.context) out << ',' << fmt(v);
      for (double v : r.z_next) out << ',' << fmt(v);
      out << ',' << fmt(r.delta_mid) << "\n";
    }
  }
  if (!out) throw IoError("failed writing: " + path);
}

std::vector<EncodedDay> read_latent_csv(const std::string& path, std::size_t latent_dim,
                                        std::size_t context_dim) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open file: " + path);
  std::vector<EncodedDay> days;
  std::string line;
  long line_no = 0;
  const std::size_t expected_fields = 1 + latent_dim + 1 + context_dim + latent_dim + 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line_no == 1) continue;  // header
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      if (comma == std::string::npos) {
        fields.push_back(line.substr(start));
        break;
      }
      fields.push_back(line.substr(start, comma - start));
      start = comma + 1;
    }
    if (fields.size() != expected_fields)
      throw IoError("unexpected field count in " + path, line_no);
    const auto num = [&](const std::string& s) {
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc() || ptr != s.data() + s.size())
        throw IoError("bad numeric field in " + path, line_no);
      return v;
    };
    LatentTransition row;
    std::size_t f = 1;
    for (std::size_t i = 0; i < latent_dim; ++i) row.z_state.push_back(num(fields[f++]));
    row.action_norm = num(fields[f++]);
    for (std::size_t i = 0; i < context_dim; ++i) row.context.push_back(num(fields[f++]));
    for (std::size_t i = 0; i < latent_dim; ++i) row.z_next.push_back(num(fields[f++]));
    row.delta_mid = num(fields[f++]);
    if (days.empty() || days.back().day_id != fields[0]) days.push_back({fields[0], {}});
    days.back().rows.push_back(std::move(row));
  }
  return days;
}

}  // namespace lobwm
