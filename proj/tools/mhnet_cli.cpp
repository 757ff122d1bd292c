// mhnet: dataset construction, synthetic corpora, training, evaluation,
// prediction, gradient checks and phrase explanations.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "mhnet/checkpoint.hpp"
#include "mhnet/config.hpp"
#include "mhnet/corpus.hpp"
#include "mhnet/dataset.hpp"
#include "mhnet/gradcheck.hpp"
#include "mhnet/metrics.hpp"
#include "mhnet/models.hpp"
#include "mhnet/synth.hpp"
#include "mhnet/train.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace mhnet;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct UsageError : Error {
  using Error::Error;
};

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
};

Config load_config(const Common& c) {
  Config cfg = c.config_path.empty() ? Config() : Config::load(c.config_path);
  if (c.seed) cfg.set("run.seed", std::to_string(*c.seed));
  return cfg;
}

std::uint64_t require_seed(const Config& cfg) {
  if (!cfg.has("run.seed")) throw UsageError("a seed is required: pass --seed or set [run] seed");
  return static_cast<std::uint64_t>(cfg.get_int("run.seed", 0));
}

void write_json(const std::string& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << j.dump(2) << '\n';
}

void ensure_dir(const std::string& dir) {
  if (dir.empty()) throw UsageError("--out is required");
  fs::create_directories(dir);
}

void add_common(CLI::App* app, Common& c, bool needs_out = true) {
  app->add_option("--config", c.config_path, "Configuration file ([section] key = value)")->check(CLI::ExistingFile);
  app->add_option("--seed", c.seed, "Global 64-bit seed");
  auto* o = app->add_option("--out", c.out, "Output directory");
  if (needs_out) o->required();
}

std::vector<UserRecord> load_users(const std::string& dir, const std::string& split) {
  const std::string labels = dir + "/" + split + ".labels.jsonl";
  std::vector<UserLabelRow> rows;
  if (fs::exists(labels)) rows = read_user_labels(labels);
  return assemble_users(read_posts(dir + "/" + split + ".posts.jsonl"), rows);
}

void tokenize_users(std::vector<UserRecord>& users, const Vocabulary& vocab) {
  for (auto& u : users)
    for (auto& p : u.posts) p.tokens = tokenize(p.text, vocab);
}

// ---- task parsing ----

struct Task {
  bool risk = false;
  RiskVariant variant = RiskVariant::cat_ce;
};

Task parse_task(const std::string& task, const std::string& variant) {
  Task t;
  if (task == "depression") {
    if (!variant.empty()) throw UsageError("--variant only applies to the risk task");
    return t;
  }
  std::string v = variant;
  if (task.rfind("risk:", 0) == 0) {
    v = task.substr(5);
  } else if (task != "risk") {
    throw UsageError("unknown task '" + task + "' (expected depression, risk or risk:<variant>)");
  }
  t.risk = true;
  try {
    t.variant = v.empty() ? RiskVariant::cat_ce : parse_risk_variant(v);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  return t;
}

std::string kind_of(const Task& t) {
  return t.risk ? "risk:" + std::string(to_string(t.variant)) : "depression";
}

// ---- model construction from config ----

DepressionModelConfig depression_model_config(const Config& cfg) {
  DepressionModelConfig m;
  m.embed_dim = static_cast<std::size_t>(cfg.get_int("depression.embed_dim", static_cast<long long>(m.embed_dim)));
  m.conv_window = static_cast<std::size_t>(cfg.get_int("depression.conv_window", static_cast<long long>(m.conv_window)));
  m.filters = static_cast<std::size_t>(cfg.get_int("depression.filters", static_cast<long long>(m.filters)));
  m.merge_window = static_cast<std::size_t>(cfg.get_int("depression.merge_window", static_cast<long long>(m.merge_window)));
  m.merge_stride = static_cast<std::size_t>(cfg.get_int("depression.merge_stride", static_cast<long long>(m.merge_stride)));
  m.merge_filters =
      static_cast<std::size_t>(cfg.get_int("depression.merge_filters", static_cast<long long>(m.merge_filters)));
  if (cfg.has("depression.dense")) {
    m.dense.clear();
    for (const auto& d : cfg.get_list("depression.dense", {})) m.dense.push_back(std::stoul(d));
  }
  m.dropout = cfg.get_double("depression.dropout", m.dropout);
  m.validate();
  return m;
}

SelectionConfig selection_config(const Config& cfg, std::uint64_t seed) {
  SelectionConfig s;
  s.strategy = parse_selection_strategy(cfg.get_string("selection.strategy", "random"));
  s.n_post = static_cast<std::size_t>(cfg.get_int("selection.n_post", 1500));
  s.n_term = static_cast<std::size_t>(cfg.get_int("selection.n_term", 100));
  s.seed = derive_seed(seed, "selection");
  s.validate();
  return s;
}

json selection_to_json(const SelectionConfig& s) {
  return {{"strategy", std::string(to_string(s.strategy))}, {"n_post", s.n_post}, {"n_term", s.n_term}, {"seed", s.seed}};
}

SelectionConfig selection_from_json(const json& j) {
  SelectionConfig s;
  s.strategy = parse_selection_strategy(j.at("strategy").get<std::string>());
  s.n_post = j.at("n_post").get<std::size_t>();
  s.n_term = j.at("n_term").get<std::size_t>();
  s.seed = j.at("seed").get<std::uint64_t>();
  return s;
}

json encoder_json(const Config& cfg, std::uint64_t seed) {
  const std::string kind = cfg.get_string("risk.encoder", "hashed");
  if (kind == "hashed") {
    return {{"kind", "hashed"},
            {"dim", cfg.get_int("risk.sentence_dim", 512)},
            {"seed", static_cast<std::uint64_t>(cfg.get_int("risk.encoder_seed", static_cast<long long>(seed)))}};
  }
  if (kind == "file") {
    const std::string path = cfg.get_string("risk.encoder_file", "");
    if (path.empty()) throw UsageError("risk.encoder = file needs risk.encoder_file");
    return {{"kind", "file"}, {"path", fs::absolute(path).string()}};
  }
  throw UsageError("unknown risk.encoder '" + kind + "' (expected hashed or file)");
}

std::unique_ptr<SentenceEncoder> make_encoder(const json& j) {
  if (j.at("kind") == "hashed")
    return std::make_unique<HashedEncoder>(j.at("dim").get<std::size_t>(), j.at("seed").get<std::uint64_t>());
  return std::make_unique<FileEncoder>(j.at("path").get<std::string>());
}

RiskModelConfig risk_model_config(const Config& cfg, RiskVariant v, std::size_t sentence_dim) {
  RiskModelConfig m = RiskModelConfig::for_variant(v, sentence_dim);
  m.filters = static_cast<std::size_t>(cfg.get_int("risk.filters", static_cast<long long>(m.filters)));
  if (cfg.has("risk.dense")) {
    m.dense.clear();
    for (const auto& d : cfg.get_list("risk.dense", {})) m.dense.push_back(std::stoul(d));
  }
  m.dropout = cfg.get_double("risk.dropout", m.dropout);
  m.margin = cfg.get_double("risk.margin", m.margin);
  m.max_sentences = static_cast<std::size_t>(cfg.get_int("risk.max_sentences", static_cast<long long>(m.max_sentences)));
  m.validate();
  return m;
}

TrainOptions train_options(const Config& cfg, std::uint64_t seed) {
  TrainOptions o;
  o.epochs = static_cast<std::size_t>(cfg.get_int("train.epochs", static_cast<long long>(o.epochs)));
  o.batch_size = static_cast<std::size_t>(cfg.get_int("train.batch_size", static_cast<long long>(o.batch_size)));
  o.adam.learning_rate = cfg.get_double("train.learning_rate", o.adam.learning_rate);
  o.seed = derive_seed(seed, "train");
  return o;
}

// ---- subcommands ----

struct BuildArgs {
  Common common;
  std::string corpus;
  std::string annotations;
};

int cmd_build_dataset(const BuildArgs& a) {
  const Config cfg = load_config(a.common);
  BuildConfig bc = BuildConfig::from_config(cfg);
  bc.seed = require_seed(cfg);
  std::optional<Annotations> ann;
  if (!a.annotations.empty()) ann = read_annotations(a.annotations);
  auto result = build_dataset(read_posts(a.corpus), ann, bc);
  ensure_dir(a.common.out);
  write_dataset(a.common.out, result);
  std::cout << result.report;
  return 0;
}

struct SynthArgs {
  Common common;
  std::string task = "both";
  SynthUsersSpec users;
  SynthThreadsSpec threads;
};

int cmd_synth(SynthArgs a) {
  const Config cfg = load_config(a.common);
  const std::uint64_t seed = require_seed(cfg);
  if (a.task != "both" && a.task != "depression" && a.task != "risk")
    throw UsageError("synth --task must be depression, risk or both");
  ensure_dir(a.common.out);
  a.users.seed = derive_seed(seed, "synth.users");
  a.threads.seed = derive_seed(seed, "synth.threads");
  json spec;
  if (a.task != "risk") {
    const std::string dir = a.task == "both" ? a.common.out + "/depression" : a.common.out;
    write_synth_users(dir, synth_users(a.users));
    spec["depression"] = {{"positives", a.users.positives},
                          {"controls_per_positive", a.users.controls_per_positive},
                          {"posts_per_user", a.users.posts_per_user},
                          {"vocab_size", a.users.vocab_size},
                          {"signal_rate", a.users.signal_rate},
                          {"train_fraction", a.users.train_fraction},
                          {"signal_phrases", a.users.signal_phrases}};
    std::cout << "depression corpus: " << a.users.positives << " positive users, "
              << a.users.positives * a.users.controls_per_positive << " controls -> " << dir << "\n";
  }
  if (a.task != "depression") {
    const std::string dir = a.task == "both" ? a.common.out + "/risk" : a.common.out;
    write_synth_threads(dir, synth_threads(a.threads));
    spec["risk"] = {{"train", a.threads.train},
                    {"test", a.threads.test},
                    {"planted", a.threads.planted},
                    {"adjacent_rate", a.threads.adjacent_rate},
                    {"label_mix", a.threads.label_mix}};
    std::cout << "risk corpus: " << a.threads.train << " train / " << a.threads.test << " test threads -> " << dir
              << "\n";
  }
  spec["seed"] = seed;
  write_json(a.common.out + "/synth.json", spec);
  return 0;
}

struct TrainArgs {
  Common common;
  std::string task = "depression";
  std::string variant;
  std::string data;
  std::optional<std::size_t> epochs, n_post, n_term;
  std::optional<std::string> strategy;
};

void print_epoch(const json& line) {
  std::printf("epoch %3zu  %-10s loss %.6f", line["epoch"].get<std::size_t>(),
              line["split"].get<std::string>().c_str(), line["loss"].get<double>());
  for (const auto& [k, v] : line["metrics"].items()) std::printf("  %s %.4f", k.c_str(), v.get<double>());
  std::printf("\n");
  std::fflush(stdout);
}

int cmd_train(const TrainArgs& a) {
  Config cfg = load_config(a.common);
  if (a.epochs) cfg.set("train.epochs", std::to_string(*a.epochs));
  if (a.n_post) cfg.set("selection.n_post", std::to_string(*a.n_post));
  if (a.n_term) cfg.set("selection.n_term", std::to_string(*a.n_term));
  if (a.strategy) cfg.set("selection.strategy", *a.strategy);
  const std::uint64_t seed = require_seed(cfg);
  const Task task = parse_task(a.task, a.variant);
  ensure_dir(a.common.out);

  TrainOptions opt = train_options(cfg, seed);
  std::ofstream log(a.common.out + "/train_log.jsonl", std::ios::binary);
  opt.on_log = [&](const json& line) {
    log << line.dump() << '\n';
    print_epoch(line);
  };
  Checkpoint ckpt;
  ckpt.kind = kind_of(task);
  ckpt.rng_seed = seed;
  TrainResult result;

  if (!task.risk) {
    auto train_users = load_users(a.data, "train");
    auto val_users = fs::exists(a.data + "/validation.posts.jsonl") ? load_users(a.data, "validation")
                                                                     : std::vector<UserRecord>{};
    std::vector<std::vector<std::string>> docs;
    for (const auto& u : train_users)
      for (const auto& p : u.posts) docs.push_back(words(p.text));
    const Vocabulary vocab =
        Vocabulary::build(docs, static_cast<std::size_t>(cfg.get_int("train.min_frequency", 5)));
    tokenize_users(train_users, vocab);
    tokenize_users(val_users, vocab);
    const SelectionConfig sel = selection_config(cfg, seed);
    const auto train = make_depression_examples(train_users, sel);
    const auto val = make_depression_examples(val_users, sel);
    opt.balance.mode = parse_balance_mode(cfg.get_string("train.balance", "sampled"));
    Rng init(derive_seed(seed, "init"));
    DepressionModel model(depression_model_config(cfg), vocab.size(), init);
    if (cfg.get_bool("depression.freeze_embeddings", false)) model.params().freeze("embed");
    result = train_depression(model, train, val, opt);
    ckpt.config = {{"model", to_json(model.config())},
                   {"selection", selection_to_json(sel)},
                   {"vocab", vocab.tokens()}};
    ckpt.params = model.params();
  } else {
    const json enc_json = encoder_json(cfg, derive_seed(seed, "encoder"));
    const auto encoder = make_encoder(enc_json);
    const RiskModelConfig mcfg = risk_model_config(cfg, task.variant, encoder->dim());
    auto threads = read_threads(a.data + "/train.threads.jsonl");
    std::vector<ThreadInstance> val_threads;
    if (fs::exists(a.data + "/validation.threads.jsonl")) {
      val_threads = read_threads(a.data + "/validation.threads.jsonl");
    } else {
      std::vector<int> labels;
      for (const auto& t : threads) labels.push_back(ordinal(t.label));
      auto [kept, held] = stratified_split(labels, cfg.get_double("train.validation_fraction", 0.15), seed);
      std::vector<ThreadInstance> k;
      for (auto i : kept) k.push_back(threads[i]);
      for (auto i : held) val_threads.push_back(threads[i]);
      threads = std::move(k);
    }
    const auto train = make_risk_examples(threads, *encoder, mcfg.max_sentences);
    const auto val = make_risk_examples(val_threads, *encoder, mcfg.max_sentences);
    opt.balance = cfg.has("train.balance") ? BalanceConfig{parse_balance_mode(cfg.get_string("train.balance", ""))}
                                           : default_balance(task.variant);
    Rng init(derive_seed(seed, "init"));
    RiskModel model(mcfg, init);
    result = train_risk(model, train, val, opt);
    ckpt.config = {{"model", to_json(model.config())}, {"encoder", enc_json}};
    ckpt.params = model.params();
  }
  ckpt.params.quantize_to_float();
  ckpt.step = result.steps;
  save_checkpoint(a.common.out + "/checkpoint.json", ckpt);
  write_json(a.common.out + "/train_summary.json", {{"kind", ckpt.kind},
                                                    {"epochs", opt.epochs},
                                                    {"best_epoch", result.best_epoch},
                                                    {"best_validation_score", result.best_score},
                                                    {"steps", result.steps},
                                                    {"balance", std::string(to_string(opt.balance.mode))}});
  std::printf("best epoch %zu (validation score %.4f); checkpoint %s/checkpoint.json\n", result.best_epoch,
              result.best_score, a.common.out.c_str());
  return 0;
}

// Loaded model with everything needed to read raw inputs.
struct Loaded {
  Checkpoint ckpt;
  std::optional<DepressionModel> depression;
  std::optional<Vocabulary> vocab;
  SelectionConfig selection;
  std::optional<RiskModel> risk;
  std::unique_ptr<SentenceEncoder> encoder;
};

Loaded load_model(const std::string& path) {
  Loaded l;
  l.ckpt = load_checkpoint(path);
  if (l.ckpt.kind == "depression") {
    l.depression.emplace(depression_config_from_json(l.ckpt.config.at("model")), l.ckpt.params);
    l.vocab = Vocabulary::from_tokens(l.ckpt.config.at("vocab").get<std::vector<std::string>>());
    l.selection = selection_from_json(l.ckpt.config.at("selection"));
  } else if (l.ckpt.kind.rfind("risk:", 0) == 0) {
    l.risk.emplace(risk_config_from_json(l.ckpt.config.at("model")), l.ckpt.params);
    l.encoder = make_encoder(l.ckpt.config.at("encoder"));
  } else {
    throw Error("checkpoint " + path + ": unknown model kind '" + l.ckpt.kind + "'");
  }
  return l;
}

std::vector<DepressionExample> depression_inputs(const Loaded& l, std::vector<UserRecord> users) {
  tokenize_users(users, *l.vocab);
  return make_depression_examples(users, l.selection);
}

struct EvalArgs {
  Common common;
  std::string checkpoint;
  std::string data;
  std::string split = "test";
  std::string predictions;
};

const std::vector<std::string> kRiskNames = {"green", "amber", "red", "crisis"};

int report_risk(const std::vector<RiskLabel>& gold, const std::vector<RiskLabel>& pred, const std::string& name,
                const std::string& out) {
  const auto rep = clpsych_metrics(gold, pred);
  json j = report_to_json(rep, kRiskNames);
  j["mean_ordinal_error"] = mean_ordinal_error(gold, pred);
  write_json(out + "/report.json", j);
  std::cout << format_risk_table({{name, rep}});
  return 0;
}

int report_binary(const std::vector<int>& gold, const std::vector<int>& pred, const std::string& name,
                  const std::string& out) {
  const auto rep = confusion_report(gold, pred, 2);
  const auto pos = binary_metrics(gold, pred, 1);
  json j = report_to_json(rep, {"control", "diagnosed"});
  j["positive"] = {{"precision", to_double(pos.precision)}, {"recall", to_double(pos.recall)}, {"f1", to_double(pos.f1)}};
  write_json(out + "/report.json", j);
  std::cout << format_binary_table({{name, pos}});
  return 0;
}

int cmd_evaluate(const EvalArgs& a) {
  ensure_dir(a.common.out);
  if (!a.predictions.empty()) {
    if (!a.checkpoint.empty()) throw UsageError("give either --checkpoint or --predictions, not both");
    // Rows {"gold": label, "pred": label}; risk names or 0/1 user labels.
    std::ifstream in(a.predictions);
    if (!in) throw Error("cannot open " + a.predictions);
    std::vector<RiskLabel> rg, rp;
    std::vector<int> bg, bp;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        const auto j = json::parse(line);
        if (j.at("gold").is_string()) {
          rg.push_back(parse_risk_label(j["gold"].get<std::string>()));
          rp.push_back(parse_risk_label(j.at("pred").get<std::string>()));
        } else {
          bg.push_back(j["gold"].get<int>());
          bp.push_back(j.at("pred").get<int>());
        }
      } catch (const std::exception& e) {
        throw Error(a.predictions + ":" + std::to_string(lineno) + ": " + e.what());
      }
    }
    if (!rg.empty() && !bg.empty()) throw Error(a.predictions + ": mixes risk labels and binary labels");
    if (!bg.empty()) return report_binary(bg, bp, "predictions", a.common.out);
    return report_risk(rg, rp, "predictions", a.common.out);
  }
  if (a.checkpoint.empty()) throw UsageError("--checkpoint or --predictions is required");
  if (a.data.empty()) throw UsageError("--data is required with --checkpoint");
  const Loaded l = load_model(a.checkpoint);
  if (l.depression) {
    const auto data = depression_inputs(l, load_users(a.data, a.split));
    const auto probs = predict_depression(*l.depression, data);
    std::vector<int> gold, pred;
    for (std::size_t i = 0; i < data.size(); ++i) {
      gold.push_back(data[i].label);
      pred.push_back(probs[i][1] > probs[i][0] ? 1 : 0);
    }
    return report_binary(gold, pred, l.ckpt.kind, a.common.out);
  }
  const auto threads = read_threads(a.data + "/" + a.split + ".threads.jsonl");
  const auto data = make_risk_examples(threads, *l.encoder, l.risk->config().max_sentences);
  const auto pred = classify_risk(*l.risk, data);
  std::vector<RiskLabel> gold;
  for (const auto& ex : data) gold.push_back(ex.label);
  return report_risk(gold, pred, l.ckpt.kind, a.common.out);
}

struct PredictArgs {
  Common common;
  std::string checkpoint;
  std::string input;
};

int cmd_predict(const PredictArgs& a) {
  ensure_dir(a.common.out);
  const Loaded l = load_model(a.checkpoint);
  std::ofstream out(a.common.out + "/predictions.jsonl", std::ios::binary);
  if (!out) throw Error("cannot write " + a.common.out + "/predictions.jsonl");
  std::size_t n = 0;
  if (l.depression) {
    const auto data = depression_inputs(l, assemble_users(read_posts(a.input), {}));
    const auto probs = predict_depression(*l.depression, data);
    for (std::size_t i = 0; i < data.size(); ++i) {
      const bool diagnosed = probs[i][1] > probs[i][0];
      out << json{{"user_id", data[i].user_id},
                  {"label", diagnosed ? "diagnosed" : "control"},
                  {"score", probs[i][1]}}.dump()
          << '\n';
    }
    n = data.size();
  } else {
    const auto threads = read_threads(a.input, false);
    const auto data = make_risk_examples(threads, *l.encoder, l.risk->config().max_sentences);
    const auto outs = predict_risk(*l.risk, data);
    const auto labels = classify_risk(*l.risk, data);
    for (std::size_t i = 0; i < data.size(); ++i) {
      out << json{{"post_id", data[i].post_id}, {"label", std::string(to_string(labels[i]))}, {"score", outs[i]}}.dump()
          << '\n';
    }
    n = data.size();
  }
  std::printf("%zu predictions -> %s/predictions.jsonl\n", n, a.common.out.c_str());
  return 0;
}

struct GradArgs {
  Common common;
  std::string task = "all";
  std::size_t configs = 8;
};

int cmd_gradcheck(const GradArgs& a) {
  const Config cfg = load_config(a.common);
  GradCheckOptions opt;
  opt.seed = cfg.has("run.seed") ? static_cast<std::uint64_t>(cfg.get_int("run.seed", 1)) : 1;
  opt.configs_per_check = a.configs;
  if (a.task != "all" && a.task != "depression" && a.task != "risk")
    throw UsageError("gradcheck --task must be all, depression or risk");
  auto rows = run_gradient_suite(opt);
  if (a.task != "all") {
    const std::string skip = a.task == "risk" ? "depression_model" : "risk_model";
    std::erase_if(rows, [&](const GradCheckRow& r) { return r.name.rfind(skip, 0) == 0; });
    if (a.task == "depression")
      std::erase_if(rows, [](const GradCheckRow& r) { return r.name.rfind("class_metric", 0) == 0; });
  }
  constexpr double kThreshold = 1e-4;
  std::cout << format_gradcheck_table(rows, kThreshold);
  bool ok = true;
  json j = json::array();
  for (const auto& r : rows) {
    ok = ok && r.max_relative_error < kThreshold;
    j.push_back({{"name", r.name},
                 {"configurations", r.configurations},
                 {"coordinates", r.coordinates},
                 {"max_relative_error", r.max_relative_error},
                 {"pass", r.max_relative_error < kThreshold}});
  }
  if (!a.common.out.empty()) {
    ensure_dir(a.common.out);
    write_json(a.common.out + "/gradcheck.json", {{"seed", opt.seed}, {"threshold", kThreshold}, {"rows", j}});
  }
  return ok ? 0 : kExitRuntime;
}

struct ExplainArgs {
  Common common;
  std::string checkpoint;
  std::string data;
  std::string split = "validation";
  std::size_t top = 10;
};

int cmd_explain(const ExplainArgs& a) {
  ensure_dir(a.common.out);
  const Loaded l = load_model(a.checkpoint);
  if (!l.depression) throw Error("explain needs a depression checkpoint, got " + l.ckpt.kind);
  auto users = load_users(a.data, a.split);
  tokenize_users(users, *l.vocab);
  std::vector<PhraseInput> inputs;
  for (const auto& u : users) {
    if (u.label != UserLabel::diagnosed) continue;
    PhraseInput in;
    in.user_id = u.user_id;
    for (const auto& p : u.posts) {
      in.post_ids.push_back(p.post_id);
      in.posts.emplace_back(p.tokens.begin(),
                            p.tokens.begin() + static_cast<std::ptrdiff_t>(std::min(p.tokens.size(), l.selection.n_term)));
    }
    if (!in.posts.empty()) inputs.push_back(std::move(in));
  }
  const auto phrases = top_phrases(*l.depression, *l.vocab, inputs, a.top);
  json j = json::array();
  std::printf("%-5s %-12s %-16s %10s  %s\n", "rank", "user", "post", "score", "phrase");
  for (std::size_t i = 0; i < phrases.size(); ++i) {
    const auto& p = phrases[i];
    std::string text;
    for (const auto& w : p.words) text += (text.empty() ? "" : " ") + w;
    std::printf("%-5zu %-12s %-16s %10.4f  %s\n", i + 1, p.user_id.c_str(), p.post_id.c_str(), p.score, text.c_str());
    j.push_back({{"user_id", p.user_id}, {"post_id", p.post_id}, {"position", p.position}, {"phrase", text}, {"score", p.score}});
  }
  write_json(a.common.out + "/phrases.json", j);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mhnet: depression detection and self-harm risk assessment models"};
  app.require_subcommand(1);

  BuildArgs build;
  auto* c_build = app.add_subcommand("build-dataset", "Match diagnosed users to controls and split the corpus");
  add_common(c_build, build.common);
  c_build->add_option("--corpus", build.corpus, "Posts, one JSON object per line")->required()->check(CLI::ExistingFile);
  c_build->add_option("--annotations", build.annotations, "Diagnosis-claim votes")->check(CLI::ExistingFile);

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "Generate synthetic corpora");
  add_common(c_synth, synth.common);
  c_synth->add_option("--task", synth.task, "depression, risk or both");
  c_synth->add_option("--positives", synth.users.positives);
  c_synth->add_option("--controls-per-positive", synth.users.controls_per_positive);
  c_synth->add_option("--posts-per-user", synth.users.posts_per_user);
  c_synth->add_option("--vocab-size", synth.users.vocab_size);
  c_synth->add_option("--zipf-exponent", synth.users.zipf_exponent)->check(CLI::NonNegativeNumber);
  c_synth->add_option("--signal-phrase", synth.users.signal_phrases, "Replaces the default phrase list");
  c_synth->add_option("--train-fraction", synth.users.train_fraction, "Share of positive users in the training split");
  c_synth->add_option("--min-post-tokens", synth.users.min_post_tokens);
  c_synth->add_option("--max-post-tokens", synth.users.max_post_tokens);
  c_synth->add_option("--signal-rate", synth.users.signal_rate)->check(CLI::Range(0.0, 1.0));
  c_synth->add_option("--train-threads", synth.threads.train);
  c_synth->add_option("--test-threads", synth.threads.test);
  c_synth->add_option("--adjacent-rate", synth.threads.adjacent_rate)->check(CLI::Range(0.0, 1.0));

  TrainArgs train;
  auto* c_train = app.add_subcommand("train", "Train a model and write a checkpoint");
  add_common(c_train, train.common);
  c_train->add_option("--task", train.task, "depression, risk or risk:<variant>");
  c_train->add_option("--variant", train.variant, "cat_ce, mse, class_metric or class_metric_ordinal");
  c_train->add_option("--data", train.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  c_train->add_option("--epochs", train.epochs);
  c_train->add_option("--n-post", train.n_post)->check(CLI::PositiveNumber);
  c_train->add_option("--n-term", train.n_term)->check(CLI::PositiveNumber);
  c_train->add_option("--strategy", train.strategy)->check(CLI::IsMember({"earliest", "latest", "random"}));

  EvalArgs eval;
  auto* c_eval = app.add_subcommand("evaluate", "Score a checkpoint on a split, or score a predictions file");
  add_common(c_eval, eval.common);
  c_eval->add_option("--checkpoint", eval.checkpoint)->check(CLI::ExistingFile);
  c_eval->add_option("--data", eval.data)->check(CLI::ExistingDirectory);
  c_eval->add_option("--split", eval.split)->check(CLI::IsMember({"train", "validation", "test"}));
  c_eval->add_option("--predictions", eval.predictions, "JSON lines {gold, pred}")->check(CLI::ExistingFile);

  PredictArgs pred;
  auto* c_pred = app.add_subcommand("predict", "Label every user or thread in an input file");
  add_common(c_pred, pred.common);
  c_pred->add_option("--checkpoint", pred.checkpoint)->required()->check(CLI::ExistingFile);
  c_pred->add_option("--input", pred.input, "Posts (depression) or threads (risk)")->required()->check(CLI::ExistingFile);

  GradArgs grad;
  auto* c_grad = app.add_subcommand("gradcheck", "Compare analytic and finite-difference gradients");
  add_common(c_grad, grad.common, false);
  c_grad->add_option("--task", grad.task, "all, depression or risk");
  c_grad->add_option("--configs", grad.configs, "Random configurations per row")->check(CLI::PositiveNumber);

  ExplainArgs expl;
  auto* c_expl = app.add_subcommand("explain", "Top-scoring phrase per diagnosed user");
  add_common(c_expl, expl.common);
  c_expl->add_option("--checkpoint", expl.checkpoint)->required()->check(CLI::ExistingFile);
  c_expl->add_option("--data", expl.data)->required()->check(CLI::ExistingDirectory);
  c_expl->add_option("--split", expl.split)->check(CLI::IsMember({"train", "validation", "test"}));
  c_expl->add_option("--top", expl.top, "Number of phrases")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (*c_build) return cmd_build_dataset(build);
    if (*c_synth) return cmd_synth(synth);
    if (*c_train) return cmd_train(train);
    if (*c_eval) return cmd_evaluate(eval);
    if (*c_pred) return cmd_predict(pred);
    if (*c_grad) return cmd_gradcheck(grad);
    if (*c_expl) return cmd_explain(expl);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
