#include "compmap/cli.hpp"

#include "compmap/bundle.hpp"
#include "compmap/composition.hpp"
#include "compmap/czsl.hpp"
#include "compmap/errors.hpp"
#include "compmap/fewshot.hpp"
#include "compmap/intervention.hpp"
#include "compmap/report.hpp"
#include "compmap/synth.hpp"
#include "compmap/weights.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>

namespace compmap {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json read_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw UsageError("cannot open config file " + path);
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw UsageError("invalid config " + path + ": " + e.what());
  }
}

json read_report(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open report " + path);
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw DataError("invalid report " + path + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot write " + path.string());
  os << text;
}

void write_report(const fs::path& path, const json& report) { write_text(path, report.dump(2) + "\n"); }

// --seed flag, then the config file's seed, then CMAP_SEED, then 0.
std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag, const json* config) {
  if (flag) return *flag;
  if (config && config->contains("seed")) return config->at("seed").get<std::uint64_t>();
  if (const char* env = std::getenv("CMAP_SEED")) {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(env, &used);
      if (used == std::string(env).size()) return v;
    } catch (const std::exception&) {
    }
    throw UsageError("CMAP_SEED is not an unsigned integer");
  }
  return 0;
}

TrainConfig load_train_config(const std::string& path, TrainConfig defaults, const std::optional<std::uint64_t>& seed) {
  json raw = path.empty() ? json::object() : read_json_file(path);
  from_json(raw, defaults);
  defaults.seed = resolve_seed(seed, &raw);
  defaults.validate();
  return defaults;
}

std::vector<int> parse_int_list(const std::string& s, const char* what) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const int v = std::stoi(item, &used);
      if (used != item.size() || v <= 0) throw std::invalid_argument("");
      out.push_back(v);
    } catch (const std::exception&) {
      throw UsageError(std::string(what) + ": expected a comma-separated list of positive integers");
    }
  }
  if (out.empty()) throw UsageError(std::string(what) + ": empty list");
  return out;
}

json sweep_metrics(const SweepResult& r) {
  json auc = json::object();
  for (std::size_t i = 0; i < r.ks.size(); ++i) auc[std::to_string(r.ks[i])] = r.auc[i];
  return json{{"auc", auc}, {"best_seen", r.best_seen}, {"best_unseen", r.best_unseen}, {"best_hm", r.best_hm}};
}

json bias_json(double b) {
  if (std::isinf(b)) return b > 0 ? "inf" : "-inf";
  return b;
}

json sweep_curves(const SweepResult& r) {
  json curves = json::object();
  for (std::size_t i = 0; i < r.ks.size(); ++i) {
    json pts = json::array();
    for (const auto& p : r.curves[i]) {
      pts.push_back({{"bias", bias_json(p.bias)}, {"acc_seen", p.acc_seen}, {"acc_unseen", p.acc_unseen}});
    }
    curves[std::to_string(r.ks[i])] = pts;
  }
  return curves;
}

std::string curves_csv(const SweepResult& r) {
  std::ostringstream os;
  os << std::setprecision(17) << "k,bias,acc_seen,acc_unseen\n";
  for (std::size_t i = 0; i < r.ks.size(); ++i) {
    for (const auto& p : r.curves[i]) os << r.ks[i] << ',' << p.bias << ',' << p.acc_seen << ',' << p.acc_unseen << '\n';
  }
  return os.str();
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << v;
  return os.str();
}

std::vector<Index> split_rows_or_all(const DatasetBundle& b, const std::string& split) {
  if (split == "all") return {};
  return b.split.rows(parse_split(split));
}

// ---------------------------------------------------------------------------

struct GenSynthArgs {
  std::string config, out, report;
  std::optional<std::uint64_t> seed;
};

int cmd_gen_synth(const GenSynthArgs& a, std::ostream& out) {
  json raw = a.config.empty() ? json::object() : read_json_file(a.config);
  SynthConfig cfg;
  from_json(raw, cfg);
  cfg.seed = resolve_seed(a.seed, &raw);
  const auto bundle = generate(cfg);
  save_bundle(bundle, a.out);
  const fs::path report_path = a.report.empty() ? fs::path(a.out) / "report.json" : fs::path(a.report);
  json metrics{{"samples", bundle.num_samples()},
               {"primitives", bundle.vocab.num_primitives()},
               {"composites", bundle.vocab.num_composites()},
               {"seen", bundle.split.seen_set.size()}};
  write_report(report_path, make_report("gen-synth", json(cfg), cfg.seed, metrics));
  out << report_path.string() << '\n'
      << "generated " << bundle.num_samples() << " samples, " << bundle.vocab.num_primitives() << " primitives, "
      << bundle.vocab.num_composites() << " composites -> " << a.out << '\n';
  return kExitOk;
}

struct ValidateArgs {
  std::string bundle, report;
};

int cmd_validate(const ValidateArgs& a, std::ostream& out) {
  const auto b = load_bundle(a.bundle);
  json metrics{{"samples", b.num_samples()},
               {"primitives", b.vocab.num_primitives()},
               {"composites", b.vocab.num_composites()},
               {"seen", b.split.seen_set.size()},
               {"candidates", b.split.candidate_set.size()}};
  if (!a.report.empty()) {
    write_report(a.report, make_report("validate", json{{"bundle", a.bundle}}, 0, metrics));
    out << a.report << '\n';
  }
  out << "ok: " << b.num_samples() << " samples, " << b.vocab.num_primitives() << " primitives, "
      << b.vocab.num_composites() << " composites\n";
  return kExitOk;
}

struct TrainArgs {
  std::string kind, bundle, config, out, train_on = "pred";
  std::optional<std::uint64_t> seed;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  const auto b = load_bundle(a.bundle);
  const bool logreg = a.kind == "logreg";
  const auto cfg = load_train_config(
      a.config, logreg ? TrainConfig::logreg_defaults() : TrainConfig::contrastive_defaults(), a.seed);
  const auto source = parse_input_source(a.train_on);
  const auto rows = b.split.rows(Split::train);
  if (rows.empty()) throw DataError("train: bundle has an empty train split");
  std::vector<Index> labels;
  for (Index r : rows) labels.push_back(b.split.labels[r]);
  const auto x = model_inputs(b, rows, source, InterventionMode::none);

  SavedModel saved;
  saved.config = cfg;
  double final_loss = 0.0;
  double train_acc = 0.0;
  std::size_t steps = 0;
  if (logreg) {
    auto res = train_logreg(x, labels, cfg);
    final_loss = res.final_loss;
    steps = res.loss_history.size();
    train_acc = classification_accuracy(res.model, x, labels);
    saved.model = std::move(res.model);
  } else {
    if (!b.composite_embeddings) throw DataError("train contrastive: bundle has no composite embeddings");
    auto res = train_contrastive(x, labels, *b.composite_embeddings, b.split.seen_set, cfg);
    final_loss = res.final_loss;
    steps = res.loss_history.size();
    const auto scores = score_matrix(res.model, x, b.split.seen_set, &*b.composite_embeddings);
    std::size_t hits = 0;
    for (Eigen::Index i = 0; i < scores.rows(); ++i) {
      Eigen::Index best = 0;
      scores.row(i).maxCoeff(&best);
      if (b.split.seen_set[static_cast<std::size_t>(best)] == labels[static_cast<std::size_t>(i)]) ++hits;
    }
    train_acc = static_cast<double>(hits) / static_cast<double>(labels.size());
    saved.model = std::move(res.model);
  }
  save_model(saved, a.out);
  const auto report_path = fs::path(a.out) / "report.json";
  json config{{"trainer", a.kind}, {"bundle", a.bundle}, {"train_on", a.train_on}, {"train", cfg}};
  write_report(report_path, make_report("train", config, cfg.seed,
                                        json{{"final_loss", final_loss}, {"train_accuracy", train_acc}, {"steps", steps}}));
  out << report_path.string() << '\n'
      << "trained " << a.kind << ": loss " << fmt(final_loss, 6) << ", train accuracy " << fmt(train_acc) << '\n';
  return kExitOk;
}

struct EvalCzslArgs {
  std::string bundle, model, world = "closed", intervene = "none", topk = "1,2,3", eval_on = "pred", split = "test";
  std::string out, csv;
};

int cmd_eval_czsl(const EvalCzslArgs& a, std::ostream& out) {
  const auto b = load_bundle(a.bundle);
  const auto saved = load_model(a.model);
  CzslOptions opts;
  opts.world = parse_world(a.world);
  opts.mode = parse_intervention_mode(a.intervene);
  opts.eval_on = parse_input_source(a.eval_on);
  opts.split = parse_split(a.split);
  opts.ks = parse_int_list(a.topk, "--topk");
  if (std::holds_alternative<LinearCompositionModel>(saved.model)) {
    throw UsageError("eval-czsl: a logreg model has no rows for unseen composites; train a contrastive model");
  }
  const InputTransform* transform = saved.transform ? &*saved.transform : nullptr;
  const auto result = evaluate_czsl(b, saved.model, opts, transform);

  json config{{"bundle", a.bundle},     {"model", a.model}, {"world", a.world},     {"intervene", a.intervene},
              {"topk", opts.ks},        {"eval_on", a.eval_on}, {"split", a.split}, {"model_config", saved.config}};
  auto report = make_report("eval-czsl", config, saved.config.seed, sweep_metrics(result));
  report["curves"] = sweep_curves(result);
  write_report(a.out, report);
  if (!a.csv.empty()) write_text(a.csv, curves_csv(result));
  out << a.out << '\n' << "AUC";
  for (std::size_t i = 0; i < result.ks.size(); ++i) out << " @" << result.ks[i] << "=" << fmt(result.auc[i]);
  out << ", best seen " << fmt(result.best_seen) << ", best unseen " << fmt(result.best_unseen) << ", best HM "
      << fmt(result.best_hm) << '\n';
  return kExitOk;
}

struct EvalFewShotArgs {
  std::string bundle, config, n = "5", k = "1", intervene = "none", train_on = "pred", eval_on = "pred";
  std::string split = "all", out;
  std::size_t q = 15, tasks = 600, threads = 1;
  bool full_shot = false;
  std::optional<std::uint64_t> seed;
};

int cmd_eval_fewshot(const EvalFewShotArgs& a, std::ostream& out, std::ostream& err) {
  const auto b = load_bundle(a.bundle);
  const auto cfg = load_train_config(a.config, TrainConfig::logreg_defaults(), a.seed);
  EvalInputs inputs;
  inputs.train_on = parse_input_source(a.train_on);
  inputs.eval_on = parse_input_source(a.eval_on);
  inputs.mode = parse_intervention_mode(a.intervene);
  const auto ns = parse_int_list(a.n, "--n");
  const auto ks = parse_int_list(a.k, "--k");
  if (a.tasks == 0) throw UsageError("--tasks must be positive");
  const auto pool = split_rows_or_all(b, a.split);

  json metrics = json::object();
  std::ostringstream summary;
  for (int n : ns) {
    for (int k : ks) {
      EpisodeConfig ec{static_cast<std::size_t>(n), static_cast<std::size_t>(k), a.q, a.tasks, cfg.seed};
      std::size_t shrunk = 0;
      const auto specs = sample_episodes(b, ec, pool, &shrunk);
      if (shrunk > 0) {
        err << "warning: " << shrunk << " classes could not supply " << (k + a.q)
            << " samples; query size reduced for those classes\n";
      }
      const auto s = eval_episodes(specs, b, inputs, cfg, a.threads);
      const auto key = "n" + std::to_string(n) + "_k" + std::to_string(k);
      metrics[key] = {{"mean", s.mean}, {"std", s.stddev}};
      summary << ' ' << n << "-way " << k << "-shot " << fmt(s.mean);
    }
  }
  if (a.full_shot) {
    std::size_t excluded = 0;
    const double acc = eval_fullshot(b, inputs, cfg, &excluded);
    if (excluded > 0) err << "warning: full-shot skips " << excluded << " test samples of classes absent from training\n";
    metrics["full_shot"] = {{"accuracy", acc}};
    summary << " full-shot " << fmt(acc);
  }
  json config{{"bundle", a.bundle},   {"n", ns},         {"k", ks},           {"q", a.q},
              {"tasks", a.tasks},     {"split", a.split}, {"intervene", a.intervene}, {"train_on", a.train_on},
              {"eval_on", a.eval_on}, {"full_shot", a.full_shot}, {"train", cfg}};
  auto report = make_report("eval-fewshot", config, cfg.seed, metrics);
  report["task_count"] = a.tasks;
  write_report(a.out, report);
  out << a.out << '\n' << "mean accuracy:" << summary.str() << '\n';
  return kExitOk;
}

struct DeltaArgs {
  std::string oracle, pred, out;
};

struct DeltaRow {
  std::string name;
  json::json_pointer ptr;
  double value;
};

void flatten(const json& j, const std::string& prefix, const json::json_pointer& ptr, std::vector<DeltaRow>& rows) {
  if (j.is_object()) {
    for (const auto& [k, v] : j.items()) flatten(v, prefix.empty() ? k : prefix + "." + k, ptr / k, rows);
  } else if (j.is_number()) {
    rows.push_back({prefix, ptr, j.get<double>()});
  }
}

int cmd_delta(const DeltaArgs& a, std::ostream& out, std::ostream& err) {
  const auto oracle = read_report(a.oracle);
  const auto pred = read_report(a.pred);
  if (!oracle.contains("metrics") || !pred.contains("metrics")) throw DataError("delta: report without metrics");
  if (oracle.value("command", "") != pred.value("command", "")) {
    err << "warning: reports come from different commands\n";
  }
  auto delta = delta_metrics(oracle.at("metrics"), pred.at("metrics"));
  if (delta.is_null()) delta = json::object();

  // Table layout: one row per metric, values in percent.
  std::vector<DeltaRow> rows;
  flatten(delta, "", json::json_pointer(), rows);
  std::ostringstream table;
  table << std::left << std::setw(24) << "metric" << std::right << std::setw(10) << "oracle" << std::setw(10) << "pred"
        << std::setw(10) << "delta" << '\n';
  for (const auto& row : rows) {
    table << std::left << std::setw(24) << row.name << std::right << std::setw(10)
          << fmt(100.0 * oracle.at("metrics").at(row.ptr).get<double>(), 1) << std::setw(10)
          << fmt(100.0 * pred.at("metrics").at(row.ptr).get<double>(), 1) << std::setw(10)
          << fmt(100.0 * row.value, 1) << '\n';
  }
  err << table.str();

  json config{{"oracle_report", a.oracle},
              {"pred_report", a.pred},
              {"oracle_config_hash", oracle.value("config_hash", "")},
              {"pred_config_hash", pred.value("config_hash", "")}};
  write_report(a.out, make_report("delta", config, oracle.value("seed", std::uint64_t{0}), delta));
  out << a.out << '\n' << "delta over " << rows.size() << " metrics\n";
  return kExitOk;
}

struct AnalyzeArgs {
  std::string model, bundle, out, csv;
  std::vector<std::string> composites;
  bool micro = false;
};

int cmd_analyze_weights(const AnalyzeArgs& a, std::ostream& out) {
  const auto b = load_bundle(a.bundle);
  const auto saved = load_model(a.model);
  if (saved.transform && saved.transform->kind != ProjectionKind::none) {
    throw UsageError("analyze-weights: model reads projected image embeddings, not primitive activations");
  }
  LinearCompositionModel linear;
  if (const auto* lin = std::get_if<LinearCompositionModel>(&saved.model)) {
    linear = *lin;
  } else {
    if (!b.composite_embeddings) throw DataError("analyze-weights: bundle has no composite embeddings");
    std::vector<Index> all(b.vocab.num_composites());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    linear = reduce_to_linear(std::get<DualProjectionModel>(saved.model), *b.composite_embeddings, all);
  }
  const double per_composite = topk_alignment(linear, b.vocab, AlignmentAveraging::per_composite);
  const double micro = topk_alignment(linear, b.vocab, AlignmentAveraging::micro);

  std::vector<Index> chosen;
  if (a.composites.empty()) {
    chosen = linear.composites;
  } else {
    for (const auto& name : a.composites) {
      const auto q = b.vocab.find_composite(name);
      if (!q) throw UsageError("analyze-weights: unknown composite '" + name + "'");
      chosen.push_back(*q);
    }
  }
  const auto profiles = export_weight_profiles(linear, b.vocab, chosen);
  json metrics{{"alignment", a.micro ? micro : per_composite},
               {"alignment_per_composite", per_composite},
               {"alignment_micro", micro}};
  json config{{"model", a.model}, {"bundle", a.bundle}, {"composites", a.composites}, {"micro", a.micro}};
  auto report = make_report("analyze-weights", config, saved.config.seed, metrics);
  report["profiles"] = profiles_to_json(profiles);
  write_report(a.out, report);
  if (!a.csv.empty()) write_text(a.csv, profiles_to_csv(profiles));
  out << a.out << '\n' << "top-k alignment " << fmt(a.micro ? micro : per_composite) << '\n';
  return kExitOk;
}

struct AblateArgs {
  std::string kind, bundle, config, out;
  std::size_t target_dim = 0;
  std::optional<std::uint64_t> seed;
};

int cmd_ablate(const AblateArgs& a, std::ostream& out) {
  const auto b = load_bundle(a.bundle);
  if (!b.image_embeddings) throw DataError("ablate-projection: bundle has no image embeddings");
  if (!b.composite_embeddings) throw DataError("ablate-projection: bundle has no composite embeddings");
  const auto cfg = load_train_config(a.config, TrainConfig::contrastive_defaults(), a.seed);
  const auto kind = parse_projection_kind(a.kind);
  const auto source_dim = static_cast<std::size_t>(b.image_embeddings->cols());
  const auto target_dim = a.target_dim ? a.target_dim : b.vocab.num_primitives();
  const auto transform = make_projection_baseline(kind, source_dim, target_dim, cfg);

  const auto rows = b.split.rows(Split::train);
  if (rows.empty()) throw DataError("ablate-projection: bundle has an empty train split");
  MatrixF raw(eidx(rows.size()), b.image_embeddings->cols());
  std::vector<Index> labels;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    raw.row(eidx(i)) = b.image_embeddings->row(eidx(rows[i]));
    labels.push_back(b.split.labels[rows[i]]);
  }

  SavedModel saved;
  saved.config = cfg;
  double final_loss = 0.0;
  if (kind == ProjectionKind::learned) {
    auto res = train_projected_contrastive(transform, raw, labels, *b.composite_embeddings, b.split.seen_set, cfg);
    final_loss = res.trained.final_loss;
    saved.model = std::move(res.trained.model);
    saved.transform = std::move(res.transform);
  } else {
    auto res = train_contrastive(transform.apply(raw), labels, *b.composite_embeddings, b.split.seen_set, cfg);
    final_loss = res.final_loss;
    saved.model = std::move(res.model);
    saved.transform = transform;
  }
  save_model(saved, a.out);

  CzslOptions opts;
  const auto result = evaluate_czsl(b, saved.model, opts, &*saved.transform);
  json metrics = sweep_metrics(result);
  metrics["final_loss"] = final_loss;
  json config{{"projection", a.kind}, {"bundle", a.bundle}, {"target_dim", transform.output_dim()}, {"train", cfg}};
  auto report = make_report("ablate-projection", config, cfg.seed, metrics);
  report["curves"] = sweep_curves(result);
  const auto report_path = fs::path(a.out) / "report.json";
  write_report(report_path, report);
  out << report_path.string() << '\n'
      << "projection " << a.kind << ": AUC@1 " << fmt(result.auc_at(result.ks.front())) << ", best HM "
      << fmt(result.best_hm) << '\n';
  return kExitOk;
}

}  // namespace

int run_cli(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"compmap: composition-model probing of primitive concept activations"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  GenSynthArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-synth", "Generate a synthetic concept bundle");
  gen_cmd->add_option("--config", gen.config, "Synthetic generator config (JSON)");
  gen_cmd->add_option("--out", gen.out, "Output bundle directory")->required();
  gen_cmd->add_option("--seed", gen.seed, "Seed (overrides config and CMAP_SEED)");
  gen_cmd->add_option("--report", gen.report, "Report path (default: <out>/report.json)");

  ValidateArgs val;
  auto* val_cmd = app.add_subcommand("validate", "Validate a bundle directory");
  val_cmd->add_option("bundle", val.bundle, "Bundle directory")->required();
  val_cmd->add_option("--report", val.report, "Optional report path");

  TrainArgs tr;
  auto* tr_cmd = app.add_subcommand("train", "Train a composition model on the train split");
  tr_cmd->add_option("kind", tr.kind, "logreg | contrastive")->required()->check(CLI::IsMember({"logreg", "contrastive"}));
  tr_cmd->add_option("--bundle", tr.bundle)->required();
  tr_cmd->add_option("--config", tr.config, "Train config (JSON)");
  tr_cmd->add_option("--out", tr.out, "Model output directory")->required();
  tr_cmd->add_option("--train-on", tr.train_on, "pred | gt")->check(CLI::IsMember({"pred", "gt"}));
  tr_cmd->add_option("--seed", tr.seed);

  EvalCzslArgs cz;
  auto* cz_cmd = app.add_subcommand("eval-czsl", "Generalized CZSL calibration sweep");
  cz_cmd->add_option("--bundle", cz.bundle)->required();
  cz_cmd->add_option("--model", cz.model)->required();
  cz_cmd->add_option("--world", cz.world)->check(CLI::IsMember({"closed", "open"}));
  cz_cmd->add_option("--intervene", cz.intervene)->check(CLI::IsMember({"none", "full", "partial"}));
  cz_cmd->add_option("--topk", cz.topk, "Comma-separated k values");
  cz_cmd->add_option("--eval-on", cz.eval_on)->check(CLI::IsMember({"pred", "gt"}));
  cz_cmd->add_option("--split", cz.split)->check(CLI::IsMember({"val", "test"}));
  cz_cmd->add_option("--out", cz.out, "Report path")->required();
  cz_cmd->add_option("--csv", cz.csv, "Curve points CSV path");

  EvalFewShotArgs fs_args;
  auto* fs_cmd = app.add_subcommand("eval-fewshot", "n-way k-shot episodic evaluation");
  fs_cmd->add_option("--bundle", fs_args.bundle)->required();
  fs_cmd->add_option("--config", fs_args.config, "Train config (JSON)");
  fs_cmd->add_option("--n", fs_args.n, "Comma-separated n values");
  fs_cmd->add_option("--k", fs_args.k, "Comma-separated k values");
  fs_cmd->add_option("--q", fs_args.q, "Queries per class");
  fs_cmd->add_option("--tasks", fs_args.tasks);
  fs_cmd->add_option("--intervene", fs_args.intervene)->check(CLI::IsMember({"none", "full", "partial"}));
  fs_cmd->add_option("--train-on", fs_args.train_on)->check(CLI::IsMember({"pred", "gt"}));
  fs_cmd->add_option("--eval-on", fs_args.eval_on)->check(CLI::IsMember({"pred", "gt"}));
  fs_cmd->add_option("--split", fs_args.split, "Sample pool: all | train | val | test")
      ->check(CLI::IsMember({"all", "train", "val", "test"}));
  fs_cmd->add_option("--threads", fs_args.threads);
  fs_cmd->add_flag("--full-shot", fs_args.full_shot, "Also run the full-shot evaluation");
  fs_cmd->add_option("--seed", fs_args.seed);
  fs_cmd->add_option("--out", fs_args.out, "Report path")->required();

  DeltaArgs de;
  auto* de_cmd = app.add_subcommand("delta", "Interpretability gap between two reports");
  de_cmd->add_option("--oracle-report", de.oracle)->required();
  de_cmd->add_option("--pred-report", de.pred)->required();
  de_cmd->add_option("--out", de.out, "Report path")->required();

  AnalyzeArgs an;
  auto* an_cmd = app.add_subcommand("analyze-weights", "Top-k weight alignment and weight profiles");
  an_cmd->add_option("--model", an.model)->required();
  an_cmd->add_option("--bundle", an.bundle)->required();
  an_cmd->add_option("--composite", an.composites, "Composite name (repeatable)");
  an_cmd->add_flag("--micro", an.micro, "Report the micro-averaged alignment");
  an_cmd->add_option("--out", an.out, "Report path")->required();
  an_cmd->add_option("--csv", an.csv, "Profile CSV path");

  AblateArgs ab;
  auto* ab_cmd = app.add_subcommand("ablate-projection", "Projection ablation over raw image embeddings");
  ab_cmd->add_option("kind", ab.kind, "none | learned | random")
      ->required()
      ->check(CLI::IsMember({"none", "learned", "random"}));
  ab_cmd->add_option("--bundle", ab.bundle)->required();
  ab_cmd->add_option("--config", ab.config, "Train config (JSON)");
  ab_cmd->add_option("--target-dim", ab.target_dim, "Projection width (default: primitive count)");
  ab_cmd->add_option("--out", ab.out, "Output directory")->required();
  ab_cmd->add_option("--seed", ab.seed);

  std::vector<const char*> argv;
  for (const auto& s : args) argv.push_back(s.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen_cmd) return cmd_gen_synth(gen, out);
    if (*val_cmd) return cmd_validate(val, out);
    if (*tr_cmd) return cmd_train(tr, out);
    if (*cz_cmd) return cmd_eval_czsl(cz, out);
    if (*fs_cmd) return cmd_eval_fewshot(fs_args, out, err);
    if (*de_cmd) return cmd_delta(de, out, err);
    if (*an_cmd) return cmd_analyze_weights(an, out);
    if (*ab_cmd) return cmd_ablate(ab, out);
  } catch (const DataError& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const NumericError& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace compmap
