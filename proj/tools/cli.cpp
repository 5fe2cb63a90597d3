#include "cli.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "modlab/agreement.hpp"
#include "modlab/campaign.hpp"
#include "modlab/corpus_store.hpp"
#include "modlab/features.hpp"
#include "modlab/flagging.hpp"
#include "modlab/ordinal_core.hpp"
#include "modlab/resolve.hpp"
#include "modlab/service.hpp"

namespace modlab::cli {
namespace {

std::string env_or(const char* name, std::string fallback) {
  const char* value = std::getenv(name);
  return value && *value ? std::string(value) : std::move(fallback);
}

std::int64_t now_seconds() {
  return std::chrono::duration_cast<std::chrono::seconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << content;
  if (!out) throw IoError("write failed for " + path);
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<std::string> read_id_file(const std::string& path) {
  std::vector<std::string> out;
  std::istringstream in(read_file(path));
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

PreclassMode parse_mode(const std::string& mode) {
  if (mode == "top_positive") return PreclassMode::TopPositive;
  if (mode == "near_boundary") return PreclassMode::NearBoundary;
  throw ValidationError("unknown sampling mode '" + mode + "'");
}

BinaryRule parse_binary_rule(const std::string& rule) {
  if (rule == "majority") return BinaryRule::MajorityOfBinarized;
  if (rule == "resolved") return BinaryRule::BinarizeResolved;
  throw ValidationError("unknown binary rule '" + rule + "' (expected majority or resolved)");
}

struct DataOptions {
  std::string features = "synth-ordinal";
  std::size_t n = 1000;
  std::string strategy = "most_frequent";
  std::string binary_rule = "majority";
  std::uint64_t data_seed = 7;
};

void add_data_options(CLI::App* cmd, DataOptions& o) {
  cmd->add_option("--features", o.features,
                  "feature file (.jsonl/.tsv) joined with store gold labels, or "
                  "synth-ordinal / synth-binary");
  cmd->add_option("--n", o.n, "size of a synthetic feature set");
  cmd->add_option("--strategy", o.strategy, "gold strategy: most_frequent or max");
  cmd->add_option("--binary-rule", o.binary_rule, "most_frequent binary target: majority or resolved");
  cmd->add_option("--data-seed", o.data_seed, "seed of the synthetic generator");
}

Dataset load_dataset(const DataOptions& o, const std::string& store_dir) {
  if (o.features.rfind("synth-", 0) == 0) return synthetic_dataset(o.features, o.n, o.data_seed);
  Store store{std::filesystem::path(store_dir)};
  const auto gold = resolve_gold(store.snapshot(), parse_strategy(o.strategy),
                                 parse_binary_rule(o.binary_rule));
  return join_features(gold, read_feature_file(o.features));
}

struct TrainOptions {
  std::string kind = "coral";
  TrainConfig config;
};

void add_train_options(CLI::App* cmd, TrainOptions& o) {
  cmd->add_option("--kind", o.kind, "bin, multi, coral, bin_multi or bin_coral");
  cmd->add_option("--epochs", o.config.epochs);
  cmd->add_option("--lr", o.config.learning_rate);
  cmd->add_option("--batch-size", o.config.batch_size);
  cmd->add_option("--warmup", o.config.warmup_steps);
  cmd->add_option("--weight-decay", o.config.weight_decay);
  cmd->add_option("--hidden", o.config.hidden_dim);
  cmd->add_option("--lambda-bin", o.config.lambda_bin);
  cmd->add_option("--lambda-ord", o.config.lambda_ord);
  cmd->add_option("--seed", o.config.seed);
}

nlohmann::json scores_json(const Model& model, const Dataset& data) {
  nlohmann::json out = nlohmann::json::object();
  for (HeadKind head : heads_of(model.kind)) {
    const auto s = evaluate(model, data, head);
    out[std::string(to_string(head))] = {{"accuracy", s.accuracy}, {"f1_macro", s.f1_macro}};
  }
  return out;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Annotation campaigns, agreement statistics, gold resolution, "
               "ordinal classifiers and forum flagging"};
  app.require_subcommand(1);
  std::string store_dir = env_or("MODLAB_STORE", "modlab-store");
  app.add_option("--store", store_dir, "store directory (env MODLAB_STORE)");

  // ingest
  auto* ingest = app.add_subcommand("ingest", "add postings, annotators or classifier scores");
  std::string postings_file, annotators_file, scores_file;
  bool strict = false;
  ingest->add_option("--postings", postings_file, "postings JSON-lines file");
  ingest->add_option("--annotators", annotators_file, "annotators JSON-lines file");
  ingest->add_option("--scores", scores_file, "scores JSON-lines file");
  ingest->add_flag("--strict", strict, "reject duplicate posting ids instead of skipping them");

  // sample
  auto* sample = app.add_subcommand("sample", "draw unassigned postings");
  std::string sample_mode = "random";
  std::size_t sample_n = kDefaultRoundSize;
  double epsilon = kDefaultBoundaryEpsilon;
  std::uint64_t seed = 0;
  sample->add_option("--mode", sample_mode, "random, top_positive or near_boundary");
  sample->add_option("-n,--count", sample_n);
  sample->add_option("--epsilon", epsilon, "band half-width for near_boundary");
  sample->add_option("--seed", seed);

  // round-create
  auto* round_create = app.add_subcommand("round-create", "create an annotation round");
  std::string round_kind = "regular", posting_list, posting_file, annotator_list;
  std::size_t round_k = kDefaultAnnotatorsPerRound;
  std::size_t round_sample = 0;
  round_create->add_option("--kind", round_kind, "calibration or regular");
  round_create->add_option("--postings", posting_list, "comma-separated posting ids");
  round_create->add_option("--postings-file", posting_file, "file with one posting id per line");
  round_create->add_option("--sample", round_sample, "draw this many unassigned postings at random");
  round_create->add_option("--annotators", annotator_list,
                           "comma-separated annotator ids (default: all active)");
  round_create->add_option("-k", round_k, "annotators per regular round");
  round_create->add_option("--seed", seed);

  // batch-export / batch-import
  auto* batch_export = app.add_subcommand("batch-export", "write a batch CSV for one annotator");
  auto* batch_import = app.add_subcommand("batch-import", "import a filled batch CSV");
  std::string round_id, annotator_id, batch_file;
  for (auto* cmd : {batch_export, batch_import}) {
    cmd->add_option("--round", round_id)->required();
    cmd->add_option("--annotator", annotator_id)->required();
  }
  batch_export->add_option("--out", batch_file, "output file (default stdout)");
  batch_import->add_option("--file", batch_file)->required();

  // stats
  auto* stats = app.add_subcommand("stats", "agreement statistics over all annotations");
  std::string stats_format = "json";
  stats->add_option("--format", stats_format, "json, text or pairs-csv");

  // resolve
  auto* resolve = app.add_subcommand("resolve", "resolve gold labels");
  std::string strategy = "most_frequent", binary_rule = "majority", out_file;
  resolve->add_option("--strategy", strategy, "most_frequent or max");
  resolve->add_option("--binary-rule", binary_rule, "majority or resolved");
  resolve->add_option("--out", out_file, "JSON-lines output (default stdout)");

  // folds
  auto* folds = app.add_subcommand("folds", "stratified cross-validation folds and exports");
  std::size_t k_folds = 5;
  double dev_frac = 0.10;
  std::string stratify = "label", out_dir = "folds", export_format = "tsv";
  folds->add_option("--strategy", strategy);
  folds->add_option("--binary-rule", binary_rule);
  folds->add_option("-k", k_folds);
  folds->add_option("--dev-frac", dev_frac);
  folds->add_option("--stratify", stratify, "label or binary");
  folds->add_option("--seed", seed);
  folds->add_option("--out-dir", out_dir);
  folds->add_option("--format", export_format, "tsv or jsonl");

  // train
  auto* train_cmd = app.add_subcommand("train", "train a classifier");
  DataOptions train_data;
  TrainOptions train_opts;
  train_opts.config.epochs = 50;
  std::string checkpoint = "model.json", history = "history.json";
  add_data_options(train_cmd, train_data);
  add_train_options(train_cmd, train_opts);
  train_cmd->add_option("--out", checkpoint, "checkpoint path");
  train_cmd->add_option("--history", history, "loss history path");

  // evaluate
  auto* evaluate_cmd = app.add_subcommand("evaluate", "score a checkpoint or cross-validate");
  DataOptions eval_data;
  TrainOptions eval_opts;
  std::string eval_checkpoint, cv_kinds;
  bool parallel = false;
  add_data_options(evaluate_cmd, eval_data);
  add_train_options(evaluate_cmd, eval_opts);
  evaluate_cmd->add_option("--checkpoint", eval_checkpoint, "trained model to score");
  evaluate_cmd->add_option("--cv", cv_kinds, "comma-separated model kinds to cross-validate");
  evaluate_cmd->add_option("-k", k_folds);
  evaluate_cmd->add_option("--dev-frac", dev_frac);
  evaluate_cmd->add_flag("--parallel", parallel, "run folds concurrently");

  // grad-check
  auto* grad_cmd = app.add_subcommand("grad-check", "compare analytic and numeric gradients");
  std::string grad_kind = "coral";
  std::size_t grad_dim = 6, grad_hidden = 8, grad_samples = 4;
  double grad_h = 1e-5, grad_tol = 1e-5;
  grad_cmd->add_option("--kind", grad_kind);
  grad_cmd->add_option("--dim", grad_dim);
  grad_cmd->add_option("--hidden", grad_hidden);
  grad_cmd->add_option("--samples", grad_samples);
  grad_cmd->add_option("--step", grad_h, "finite-difference step");
  grad_cmd->add_option("--tolerance", grad_tol);
  grad_cmd->add_option("--seed", seed);

  // flag
  auto* flag = app.add_subcommand("flag", "forum misogyny rates and flags");
  double tau_post = kDefaultPostThreshold, tau_forum = kDefaultForumThreshold;
  std::string flag_format = "tsv";
  flag->add_option("--tau-post", tau_post);
  flag->add_option("--tau-forum", tau_forum);
  flag->add_option("--format", flag_format, "tsv or json");

  // serve
  auto* serve = app.add_subcommand("serve", "run the HTTP JSON API");
  std::string listen = env_or("MODLAB_LISTEN", "127.0.0.1:8080");
  std::string tokens_file = env_or("MODLAB_TOKENS", "");
  std::string web_root = env_or("MODLAB_WEB_ROOT", "");
  serve->add_option("--listen", listen, "host:port (env MODLAB_LISTEN)");
  serve->add_option("--tokens", tokens_file, "token map JSON (env MODLAB_TOKENS)");
  serve->add_option("--web-root", web_root, "static UI bundle directory (env MODLAB_WEB_ROOT)");

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  }

  try {
    if (*ingest) {
      Store store{std::filesystem::path(store_dir)};
      if (postings_file.empty() && annotators_file.empty() && scores_file.empty()) {
        throw ValidationError("ingest needs --postings, --annotators or --scores");
      }
      if (!annotators_file.empty()) {
        std::istringstream in(read_file(annotators_file));
        const auto annotators = parse_annotators_jsonl(in);
        out << "annotators: " << upsert_annotators(store, annotators) << "\n";
      }
      if (!postings_file.empty()) {
        std::istringstream in(read_file(postings_file));
        const auto postings = parse_postings_jsonl(in);
        out << "postings: " << ingest_postings(store, postings, !strict) << "\n";
      }
      if (!scores_file.empty()) {
        std::istringstream in(read_file(scores_file));
        const auto scores = parse_scores_jsonl(in);
        out << "scores: " << ingest_scores(store, scores) << "\n";
      }
    } else if (*sample) {
      Store store{std::filesystem::path(store_dir)};
      const auto state = store.snapshot();
      const auto ids = sample_mode == "random"
                           ? sample_random(state, sample_n, seed)
                           : sample_preclassified(state, parse_mode(sample_mode), sample_n, epsilon);
      for (const auto& id : ids) out << id << "\n";
    } else if (*round_create) {
      Store store{std::filesystem::path(store_dir)};
      std::vector<std::string> ids = split_list(posting_list);
      if (!posting_file.empty()) {
        auto more = read_id_file(posting_file);
        ids.insert(ids.end(), more.begin(), more.end());
      }
      if (round_sample > 0) {
        auto drawn = sample_random(store.snapshot(), round_sample, seed);
        ids.insert(ids.end(), drawn.begin(), drawn.end());
      }
      auto annotators = split_list(annotator_list);
      if (annotators.empty()) annotators = store.read(active_annotators);
      const Round round = parse_round_kind(round_kind) == RoundKind::Calibration
                              ? create_calibration_round(store, ids, annotators)
                              : create_round(store, ids, annotators, round_k, seed);
      out << nlohmann::json(round).dump(2) << "\n";
    } else if (*batch_export) {
      Store store{std::filesystem::path(store_dir)};
      const auto csv = store.read([&](const CorpusState& s) {
        return export_batch(s, round_id, annotator_id);
      });
      if (batch_file.empty()) {
        out << csv;
      } else {
        write_file(batch_file, csv);
      }
    } else if (*batch_import) {
      Store store{std::filesystem::path(store_dir)};
      const auto imported =
          import_batch(store, read_file(batch_file), annotator_id, round_id, now_seconds());
      out << "annotations: " << imported.size() << "\n";
    } else if (*stats) {
      Store store{std::filesystem::path(store_dir)};
      const auto matrix = AnnotationMatrix::from_corpus(store.snapshot());
      const auto report = agreement_report(matrix);
      if (stats_format == "json") {
        out << to_json(report).dump() << "\n";
      } else if (stats_format == "pairs-csv") {
        if (!report.pair_table) throw UndefinedStatistic("no co-annotated postings");
        out << pair_table_csv(*report.pair_table);
      } else if (stats_format == "text") {
        const auto j = to_json(report);
        for (const auto& [key, value] : j.items()) {
          if (value.is_primitive()) out << key << "\t" << value.dump() << "\n";
        }
      } else {
        throw ValidationError("unknown stats format '" + stats_format + "'");
      }
    } else if (*resolve) {
      Store store{std::filesystem::path(store_dir)};
      const auto gold = resolve_gold(store.snapshot(), parse_strategy(strategy),
                                     parse_binary_rule(binary_rule));
      std::string lines;
      for (const auto& g : gold) {
        lines += nlohmann::json{{"posting_id", g.posting_id},
                                {"gold_label", g.gold_label.value()},
                                {"gold_binary", g.gold_binary},
                                {"strategy", to_string(g.strategy)}}
                     .dump() +
                 "\n";
      }
      if (out_file.empty()) {
        out << lines;
      } else {
        write_file(out_file, lines);
      }
    } else if (*folds) {
      Store store{std::filesystem::path(store_dir)};
      const auto state = store.snapshot();
      const auto gold =
          resolve_gold(state, parse_strategy(strategy), parse_binary_rule(binary_rule));
      if (stratify != "label" && stratify != "binary") {
        throw ValidationError("--stratify must be label or binary");
      }
      const auto plan = stratified_folds(gold, k_folds, dev_frac, seed,
                                         stratify == "label" ? StratifyOn::Label : StratifyOn::Binary);
      std::map<std::string, std::string> texts;
      for (const auto& [id, p] : state.postings) texts[id] = p.text;
      if (export_format != "tsv" && export_format != "jsonl") {
        throw ValidationError("--format must be tsv or jsonl");
      }
      const auto paths = export_training_set(
          gold, plan, texts, out_dir, export_format == "tsv" ? ExportFormat::Tsv : ExportFormat::Jsonl);
      write_file((std::filesystem::path(out_dir) / "plan.json").string(), to_json(plan).dump(2) + "\n");
      if (!plan.warning.empty()) err << "warning: " << plan.warning << "\n";
      out << "files: " << paths.size() << "\n";
    } else if (*train_cmd) {
      const auto data = load_dataset(train_data, store_dir);
      const auto result = train(data, parse_model_kind(train_opts.kind), train_opts.config);
      write_file(checkpoint, model_to_json(result.model).dump() + "\n");
      write_file(history, nlohmann::json{{"kind", train_opts.kind},
                                         {"seed", train_opts.config.seed},
                                         {"epochs", train_opts.config.epochs},
                                         {"loss", result.loss_history}}
                                  .dump() +
                              "\n");
      out << nlohmann::json{{"checkpoint", checkpoint},
                            {"history", history},
                            {"final_loss", result.loss_history.empty()
                                               ? nlohmann::json(nullptr)
                                               : nlohmann::json(result.loss_history.back())},
                            {"train_scores", scores_json(result.model, data)}}
                 .dump()
          << "\n";
    } else if (*evaluate_cmd) {
      const auto data = load_dataset(eval_data, store_dir);
      if (!eval_checkpoint.empty()) {
        const auto model = model_from_json(nlohmann::json::parse(read_file(eval_checkpoint)));
        out << scores_json(model, data).dump() << "\n";
      } else {
        const auto kinds = split_list(cv_kinds.empty() ? eval_opts.kind : cv_kinds);
        std::vector<GoldRecord> records;
        for (const auto& s : data.samples) records.push_back({s.id, Label(s.label), s.binary, {}});
        const auto plan = stratified_folds(records, k_folds, dev_frac, eval_opts.config.seed);
        auto config = eval_opts.config;
        config.parallel_folds = parallel;
        std::vector<CvReport> reports;
        for (const auto& kind : kinds) {
          reports.push_back(cross_validate(data, parse_model_kind(kind), config, plan));
        }
        out << cv_report_tsv(reports);
      }
    } else if (*grad_cmd) {
      const auto kind = parse_model_kind(grad_kind);
      const Model model = init_model(kind, grad_dim, grad_hidden, seed);
      Rng rng(derive_seed(seed, 77));
      std::vector<Sample> samples;
      for (std::size_t i = 0; i < grad_samples; ++i) {
        Sample s;
        for (std::size_t d = 0; d < grad_dim; ++d) s.features.push_back(rng.uniform(-2.0, 2.0));
        s.label = static_cast<int>(rng.uniform_index(kNumLabels));
        s.binary = binarize(s.label);
        samples.push_back(std::move(s));
      }
      const double error = grad_check(model, samples, grad_h);
      out << "max_relative_error\t" << error << "\n";
      if (error > grad_tol) {
        err << "gradient check failed: " << error << " > " << grad_tol << "\n";
        return kExitValidation;
      }
    } else if (*flag) {
      Store store{std::filesystem::path(store_dir)};
      const auto rates = store.read([&](const CorpusState& s) { return forum_rates(s, tau_post); });
      const auto reports = flag_forums(rates, tau_forum, tau_post);
      if (flag_format == "json") {
        out << to_json(reports).dump() << "\n";
      } else {
        out << flag_report_tsv(reports);
      }
    } else if (*serve) {
      Store store{std::filesystem::path(store_dir)};
      const TokenMap tokens = tokens_file.empty() ? TokenMap{} : TokenMap::load(tokens_file);
      const Api api(store, tokens);
      const auto colon = listen.rfind(':');
      if (colon == std::string::npos) throw ValidationError("--listen must be host:port");
      HttpServer server(api, web_root.empty() ? std::nullopt
                                              : std::optional<std::filesystem::path>(web_root));
      const int port = server.bind(listen.substr(0, colon), std::stoi(listen.substr(colon + 1)));
      err << "listening on " << listen.substr(0, colon) << ":" << port << "\n";
      server.run();
    }
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const UndefinedStatistic& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const TrainingError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const nlohmann::json::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  return kExitOk;
}

}  // namespace modlab::cli
