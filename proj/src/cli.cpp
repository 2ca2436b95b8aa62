#include "clarifyir/cli.hpp"

#include <CLI11.hpp>

#include "clarifyir/error.hpp"
#include "clarifyir/harness.hpp"
#include "io.hpp"

namespace clarifyir {

namespace {

std::filesystem::path required(const ExperimentConfig& c, const std::string& configured,
                               const char* what) {
  if (configured.empty())
    fail(ErrorCode::kMissingArtifact, std::string("config: paths.") + what + " is not set");
  return c.resolve(configured);
}

int cmd_split(const ExperimentConfig& c, std::ostream& out) {
  const auto dataset = load_dataset(required(c, c.paths.dataset, "dataset"));
  const auto split = split_facets(dataset, c.split_ratios, c.seed);
  detail::write_file(required(c, c.paths.split, "split"), split_to_json(split).dump(1) + "\n");
  std::size_t counts[3] = {0, 0, 0};
  for (const auto& [facet, s] : split) ++counts[static_cast<int>(s)];
  out << "train\t" << counts[0] << "\nvalidation\t" << counts[1] << "\ntest\t" << counts[2] << "\n";
  return 0;
}

int cmd_index(const ExperimentConfig& c, std::ostream& out) {
  const auto corpus = load_corpus(required(c, c.paths.corpus, "corpus"));
  const auto index = InvertedIndex::build(corpus);
  index.save(required(c, c.paths.index, "index"));
  out << "documents\t" << index.num_docs() << "\nterms\t" << index.num_terms() << "\n";
  return 0;
}

int cmd_identifiers(const ExperimentConfig& c, std::ostream& out) {
  const auto corpus = load_corpus(required(c, c.paths.corpus, "corpus"));
  const auto index = InvertedIndex::load(required(c, c.paths.index, "index"));
  const auto ids = make_identifiers(corpus, c.identifier_strategy, index);
  save_identifiers(ids, c.identifier_strategy, required(c, c.paths.identifiers, "identifiers"));
  out << "identifiers\t" << ids.size() << "\nstrategy\t" << strategy_name(c.identifier_strategy) << "\n";
  return 0;
}

int cmd_train_scorer(const ExperimentConfig& c, std::ostream& out) {
  const auto target = required(c, c.paths.scorer, "scorer");
  const auto pipeline =
      Pipeline::load(c, {.scorer = true, .classifier = true, .weak_labels = true});
  const auto pairs = scorer_training_pairs(pipeline);
  ReferenceScorer::train(pairs, c.scorer_lambdas).save(target);
  out << "training_pairs\t" << pairs.size() << "\n";
  return 0;
}

int cmd_weak_label(const ExperimentConfig& c, std::ostream& out) {
  const auto target = required(c, c.paths.weak_labels, "weak_labels");
  const auto pipeline = Pipeline::load(c, {.classifier = true, .weak_labels = true});
  if (!pipeline.inputs().scorer) fail(ErrorCode::kMissingArtifact, "weak-label requires a scorer");
  if (!pipeline.inputs().embeddings) fail(ErrorCode::kMissingArtifact, "weak-label requires embeddings");
  const auto records = generate_weak_labels(pipeline);
  save_weak_labels(records, target);
  std::size_t veq = 0;
  for (const auto& r : records) veq += r.label == ClassLabel::kVeq ? 1 : 0;
  out << "questions\t" << records.size() << "\nVEQ\t" << veq << "\nTEQ\t" << records.size() - veq << "\n";
  return 0;
}

int cmd_train_classifier(const ExperimentConfig& c, std::ostream& out) {
  const auto target = required(c, c.paths.classifier, "classifier");
  const auto pipeline = Pipeline::load(c, {.classifier = true});
  if (c.paths.weak_labels.empty())
    fail(ErrorCode::kMissingArtifact, "train-classifier requires paths.weak_labels");
  const auto samples = classifier_samples(pipeline);
  ReferenceClassifier::train(samples, c.classifier_alpha).save(target);
  out << "training_samples\t" << samples.size() << "\n";
  return 0;
}

int cmd_retrieve(const ExperimentConfig& c, std::ostream& out) {
  const auto dir = required(c, c.paths.output_dir, "output_dir");
  const auto pipeline = Pipeline::load(c);
  pipeline.require_mode_artifacts();
  const auto samples = pipeline.samples(c.eval_split);
  const auto results = pipeline.rank_all(samples);
  std::vector<RunEntry> entries;
  for (std::size_t i = 0; i < samples.size(); ++i)
    entries.push_back({samples[i].facet->id, samples[i].question->id, results[i].ranking});
  detail::write_file(dir / "run.txt", format_run(entries, c.name));
  out << "samples\t" << entries.size() << "\n";
  return 0;
}

int cmd_evaluate(const ExperimentConfig& c, std::ostream& out) {
  const auto dir = required(c, c.paths.output_dir, "output_dir");
  const auto qrels = load_qrels(required(c, c.paths.qrels, "qrels"));
  const auto entries = parse_run(detail::read_file(dir / "run.txt"));
  auto report = evaluate_run(c, entries, qrels, {});
  write_report(report, dir);
  out << metrics_tsv_header();
  if (!report.body["macro"].is_null()) out << metrics_tsv_row(c.name, report.macro());
  return 0;
}

int cmd_stats(const ExperimentConfig& c, std::ostream& out) {
  const auto dataset = load_dataset(required(c, c.paths.dataset, "dataset"));
  const auto ds = dataset_stats(dataset);
  out << format_dataset_stats(ds);
  if (!dataset.answers().empty()) {
    const auto as = answer_stats(dataset.answers());
    out << format_answer_stats(as);
    if (!c.paths.output_dir.empty())
      detail::write_file(c.resolve(c.paths.output_dir) / "stats.json", stats_to_json(ds, as).dump(1) + "\n");
  }
  return 0;
}

int cmd_compare(const ExperimentConfig& c, std::ostream& out) {
  const auto a = load_report(required(c, c.paths.compare_a, "compare_a"));
  const auto b = load_report(required(c, c.paths.compare_b, "compare_b"));
  out << format_significance(compare_runs(a, b));
  return 0;
}

int cmd_run(const ExperimentConfig& c, std::ostream& out) {
  const auto report = run_experiment(c);
  out << metrics_tsv_header();
  if (!report.body["macro"].is_null()) out << metrics_tsv_row(c.name, report.macro());
  return 0;
}

}  // namespace

int cli_dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Offline multimodal query clarification engine and experiment harness", "clarifyir"};
  app.require_subcommand(1, 1);

  using Handler = int (*)(const ExperimentConfig&, std::ostream&);
  struct Command {
    const char* name;
    const char* help;
    Handler handler;
  };
  const Command commands[] = {
      {"split", "Assign facets to train/validation/test", cmd_split},
      {"index", "Build the inverted index over the corpus", cmd_index},
      {"identifiers", "Build the document identifier table", cmd_identifiers},
      {"train-scorer", "Train the reference sequence scorer", cmd_train_scorer},
      {"weak-label", "Derive VEQ/TEQ labels from text-only vs image-augmented reranking", cmd_weak_label},
      {"train-classifier", "Train the reference question classifier", cmd_train_classifier},
      {"retrieve", "Rank documents for every evaluation sample", cmd_retrieve},
      {"evaluate", "Score a run file against the qrels", cmd_evaluate},
      {"stats", "Print dataset and answer statistics", cmd_stats},
      {"compare", "Paired significance test between two reports", cmd_compare},
      {"run", "Retrieve and evaluate end to end", cmd_run},
  };

  std::string config_path;
  std::vector<std::pair<CLI::App*, Handler>> subs;
  for (const auto& cmd : commands) {
    auto* sub = app.add_subcommand(cmd.name, cmd.help);
    sub->add_option("--config", config_path, "Experiment config (JSON)")->required();
    subs.emplace_back(sub, cmd.handler);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "E_USAGE: " << e.what() << "\n" << app.help();
    return 2;
  }

  for (const auto& [sub, handler] : subs) {
    if (!sub->parsed()) continue;
    try {
      return handler(load_config(config_path), out);
    } catch (const Error& e) {
      err << error_code_name(e.code()) << ": " << e.what() << "\n";
      return 1;
    } catch (const std::exception& e) {
      err << "E_RUNTIME: " << e.what() << "\n";
      return 1;
    }
  }
  return 2;
}

}  // namespace clarifyir
