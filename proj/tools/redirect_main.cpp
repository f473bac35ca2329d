// redirect: command-line front end for the redirection analysis pipeline.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <map>

#include "redirect/error.hpp"
#include "redirect/pipeline.hpp"
#include "redirect/synthetic.hpp"

namespace {

using namespace redirect;

struct Shared {
  RunConfig run;
  std::uint64_t seed = 0;
  std::vector<std::string> analyses;
  std::vector<std::string> codes;
  std::string backend = "ngram";
  std::string merge = "within_burst";
  std::string alternative = "two_sided";
  std::string zeros = "wilcox";
  std::string shuffle_mode = "within_role";
  bool no_similarity = false;
  bool no_dependence = false;
  bool no_tune = false;
};

void add_input(CLI::App* app, Shared& s, bool segmentation = true) {
  auto& in = s.run.input;
  app->add_option("--corpus", in.corpus, "Line-delimited utterance records")->required();
  app->add_option("--mapping", in.mapping, "Speaker / field mapping file");
  if (!segmentation) return;
  app->add_option("--automated", in.automated, "Automated-message patterns, one regex per line");
  app->add_option("--n-multiplier", in.n_multiplier, "Split on gaps above N x median reply time")
      ->capture_default_str();
  app->add_option("--min-turns", in.min_turns, "Minimum turns per session")->capture_default_str();
  app->add_option("--merge", s.merge, "Turn merging: within_burst or before_split")
      ->check(CLI::IsMember({"within_burst", "before_split"}))
      ->capture_default_str();
  app->add_flag("--drop-video", in.drop_video_bursts, "Drop bursts containing video messages");
  app->add_option("--workers", in.workers, "Worker threads")->capture_default_str();
}

void add_scorer(CLI::App* app, Shared& s) {
  auto& sc = s.run.scorer;
  app->add_option("--backend", s.backend, "Scorer backend: ngram or remote")
      ->check(CLI::IsMember({"ngram", "remote"}))
      ->capture_default_str();
  app->add_option("--model", sc.model, "Saved n-gram model");
  app->add_option("--train-corpus", sc.train_corpus, "Train the n-gram model on this corpus");
  app->add_option("--heldout-fraction", sc.heldout_fraction,
                  "Share of conversations held out for training and excluded from analysis")
      ->capture_default_str();
  app->add_option("--order", sc.ngram.order, "n-gram order")->capture_default_str();
  app->add_option("--discount", sc.ngram.discount, "Absolute discount")->capture_default_str();
  app->add_option("--context-weight", sc.ngram.context_weight, "Initial context-cache weight")
      ->capture_default_str();
  app->add_flag("--no-tune", s.no_tune, "Keep --context-weight instead of fitting it");
  app->add_option("--endpoint", sc.remote.endpoint, "Remote scorer URL (default REDIRECT_SCORER_URL)");
  app->add_option("--remote-model", sc.remote.model, "Model name sent to the remote scorer");
  app->add_option("--max-in-flight", sc.remote.max_in_flight, "Concurrent remote requests")
      ->capture_default_str();
}

void add_analysis(CLI::App* app, Shared& s) {
  auto& r = s.run;
  app->add_option("--out", r.out_dir, "Output directory")->required();
  app->add_option("--seed", s.seed, "Seed for shuffling, sampling and bootstrap");
  app->add_option("--orientation", r.orientation, "Side CSV of utterance_id,orientation");
  app->add_flag("--no-similarity", s.no_similarity, "Skip the similarity-difference measure");
  app->add_flag("--no-dependence", s.no_dependence, "Skip the dependence measure");
  app->add_option("--k", r.phase_k, "Sessions per phase window")->capture_default_str();
  app->add_option("--min-sessions", r.phase_min_sessions, "Minimum sessions for phase analysis")
      ->capture_default_str();
  app->add_option("--codes", s.codes, "Unsuccessful outcome reason codes");
  app->add_option("--cohort-min-sessions", r.cohort.min_sessions)->capture_default_str();
  app->add_option("--cohort-first-k", r.cohort.first_k)->capture_default_str();
  app->add_option("--alternative", s.alternative, "two_sided, greater or less")
      ->check(CLI::IsMember({"two_sided", "greater", "less"}))
      ->capture_default_str();
  app->add_option("--zeros", s.zeros, "Zero differences: wilcox (drop) or pratt")
      ->check(CLI::IsMember({"wilcox", "pratt"}))
      ->capture_default_str();
  app->add_option("--shuffle-mode", s.shuffle_mode, "within_role or cross_role")
      ->check(CLI::IsMember({"within_role", "cross_role"}))
      ->capture_default_str();
  app->add_option("--bootstrap", r.bootstrap_resamples, "Bootstrap resamples")
      ->capture_default_str();
  app->add_option("--level", r.bootstrap_level, "Confidence level")->capture_default_str();
  app->add_option("--alpha", r.significance, "Significance level for the comparison table")
      ->capture_default_str();
  app->add_option("--ngram-max", r.fightin_ngram_max, "Distinguishing-word n-gram arity (1 or 2)")
      ->capture_default_str();
  app->add_option("--alpha0", r.fightin_alpha0, "Dirichlet prior mass")->capture_default_str();
  app->add_option("--top-k", r.fightin_top_k, "Terms kept per table end (0 = all)")
      ->capture_default_str();
}

// Converts the string-valued flags into the run configuration.
void finalize(CLI::App* app, Shared& s) {
  auto& r = s.run;
  r.input.merge = s.merge == "before_split" ? MergeMode::before_split : MergeMode::within_burst;
  r.scorer.backend = s.backend == "remote" ? Backend::remote : Backend::ngram;
  r.scorer.ngram.tune_context_weight = !s.no_tune;
  if (r.scorer.backend == Backend::remote) {
    const auto env = RemoteScorerConfig::from_environment();
    if (r.scorer.remote.endpoint.empty()) r.scorer.remote.endpoint = env.endpoint;
    r.scorer.remote.auth_token = env.auth_token;
  }
  r.measures.similarity = !s.no_similarity;
  r.measures.dependence = !s.no_dependence;
  if (auto* opt = app->get_option_no_throw("--seed"); opt && opt->count()) r.seed = s.seed;
  if (!s.codes.empty()) r.cohort.unsuccessful_codes = {s.codes.begin(), s.codes.end()};
  r.alternative = s.alternative == "greater" ? Alternative::greater
                  : s.alternative == "less"  ? Alternative::less
                                             : Alternative::two_sided;
  r.zeros = s.zeros == "pratt" ? ZeroHandling::pratt : ZeroHandling::wilcox;
  r.shuffle_mode = s.shuffle_mode == "cross_role" ? ShuffleMode::cross_role
                                                  : ShuffleMode::within_role;
  if (!s.analyses.empty()) {
    r.analyses.clear();
    for (const auto& a : s.analyses) {
      if (a == "all") {
        r.analyses = all_analyses();
        continue;
      }
      auto parsed = parse_analysis(a);
      if (!parsed) throw ConfigError("unknown analysis: " + a);
      r.analyses.insert(*parsed);
    }
  }
}

std::ofstream open_or_throw(const std::filesystem::path& p) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + p.string());
  return out;
}

int cmd_ingest(const Shared& s, const std::filesystem::path& out) {
  const Corpus corpus = load_input(s.run.input);
  write_corpus(corpus, out);
  std::cerr << corpus.conversations.size() << " conversations, " << corpus.utterance_count()
            << " utterances\n";
  return kExitOk;
}

int cmd_sessions(const Shared& s, const std::filesystem::path& out) {
  const auto seg =
      segment_corpus(load_input(s.run.input), segmentation_config(s.run.input), s.run.input.workers);
  auto f = open_or_throw(out);
  write_sessions_manifest(f, seg);
  std::cerr << seg.total_sessions() << " sessions in " << seg.conversations.size()
            << " conversations\n";
  return kExitOk;
}

int cmd_nsweep(const Shared& s, const std::vector<double>& n_values,
               const std::filesystem::path& out) {
  const auto rows =
      n_sweep(load_input(s.run.input), n_values, segmentation_config(s.run.input));
  auto f = open_or_throw(out);
  write_sweep_csv(f, rows);
  return kExitOk;
}

int cmd_train(const Shared& s, const std::filesystem::path& out) {
  const auto seg =
      segment_corpus(load_input(s.run.input), segmentation_config(s.run.input), s.run.input.workers);
  const auto split = split_corpus(seg, s.run.scorer.heldout_fraction);
  const auto model = train_ngram(split.training, s.run.scorer.ngram);
  model.save(out);
  std::cerr << model.model_id() << ": " << model.vocabulary().size() << " types, context weight "
            << model.context_weight() << '\n';
  return kExitOk;
}

int cmd_synth(const std::string& kind, std::size_t conversations, std::uint64_t seed,
              bool labels, const std::filesystem::path& out) {
  Corpus corpus;
  if (kind == "planted") {
    synthetic::PlantedConfig cfg;
    cfg.conversations = conversations;
    cfg.seed = seed;
    cfg.label_outcomes = labels;
    corpus = synthetic::planted_redirection(cfg);
  } else if (kind == "greeting") {
    synthetic::GreetingConfig cfg;
    cfg.conversations = conversations;
    cfg.seed = seed;
    corpus = synthetic::greeting_farewell(cfg);
  } else {
    synthetic::SweepConfig cfg;
    cfg.conversations = conversations;
    cfg.seed = seed;
    corpus = synthetic::sweep_corpus(cfg);
  }
  auto f = open_or_throw(out);
  for (const auto& conv : corpus.conversations)
    for (const auto& u : conv.utterances) f << serialize_utterance(u) << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Redirection analysis of dyadic conversations"};
  app.set_version_flag("--version", std::string(redirect::kVersion));
  app.require_subcommand(1);

  Shared s;
  std::filesystem::path out_path;
  std::vector<double> n_values{10, 25, 50, 100, 200, 500, 1000};

  auto* ingest = app.add_subcommand("ingest", "Normalize a corpus into a directory");
  add_input(ingest, s, false);
  ingest->add_option("--out", out_path, "Output directory")->required();

  auto* sessions = app.add_subcommand("sessions", "Segment conversations into sessions");
  add_input(sessions, s);
  sessions->add_option("--out", out_path, "Sessions manifest (JSONL)")->required();

  auto* nsweep = app.add_subcommand("nsweep", "Session counts across split multipliers");
  add_input(nsweep, s);
  nsweep->add_option("--n", n_values, "Multipliers to sweep")->capture_default_str();
  nsweep->add_option("--out", out_path, "Sweep table (CSV)")->required();

  auto* train = app.add_subcommand("train-lm", "Train and save the n-gram scorer");
  add_input(train, s);
  add_scorer(train, s);
  train->add_option("--out", out_path, "Model file")->required();

  std::string synth_kind = "planted";
  std::size_t synth_conversations = 20;
  std::uint64_t synth_seed = 1;
  bool synth_labels = false;
  auto* synth = app.add_subcommand("synth", "Write a synthetic corpus");
  synth->add_option("--kind", synth_kind, "planted, greeting or sweep")
      ->check(CLI::IsMember({"planted", "greeting", "sweep"}))
      ->capture_default_str();
  synth->add_option("--conversations", synth_conversations)->capture_default_str();
  synth->add_option("--seed", synth_seed)->capture_default_str();
  synth->add_flag("--labels", synth_labels, "Attach outcome metadata (planted only)");
  synth->add_option("--out", out_path, "Output file (JSONL)")->required();

  struct Composite {
    const char* name;
    const char* help;
    std::set<Analysis> analyses;
  };
  const std::vector<Composite> composites = {
      {"score", "Score every utterance", {}},
      {"aggregate", "Session summaries and the role contrast", {Analysis::roles}},
      {"phases", "First vs last sessions", {Analysis::phase}},
      {"cohorts", "Unsuccessful vs control relationships", {Analysis::cohort}},
      {"shuffle-test", "Actual vs within-session shuffled scores", {Analysis::shuffle}},
      {"fightin", "Distinguishing words at session boundaries and by redirection",
       {Analysis::fightin}},
      {"pairs", "Highest / lowest redirection excerpts", {Analysis::pairs}},
      {"run", "Full pipeline", all_analyses()},
  };
  std::map<CLI::App*, const Composite*> composite_of;
  for (const auto& c : composites) {
    auto* sub = app.add_subcommand(c.name, c.help);
    add_input(sub, s);
    add_scorer(sub, s);
    add_analysis(sub, s);
    if (std::string(c.name) == "run")
      sub->add_option("--analysis", s.analyses,
                      "shuffle, phase, cohort, roles, fightin, pairs, measures or all");
    composite_of[sub] = &c;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  CLI::App* chosen = app.get_subcommands().front();
  try {
    if (auto it = composite_of.find(chosen); it != composite_of.end()) {
      s.run.analyses = it->second->analyses;
      finalize(chosen, s);
      return run(s.run, std::cerr);
    }
    if (chosen == synth)
      return cmd_synth(synth_kind, synth_conversations, synth_seed, synth_labels, out_path);
    finalize(chosen, s);
    if (!std::filesystem::is_regular_file(s.run.input.corpus))
      throw ConfigError("corpus not found: " + s.run.input.corpus.string());
    if (!s.run.input.mapping.empty() && !std::filesystem::is_regular_file(s.run.input.mapping))
      throw ConfigError("mapping file not found: " + s.run.input.mapping.string());
    segmentation_config(s.run.input).validate();
    if (chosen == ingest) return cmd_ingest(s, out_path);
    if (chosen == sessions) return cmd_sessions(s, out_path);
    if (chosen == nsweep) return cmd_nsweep(s, n_values, out_path);
    if (chosen == train) {
      s.run.scorer.ngram.validate();
      return cmd_train(s, out_path);
    }
  } catch (const ConfigError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitAnalysis;
  }
  return kExitUsage;
}
