#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "redirect/aggregate.hpp"
#include "redirect/corpus.hpp"
#include "redirect/fightin_words.hpp"
#include "redirect/measures.hpp"
#include "redirect/ngram.hpp"
#include "redirect/remote_scorer.hpp"
#include "redirect/segmentation.hpp"
#include "redirect/stats.hpp"

namespace redirect {

inline constexpr std::string_view kVersion = "0.1.0";

/// Exit codes of every subcommand.
enum ExitCode : int { kExitOk = 0, kExitAnalysis = 1, kExitUsage = 2 };

struct InputOptions {
  std::filesystem::path corpus;
  std::filesystem::path mapping;    // empty: identity mapping
  std::filesystem::path automated;  // empty: no automated-message filter
  double n_multiplier = 100.0;
  std::size_t min_turns = 4;
  MergeMode merge = MergeMode::within_burst;
  bool drop_video_bursts = false;
  unsigned workers = 1;
};

enum class Backend { ngram, remote };

struct ScorerOptions {
  Backend backend = Backend::ngram;
  std::filesystem::path model;         // load a saved n-gram model
  std::filesystem::path train_corpus;  // train on a separate corpus (same mapping)
  /// Share of conversations (chosen by id hash) held out for training and
  /// excluded from analysis. 0 trains on the analyzed corpus itself.
  double heldout_fraction = 0.0;
  NGramConfig ngram;
  RemoteScorerConfig remote;
};

enum class Analysis { shuffle, phase, cohort, roles, fightin, pairs, measures };

std::string_view analysis_name(Analysis a);
std::optional<Analysis> parse_analysis(std::string_view s);
std::set<Analysis> all_analyses();

struct RunConfig {
  InputOptions input;
  ScorerOptions scorer;
  MeasureOptions measures{true, true};
  std::filesystem::path orientation;  // optional side file
  std::set<Analysis> analyses = all_analyses();
  std::optional<std::uint64_t> seed;
  std::size_t phase_k = 5;
  std::size_t phase_min_sessions = 10;
  CohortConfig cohort;
  ShuffleMode shuffle_mode = ShuffleMode::within_role;
  Alternative alternative = Alternative::two_sided;
  ZeroHandling zeros = ZeroHandling::wilcox;
  std::size_t bootstrap_resamples = 1000;
  double bootstrap_level = 0.95;
  double significance = 0.05;
  int fightin_ngram_max = 1;
  double fightin_alpha0 = 500.0;
  std::size_t fightin_top_k = 50;  // per end of each table; 0 keeps all
  std::filesystem::path out_dir;

  /// Throws ConfigError for inconsistent settings (e.g. a sampling analysis
  /// without a seed).
  void validate() const;
};

/// Canonical JSON of the configuration and its FNV-1a hash (hex).
std::string config_json(const RunConfig& cfg);
std::string config_hash(const RunConfig& cfg);

// Stages shared by the subcommands.

Corpus load_input(const InputOptions& opts);
SegmentationConfig segmentation_config(const InputOptions& opts);

struct Split {
  SegmentedCorpus analysis;
  SegmentedCorpus training;
};

/// Deterministic id-hash split; with fraction 0 both halves are the input.
Split split_corpus(const SegmentedCorpus& corpus, double heldout_fraction);

/// Builds the scorer: loads the model file, trains on the training corpus
/// option, or trains on `fallback_training`.
std::unique_ptr<Scorer> make_scorer(const ScorerOptions& opts, const InputOptions& input,
                                    const SegmentedCorpus& fallback_training);

// Writers.

void write_sessions_manifest(std::ostream& out, const SegmentedCorpus& corpus);
void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows);
void write_scores_jsonl(std::ostream& out, const std::vector<ScoredConversation>& scores);
void write_session_summaries_csv(std::ostream& out, Measure measure,
                                 const std::vector<ConversationSummaries>& summaries,
                                 bool header = true);
void write_phases_csv(std::ostream& out, Measure measure, const std::vector<PhaseRow>& rows,
                      bool header = true);
void write_contrast_csv(std::ostream& out, const std::vector<TermContrast>& table,
                        std::size_t top_k);
void write_pairs_jsonl(std::ostream& out, const std::vector<ExtremePair>& pairs);

struct TestRow {
  std::string analysis;
  std::string group_a;
  std::string group_b;
  TestResult result;
};
void write_tests_csv(std::ostream& out, const std::vector<TestRow>& rows);

/// Paired first-k vs last-k test of one phase column. Rows with a missing
/// value on either side are left out; nullopt when nothing remains or every
/// difference is zero.
std::optional<TestResult> phase_test(const std::vector<PhaseRow>& rows, bool role_a, bool relative,
                                     Alternative alt, ZeroHandling zeros);

/// Full pipeline into cfg.out_dir. Returns an exit code; on analysis
/// failure the partial outputs stay next to a FAILED marker. The run
/// manifest is written in every case where the output directory exists.
int run(const RunConfig& cfg, std::ostream& log);

}  // namespace redirect
