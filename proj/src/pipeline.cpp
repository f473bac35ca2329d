#include "redirect/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "redirect/error.hpp"
#include "redirect/random.hpp"
#include "redirect/table.hpp"
#include "redirect/tfidf.hpp"

namespace redirect {
namespace {

using nlohmann::json;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

void require_file(const std::filesystem::path& p, std::string_view what) {
  if (!p.empty() && !std::filesystem::is_regular_file(p))
    throw ConfigError(std::string(what) + " not found: " + p.string());
}

std::string_view merge_name(MergeMode m) {
  return m == MergeMode::within_burst ? "within_burst" : "before_split";
}

std::string n_field(const TestResult& r) {
  return r.n_y ? std::to_string(r.n) + "/" + std::to_string(r.n_y) : std::to_string(r.n);
}

// Mean of scored redirection-like values per session, keyed by position in
// the analysis corpus.
std::vector<double> session_means(const std::vector<ScoredConversation>& scores, Measure m) {
  std::vector<double> out;
  for (const auto& conv : scores)
    for (const auto& session : conv.sessions) {
      double sum = 0.0;
      std::size_t n = 0;
      for (const auto& s : session)
        if (auto v = measure_value(s, m)) {
          sum += *v;
          ++n;
        }
      out.push_back(n ? sum / static_cast<double>(n) : kNaN);
    }
  return out;
}

bool has_outcome_labels(const SegmentedCorpus& corpus) {
  return std::any_of(corpus.conversations.begin(), corpus.conversations.end(),
                     [](const SegmentedConversation& c) { return c.outcome || c.outcome_reason; });
}

std::vector<Measure> active_measures(const RunConfig& cfg) {
  std::vector<Measure> m{Measure::redirection};
  if (cfg.measures.similarity) m.push_back(Measure::similarity_difference);
  if (cfg.measures.dependence) m.push_back(Measure::dependence);
  if (!cfg.orientation.empty()) m.push_back(Measure::orientation);
  return m;
}

std::string direction_of(const TestResult& r, double alpha) {
  if (r.p_value >= alpha) return "none";
  const double mean = r.n_y ? static_cast<double>(r.n * r.n_y) / 2.0
                            : static_cast<double>(r.n * (r.n + 1)) / 4.0;
  // First minus last: a large W+ means values fell over time.
  return r.statistic > mean ? "down" : "up";
}

struct Outputs {
  std::filesystem::path dir;
  std::vector<std::string> written;

  std::ofstream open(const std::string& name) {
    written.push_back(name);
    return open_output(dir / name);
  }
};

}  // namespace

std::string_view analysis_name(Analysis a) {
  switch (a) {
    case Analysis::shuffle: return "shuffle";
    case Analysis::phase: return "phase";
    case Analysis::cohort: return "cohort";
    case Analysis::roles: return "roles";
    case Analysis::fightin: return "fightin";
    case Analysis::pairs: return "pairs";
    case Analysis::measures: return "measures";
  }
  return "";
}

std::optional<Analysis> parse_analysis(std::string_view s) {
  for (Analysis a : all_analyses())
    if (analysis_name(a) == s) return a;
  return std::nullopt;
}

std::set<Analysis> all_analyses() {
  return {Analysis::shuffle, Analysis::phase,   Analysis::cohort,  Analysis::roles,
          Analysis::fightin, Analysis::pairs,   Analysis::measures};
}

void RunConfig::validate() const {
  if (input.corpus.empty()) throw ConfigError("a corpus path is required");
  require_file(input.corpus, "corpus");
  require_file(input.mapping, "mapping file");
  require_file(input.automated, "automated-message patterns");
  require_file(orientation, "orientation file");
  require_file(scorer.model, "model file");
  require_file(scorer.train_corpus, "training corpus");
  if (out_dir.empty()) throw ConfigError("an output directory is required");
  segmentation_config(input).validate();
  if (scorer.backend == Backend::ngram) {
    if (scorer.model.empty()) scorer.ngram.validate();
  } else {
    if (scorer.remote.endpoint.empty())
      throw ConfigError("remote backend needs an endpoint (flag or REDIRECT_SCORER_URL)");
    if (!scorer.model.empty() || !scorer.train_corpus.empty())
      throw ConfigError("model and training options apply to the ngram backend only");
  }
  if (!(scorer.heldout_fraction >= 0.0 && scorer.heldout_fraction < 1.0))
    throw ConfigError("heldout fraction must be in [0, 1)");
  if (!scorer.train_corpus.empty() && scorer.heldout_fraction > 0.0)
    throw ConfigError("use either a training corpus or a heldout fraction");
  const bool sampling = analyses.count(Analysis::shuffle) || analyses.count(Analysis::cohort);
  if (sampling && !seed) throw ConfigError("shuffle and cohort analyses require --seed");
  if (analyses.count(Analysis::phase) || analyses.count(Analysis::measures)) {
    if (phase_k < 1) throw ConfigError("phase k must be at least 1");
    if (phase_min_sessions < 2 * phase_k) throw ConfigError("min_sessions must be at least 2k");
  }
  if (bootstrap_resamples == 0) throw ConfigError("bootstrap needs at least one resample");
  if (!(bootstrap_level > 0.0 && bootstrap_level < 1.0))
    throw ConfigError("bootstrap level must be in (0, 1)");
  if (!(significance > 0.0 && significance < 1.0)) throw ConfigError("significance must be in (0, 1)");
  if (fightin_ngram_max != 1 && fightin_ngram_max != 2) throw ConfigError("ngram_max must be 1 or 2");
  if (!(fightin_alpha0 > 0.0)) throw ConfigError("alpha_0 must be positive");
}

std::string config_json(const RunConfig& cfg) {
  json j;
  j["input"] = {{"corpus", cfg.input.corpus.string()},
                {"mapping", cfg.input.mapping.string()},
                {"automated", cfg.input.automated.string()},
                {"n_multiplier", cfg.input.n_multiplier},
                {"min_turns", cfg.input.min_turns},
                {"merge", merge_name(cfg.input.merge)},
                {"drop_video_bursts", cfg.input.drop_video_bursts}};
  json scorer;
  scorer["backend"] = cfg.scorer.backend == Backend::ngram ? "ngram" : "remote";
  if (cfg.scorer.backend == Backend::ngram) {
    scorer["model"] = cfg.scorer.model.string();
    scorer["train_corpus"] = cfg.scorer.train_corpus.string();
    scorer["order"] = cfg.scorer.ngram.order;
    scorer["discount"] = cfg.scorer.ngram.discount;
    scorer["min_count"] = cfg.scorer.ngram.min_count;
    scorer["context_weight"] = cfg.scorer.ngram.context_weight;
    scorer["context_decay"] = cfg.scorer.ngram.context_decay;
    scorer["tune_context_weight"] = cfg.scorer.ngram.tune_context_weight;
  } else {
    scorer["endpoint"] = cfg.scorer.remote.endpoint;
    scorer["model"] = cfg.scorer.remote.model;
  }
  scorer["heldout_fraction"] = cfg.scorer.heldout_fraction;
  j["scorer"] = scorer;
  j["measures"] = {{"similarity", cfg.measures.similarity},
                   {"dependence", cfg.measures.dependence},
                   {"orientation", cfg.orientation.string()}};
  std::vector<std::string> analyses;
  for (Analysis a : cfg.analyses) analyses.emplace_back(analysis_name(a));
  j["analyses"] = analyses;
  j["seed"] = cfg.seed ? json(*cfg.seed) : json(nullptr);
  j["phase"] = {{"k", cfg.phase_k}, {"min_sessions", cfg.phase_min_sessions}};
  j["cohort"] = {{"codes", cfg.cohort.unsuccessful_codes},
                 {"min_sessions", cfg.cohort.min_sessions},
                 {"first_k", cfg.cohort.first_k}};
  j["tests"] = {{"alternative", alternative_name(cfg.alternative)},
                {"zeros", cfg.zeros == ZeroHandling::wilcox ? "wilcox" : "pratt"},
                {"shuffle_mode", cfg.shuffle_mode == ShuffleMode::within_role ? "within_role"
                                                                             : "cross_role"},
                {"bootstrap_resamples", cfg.bootstrap_resamples},
                {"bootstrap_level", cfg.bootstrap_level},
                {"significance", cfg.significance}};
  j["fightin"] = {{"ngram_max", cfg.fightin_ngram_max},
                  {"alpha_0", cfg.fightin_alpha0},
                  {"top_k", cfg.fightin_top_k}};
  return j.dump();
}

std::string config_hash(const RunConfig& cfg) { return hex64(fnv1a64(config_json(cfg))); }

SegmentationConfig segmentation_config(const InputOptions& opts) {
  SegmentationConfig cfg;
  cfg.n_multiplier = opts.n_multiplier;
  cfg.min_turns = opts.min_turns;
  cfg.merge = opts.merge;
  cfg.drop_video_bursts = opts.drop_video_bursts;
  if (!opts.automated.empty()) cfg.automated = AutomatedFilter::from_file(opts.automated);
  return cfg;
}

Corpus load_input(const InputOptions& opts) {
  const FieldMapping mapping =
      opts.mapping.empty() ? FieldMapping::identity() : FieldMapping::from_file(opts.mapping);
  return load_corpus(opts.corpus, mapping);
}

Split split_corpus(const SegmentedCorpus& corpus, double heldout_fraction) {
  Split split;
  if (heldout_fraction <= 0.0) {
    split.analysis = corpus;
    split.training = corpus;
    return split;
  }
  split.analysis.skipped_conversations = corpus.skipped_conversations;
  const auto cut = static_cast<std::uint64_t>(std::llround(heldout_fraction * 10000.0));
  for (const auto& conv : corpus.conversations) {
    const bool train = fnv1a64("split:" + conv.conversation_id) % 10000 < cut;
    (train ? split.training : split.analysis).conversations.push_back(conv);
  }
  return split;
}

std::unique_ptr<Scorer> make_scorer(const ScorerOptions& opts, const InputOptions& input,
                                    const SegmentedCorpus& fallback_training) {
  if (opts.backend == Backend::remote) return std::make_unique<RemoteScorer>(opts.remote);
  if (!opts.model.empty()) return std::make_unique<NGramModel>(NGramModel::load(opts.model));
  if (!opts.train_corpus.empty()) {
    InputOptions train_input = input;
    train_input.corpus = opts.train_corpus;
    const auto segmented = segment_corpus(load_input(train_input), segmentation_config(train_input),
                                          input.workers);
    return std::make_unique<NGramModel>(train_ngram(segmented, opts.ngram));
  }
  return std::make_unique<NGramModel>(train_ngram(fallback_training, opts.ngram));
}

void write_sessions_manifest(std::ostream& out, const SegmentedCorpus& corpus) {
  for (const auto& conv : corpus.conversations)
    for (const auto& s : conv.sessions) {
      json j;
      j["conversation_id"] = s.conversation_id;
      j["session_index"] = s.index;
      std::vector<std::string> ids;
      for (const auto& u : s.utterances) ids.push_back(u.id);
      j["utterance_ids"] = ids;
      j["turn_count"] = s.covariates.turn_count;
      j["token_count"] = s.covariates.token_count_total;
      j["median_token_count"] = s.covariates.median_token_count;
      out << j.dump() << '\n';
    }
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  CsvWriter csv(out);
  csv.row({"n", "mean_sessions", "median_sessions", "stdev_sessions"});
  for (const auto& r : rows)
    csv.row({format_number(r.n), format_number(r.mean_sessions), format_number(r.median_sessions),
             format_number(r.stdev_sessions)});
}

void write_scores_jsonl(std::ostream& out, const std::vector<ScoredConversation>& scores) {
  for (const auto& conv : scores)
    for (const auto& session : conv.sessions)
      for (const auto& s : session) {
        json j;
        j["conversation_id"] = s.conversation_id;
        j["session_index"] = s.session_index;
        j["position"] = s.position;
        j["utterance_id"] = s.utterance_id;
        j["role"] = std::string(1, role_char(s.role));
        j["unscored"] = !s.scored;
        j["p"] = s.scored ? json(s.p_likelihood) : json(nullptr);
        j["q"] = s.scored ? json(s.q_likelihood) : json(nullptr);
        j["redirection"] = s.scored ? json(s.redirection) : json(nullptr);
        if (s.similarity_difference) {
          j["similarity_difference"] = *s.similarity_difference;
          j["similarity_degenerate"] = s.similarity_degenerate;
        }
        if (s.dependence) j["dependence"] = *s.dependence;
        if (s.orientation) j["orientation"] = *s.orientation;
        out << j.dump() << '\n';
      }
}

void write_session_summaries_csv(std::ostream& out, Measure measure,
                                 const std::vector<ConversationSummaries>& summaries,
                                 bool header) {
  CsvWriter csv(out);
  if (header)
    csv.row({"measure", "conversation_id", "session_index", "t_avg", "c_avg", "t_rel", "c_rel",
             "n_scored_a", "n_scored_b", "partial", "turn_count", "token_count"});
  for (const auto& conv : summaries)
    for (const auto& s : conv.sessions)
      csv.row({std::string(measure_name(measure)), s.conversation_id,
               format_number(s.session_index), format_number(s.t_avg), format_number(s.c_avg),
               format_number(s.t_rel), format_number(s.c_rel), format_number(s.n_scored_a),
               format_number(s.n_scored_b), s.partial ? "1" : "0", format_number(s.turn_count),
               format_number(s.token_count)});
}

void write_phases_csv(std::ostream& out, Measure measure, const std::vector<PhaseRow>& rows,
                      bool header) {
  CsvWriter csv(out);
  if (header)
    csv.row({"measure", "conversation_id", "session_count", "a_avg_first", "a_avg_last",
             "b_avg_first", "b_avg_last", "a_rel_first", "a_rel_last", "b_rel_first",
             "b_rel_last"});
  for (const auto& r : rows)
    csv.row({std::string(measure_name(measure)), r.conversation_id, format_number(r.session_count),
             format_number(r.a_avg_first), format_number(r.a_avg_last),
             format_number(r.b_avg_first), format_number(r.b_avg_last),
             format_number(r.a_rel_first), format_number(r.a_rel_last),
             format_number(r.b_rel_first), format_number(r.b_rel_last)});
}

void write_contrast_csv(std::ostream& out, const std::vector<TermContrast>& table,
                        std::size_t top_k) {
  CsvWriter csv(out);
  csv.row({"term", "delta", "z", "count_1", "count_2"});
  auto emit = [&](const TermContrast& t) {
    csv.row({t.term, format_number(t.delta), format_number(t.z), format_number(t.count_1),
             format_number(t.count_2)});
  };
  if (top_k == 0 || 2 * top_k >= table.size()) {
    for (const auto& t : table) emit(t);
    return;
  }
  for (std::size_t i = 0; i < top_k; ++i) emit(table[i]);
  for (std::size_t i = table.size() - top_k; i < table.size(); ++i) emit(table[i]);
}

void write_pairs_jsonl(std::ostream& out, const std::vector<ExtremePair>& pairs) {
  auto excerpt = [](const Excerpt& e) {
    json j;
    j["session_index"] = e.session_index;
    j["position"] = e.position;
    j["redirection"] = e.redirection;
    json utts = json::array();
    for (const auto& u : e.utterances)
      utts.push_back({{"id", u.id}, {"role", std::string(1, role_char(u.role))}, {"text", u.text}});
    j["utterances"] = utts;
    return j;
  };
  for (const auto& p : pairs) {
    json j;
    j["conversation_id"] = p.highest.conversation_id;
    j["highest"] = excerpt(p.highest);
    j["lowest"] = excerpt(p.lowest);
    out << j.dump() << '\n';
  }
}

void write_tests_csv(std::ostream& out, const std::vector<TestRow>& rows) {
  CsvWriter csv(out);
  csv.row({"analysis", "group_a", "group_b", "statistic", "p_value", "method", "n"});
  for (const auto& r : rows)
    csv.row({r.analysis, r.group_a, r.group_b, format_number(r.result.statistic),
             format_number(r.result.p_value), std::string(method_name(r.result.method)),
             n_field(r.result)});
}

std::optional<TestResult> phase_test(const std::vector<PhaseRow>& rows, bool role_a, bool relative,
                                     Alternative alt, ZeroHandling zeros) {
  std::vector<double> diffs;
  for (const auto& r : rows) {
    const double first = relative ? (role_a ? r.a_rel_first : r.b_rel_first)
                                  : (role_a ? r.a_avg_first : r.b_avg_first);
    const double last = relative ? (role_a ? r.a_rel_last : r.b_rel_last)
                                 : (role_a ? r.a_avg_last : r.b_avg_last);
    if (std::isnan(first) || std::isnan(last)) continue;
    diffs.push_back(first - last);
  }
  if (diffs.empty()) return std::nullopt;
  try {
    return wilcoxon_signed_rank(std::span<const double>(diffs), alt, zeros);
  } catch (const DegenerateInputError&) {
    return std::nullopt;
  }
}

namespace {

struct RunState {
  const RunConfig& cfg;
  std::ostream& log;
  Outputs out;
  json manifest;
  std::vector<std::string> warnings;
  std::vector<TestRow> tests;

  void warn(std::string msg) {
    log << "warning: " << msg << '\n';
    warnings.push_back(std::move(msg));
  }
};

// Phase tests of one measure, appended to `tests` under `label`; returns
// them keyed by "average.A" etc. for the comparison table.
std::map<std::string, TestResult> run_phase_tests(RunState& st, const std::string& label,
                                                  const std::vector<PhaseRow>& rows) {
  std::map<std::string, TestResult> found;
  for (bool relative : {false, true})
    for (bool role_a : {true, false}) {
      const std::string kind = relative ? "balance" : "average";
      const std::string role = role_a ? "A" : "B";
      auto r = phase_test(rows, role_a, relative, st.cfg.alternative, st.cfg.zeros);
      if (!r) continue;
      st.tests.push_back({label + "_" + kind, role + "_first", role + "_last", *r});
      found[kind + "." + role] = *r;
    }
  return found;
}

void run_pipeline(RunState& st) {
  const RunConfig& cfg = st.cfg;
  const unsigned workers = std::max(1u, cfg.input.workers);

  const Corpus corpus = load_input(cfg.input);
  for (const auto& w : corpus.report.warnings) st.warn(w);
  const SegmentedCorpus segmented =
      segment_corpus(corpus, segmentation_config(cfg.input), workers);
  Split split = split_corpus(segmented, cfg.scorer.heldout_fraction);
  const SegmentedCorpus& analysis = split.analysis;

  st.manifest["counts"] = {{"records", corpus.report.records},
                           {"conversations", corpus.conversations.size()},
                           {"utterances", corpus.utterance_count()},
                           {"dropped_unmapped_speaker", corpus.report.dropped_unmapped_speaker},
                           {"dropped_empty_text", corpus.report.dropped_empty_text},
                           {"skipped_short_conversations",
                            corpus.report.skipped_short_conversations},
                           {"sessions", segmented.total_sessions()},
                           {"analysis_conversations", analysis.conversations.size()},
                           {"analysis_sessions", analysis.total_sessions()},
                           {"training_conversations", split.training.conversations.size()}};
  {
    auto f = st.out.open("sessions.jsonl");
    write_sessions_manifest(f, analysis);
  }
  if (analysis.total_sessions() == 0) throw DegenerateInputError("no valid sessions to analyze");

  const auto scorer = make_scorer(cfg.scorer, cfg.input, split.training);
  st.manifest["scorer_model"] = scorer->model_id();
  const TfIdfEmbedder embedder = TfIdfEmbedder::fit(split.training);
  std::unordered_map<std::string, double> orientation;
  if (!cfg.orientation.empty()) orientation = load_orientation(cfg.orientation);

  auto score = [&](const SegmentedCorpus& c) {
    auto s = score_corpus(c, *scorer, &embedder, cfg.measures, workers);
    if (!orientation.empty()) attach_orientation(s, orientation);
    return s;
  };
  const auto scores = score(analysis);
  std::size_t scored = 0;
  std::size_t unscored = 0;
  for (const auto& conv : scores)
    for (const auto& session : conv.sessions)
      for (const auto& s : session) (s.scored ? scored : unscored)++;
  st.manifest["counts"]["scored_utterances"] = scored;
  st.manifest["counts"]["unscored_utterances"] = unscored;
  {
    auto f = st.out.open("scores.jsonl");
    write_scores_jsonl(f, scores);
  }

  const auto measures = active_measures(cfg);
  std::map<Measure, std::vector<ConversationSummaries>> summaries;
  {
    auto f = st.out.open("session_summaries.csv");
    bool header = true;
    for (Measure m : measures) {
      summaries[m] = summarize(analysis, scores, m);
      write_session_summaries_csv(f, m, summaries[m], header);
      header = false;
    }
  }

  const auto& A = cfg.analyses;
  const bool want_phase = A.count(Analysis::phase) || A.count(Analysis::measures);
  const bool want_shuffle = A.count(Analysis::shuffle);
  const bool want_cohort = A.count(Analysis::cohort);

  // Role contrast: A vs B session averages, complete sessions only.
  if (A.count(Analysis::roles)) {
    for (Measure m : measures) {
      std::vector<std::pair<double, double>> pairs;
      for (const auto& conv : summaries[m])
        for (const auto& s : conv.sessions)
          if (!s.partial) pairs.emplace_back(s.t_avg, s.c_avg);
      if (pairs.empty()) {
        st.warn("roles: no complete sessions for " + std::string(measure_name(m)));
        continue;
      }
      try {
        st.tests.push_back({"roles_" + std::string(measure_name(m)), "A", "B",
                            wilcoxon_signed_rank(std::span<const std::pair<double, double>>(pairs),
                                                 cfg.alternative, cfg.zeros)});
      } catch (const DegenerateInputError& e) {
        st.warn("roles: " + std::string(e.what()));
      }
    }
  }

  std::map<Measure, std::map<std::string, TestResult>> phase_results;
  if (want_phase) {
    auto f = st.out.open("phases.csv");
    bool header = true;
    for (Measure m : measures) {
      const auto rows = phase_slices(summaries[m], cfg.phase_k, cfg.phase_min_sessions);
      write_phases_csv(f, m, rows, header);
      header = false;
      phase_results[m] = run_phase_tests(st, "phase_" + std::string(measure_name(m)), rows);
    }
  }

  std::map<Measure, std::map<std::string, TestResult>> shuffled_phase_results;
  if (want_shuffle) {
    const auto shuffled = shuffle_corpus(analysis, derive_seed(*cfg.seed, "shuffle"),
                                         cfg.shuffle_mode);
    const auto shuffled_scores = score(shuffled);
    {
      auto f = st.out.open("shuffled_scores.jsonl");
      write_scores_jsonl(f, shuffled_scores);
    }
    auto sessions_csv = st.out.open("shuffle_sessions.csv");
    CsvWriter sessions(sessions_csv);
    sessions.row({"measure", "conversation_id", "session_index", "actual_mean", "shuffled_mean"});
    auto summary_csv = st.out.open("shuffle_summary.csv");
    CsvWriter summary(summary_csv);
    summary.row({"measure", "sessions", "mean_actual", "mean_shuffled", "shuffled_ci_lo",
                 "shuffled_ci_hi"});
    for (Measure m : measures) {
      const auto actual = session_means(scores, m);
      const auto shuffled_means = session_means(shuffled_scores, m);
      std::vector<double> a, s;
      std::size_t k = 0;
      for (const auto& conv : analysis.conversations)
        for (const auto& session : conv.sessions) {
          sessions.row({std::string(measure_name(m)), conv.conversation_id,
                        format_number(session.index), format_number(actual[k]),
                        format_number(shuffled_means[k])});
          if (!std::isnan(actual[k]) && !std::isnan(shuffled_means[k])) {
            a.push_back(actual[k]);
            s.push_back(shuffled_means[k]);
          }
          ++k;
        }
      if (a.empty()) {
        st.warn("shuffle: no sessions with values for " + std::string(measure_name(m)));
        continue;
      }
      const auto ci = bootstrap_ci(s, cfg.bootstrap_resamples, cfg.bootstrap_level,
                                   derive_seed(*cfg.seed, "bootstrap-" + std::string(measure_name(m))),
                                   workers);
      summary.row({std::string(measure_name(m)), format_number(a.size()), format_number(mean(a)),
                   format_number(mean(s)), format_number(ci.first), format_number(ci.second)});
      std::vector<double> d(a.size());
      for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - s[i];
      try {
        st.tests.push_back({"shuffle_" + std::string(measure_name(m)), "actual", "shuffled",
                            wilcoxon_signed_rank(std::span<const double>(d), cfg.alternative,
                                                 cfg.zeros)});
      } catch (const DegenerateInputError& e) {
        st.warn("shuffle: " + std::string(e.what()));
      }
    }
    if (want_phase) {
      const auto shuffled_summaries_all = [&] {
        std::map<Measure, std::vector<ConversationSummaries>> out;
        for (Measure m : measures) out[m] = summarize(shuffled, shuffled_scores, m);
        return out;
      }();
      for (Measure m : measures) {
        const auto rows =
            phase_slices(shuffled_summaries_all.at(m), cfg.phase_k, cfg.phase_min_sessions);
        shuffled_phase_results[m] =
            run_phase_tests(st, "phase_shuffled_" + std::string(measure_name(m)), rows);
      }
    }
  }

  std::map<Measure, std::map<std::string, TestResult>> cohort_results;
  if (want_cohort) {
    if (!has_outcome_labels(analysis)) {
      st.warn("cohort: corpus carries no outcome metadata; analysis skipped");
    } else {
      CohortConfig cc = cfg.cohort;
      cc.seed = *cfg.seed;
      const auto sel = cohort_filter(analysis, cc);
      for (const auto& w : sel.warnings) st.warn("cohort: " + w);
      {
        auto f = st.out.open("cohorts.csv");
        CsvWriter csv(f);
        csv.row({"conversation_id", "cohort"});
        std::vector<std::pair<std::string, std::string>> members;
        for (const auto& id : sel.unsuccessful) members.emplace_back(id, "unsuccessful");
        for (const auto& id : sel.control) members.emplace_back(id, "control");
        std::sort(members.begin(), members.end());
        for (const auto& [id, cohort] : members) csv.row({id, cohort});
      }
      const std::set<std::string> bad(sel.unsuccessful.begin(), sel.unsuccessful.end());
      const std::set<std::string> ctl(sel.control.begin(), sel.control.end());
      for (Measure m : measures)
        for (Role role : {Role::A, Role::B}) {
          std::vector<double> x, y;
          for (const auto& conv : summaries[m]) {
            const bool in_bad = bad.count(conv.conversation_id) > 0;
            if (!in_bad && !ctl.count(conv.conversation_id)) continue;
            const double v = early_role_mean(conv, role, cfg.cohort.first_k);
            if (std::isnan(v)) continue;
            (in_bad ? x : y).push_back(v);
          }
          const std::string r(1, role_char(role));
          if (x.empty() || y.empty()) {
            st.warn("cohort: empty group for " + std::string(measure_name(m)) + " role " + r);
            continue;
          }
          const auto res = mann_whitney_u(x, y, cfg.alternative);
          st.tests.push_back({"cohort_" + std::string(measure_name(m)), "unsuccessful_" + r,
                              "control_" + r, res});
          cohort_results[m][r] = res;
        }
    }
  }

  if (A.count(Analysis::fightin)) {
    std::vector<Session> sessions;
    for (const auto& conv : analysis.conversations)
      sessions.insert(sessions.end(), conv.sessions.begin(), conv.sessions.end());
    if (sessions.size() < 2) {
      st.warn("fightin: fewer than 2 sessions; boundary validation skipped");
    } else {
      const auto tables =
          boundary_validation(sessions, cfg.fightin_ngram_max, cfg.fightin_alpha0);
      auto first = st.out.open("fightin_first.csv");
      write_contrast_csv(first, tables.first, cfg.fightin_top_k);
      auto last = st.out.open("fightin_last.csv");
      write_contrast_csv(last, tables.last, cfg.fightin_top_k);
    }
    // High vs low redirection: focal texts in the top and bottom quartiles.
    std::vector<std::pair<double, std::string>> focal;
    for (std::size_t c = 0; c < scores.size(); ++c)
      for (std::size_t si = 0; si < scores[c].sessions.size(); ++si)
        for (const auto& s : scores[c].sessions[si])
          if (s.scored)
            focal.emplace_back(s.redirection,
                               analysis.conversations[c].sessions[si].utterances[s.position].text);
    std::stable_sort(focal.begin(), focal.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    const std::size_t quart = focal.size() / 4;
    std::vector<std::string> high, low;
    for (std::size_t i = 0; i < quart; ++i) {
      high.push_back(focal[i].second);
      low.push_back(focal[focal.size() - 1 - i].second);
    }
    const auto high_counts = term_counts(high, cfg.fightin_ngram_max);
    const auto low_counts = term_counts(low, cfg.fightin_ngram_max);
    if (high_counts.empty() || low_counts.empty()) {
      st.warn("fightin: too few scored utterances for the redirection contrast");
    } else {
      auto f = st.out.open("fightin_redirection.csv");
      write_contrast_csv(f, log_odds_z(high_counts, low_counts, cfg.fightin_alpha0),
                         cfg.fightin_top_k);
    }
  }

  if (A.count(Analysis::pairs)) {
    std::vector<ExtremePair> pairs;
    for (std::size_t c = 0; c < scores.size(); ++c) {
      try {
        pairs.push_back(extract_extreme_pairs(analysis.conversations[c], scores[c]));
      } catch (const DegenerateInputError&) {
      }
    }
    auto f = st.out.open("pairs.jsonl");
    write_pairs_jsonl(f, pairs);
  }

  if (A.count(Analysis::measures)) {
    auto f = st.out.open("measure_comparison.csv");
    CsvWriter csv(f);
    csv.row({"measure", "analysis", "role", "result", "p_value"});
    const double alpha = cfg.significance;
    for (Measure m : measures) {
      const std::string name(measure_name(m));
      for (std::string kind : {"average", "balance"})
        for (std::string r : {"B", "A"}) {
          auto& found = phase_results[m];
          auto it = found.find(kind + "." + r);
          if (it == found.end())
            csv.row({name, "start_end_" + kind, r, "not_run", ""});
          else
            csv.row({name, "start_end_" + kind, r, direction_of(it->second, alpha),
                     format_number(it->second.p_value)});
        }
      for (std::string r : {"B", "A"}) {
        auto actual = phase_results[m].find("average." + r);
        auto shuffled = shuffled_phase_results[m].find("average." + r);
        if (actual == phase_results[m].end() || shuffled == shuffled_phase_results[m].end()) {
          csv.row({name, "shuffle_removes_trend", r, "not_run", ""});
          continue;
        }
        const bool removed =
            actual->second.p_value < alpha && shuffled->second.p_value >= alpha;
        csv.row({name, "shuffle_removes_trend", r, removed ? "yes" : "no",
                 format_number(shuffled->second.p_value)});
      }
      for (std::string r : {"B", "A"}) {
        auto it = cohort_results[m].find(r);
        if (it == cohort_results[m].end())
          csv.row({name, "distinguishes_unsuccessful", r, "not_run", ""});
        else
          csv.row({name, "distinguishes_unsuccessful", r,
                   it->second.p_value < alpha ? "yes" : "no", format_number(it->second.p_value)});
      }
    }
  }

  auto f = st.out.open("tests.csv");
  write_tests_csv(f, st.tests);
}

}  // namespace

int run(const RunConfig& cfg, std::ostream& log) {
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    log << "usage error: " << e.what() << '\n';
    return kExitUsage;
  }
  std::filesystem::create_directories(cfg.out_dir);
  std::filesystem::remove(cfg.out_dir / "FAILED");

  RunState st{cfg, log, Outputs{cfg.out_dir, {}}, json::object(), {}, {}};
  st.manifest["version"] = std::string(kVersion);
  st.manifest["config_hash"] = config_hash(cfg);
  st.manifest["config"] = json::parse(config_json(cfg));

  int code = kExitOk;
  try {
    run_pipeline(st);
    st.manifest["status"] = "ok";
  } catch (const std::exception& e) {
    code = kExitAnalysis;
    log << "error: " << e.what() << '\n';
    st.manifest["status"] = "failed";
    st.manifest["error"] = e.what();
    try {
      write_file(cfg.out_dir / "FAILED", std::string(e.what()) + "\n");
    } catch (const std::exception&) {
    }
  }
  st.manifest["warnings"] = st.warnings;
  st.manifest["outputs"] = st.out.written;
  try {
    write_file(cfg.out_dir / "run_manifest.json", st.manifest.dump(2) + "\n");
  } catch (const std::exception& e) {
    log << "error: " << e.what() << '\n';
    code = kExitAnalysis;
  }
  return code;
}

}  // namespace redirect
