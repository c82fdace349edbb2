#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "slu/corpus.hpp"
#include "slu/grammar.hpp"
#include "slu/inference.hpp"
#include "slu/semantics.hpp"

namespace slu {

// Whitespace word tokenization (after value normalization).
std::vector<std::string> tokenize_words(const std::string& s);

struct EditCounts {
  int substitutions = 0;
  int insertions = 0;
  int deletions = 0;
  int total() const { return substitutions + insertions + deletions; }
};

// Minimal Levenshtein alignment over word sequences.
EditCounts word_edit_distance(const std::vector<std::string>& ref,
                              const std::vector<std::string>& hyp);

// (S+I+D)/len(ref), capped at 1 per instance; empty ref scores 1 against a
// non-empty hyp and 0 against an empty one.
double word_error_rate(const std::vector<std::string>& ref,
                       const std::vector<std::string>& hyp);

struct ClassStats {
  int tp = 0;
  int fp = 0;
  int fn = 0;
  double precision() const;
  double recall() const;
  double f1() const;
};

struct F1Report {
  std::map<std::string, ClassStats> per_class;
  double micro_precision = 0.0;
  double micro_recall = 0.0;
  double micro_f1 = 0.0;
};

// One-vs-rest per class plus micro-average; classes absent from both sides
// are omitted. Throws on length mismatch.
F1Report multiclass_f1(const std::vector<std::string>& refs,
                       const std::vector<std::string>& hyps);

struct ArgWerLabelStats {
  int matches = 0;        // present in both frames
  int misses = 0;         // ref only -> instance WER 1
  int over_triggers = 0;  // hyp only -> instance WER 1
  double wer_sum = 0.0;   // over scored instances
  int instances() const { return matches + misses + over_triggers; }
  double wer() const { return instances() ? wer_sum / instances() : 0.0; }
};

struct ArgWerReport {
  std::map<std::string, ArgWerLabelStats> per_label;
  double weighted_average = 0.0;  // instance-count weighted
  bool empty = true;              // no scored instances anywhere
};

// Frames aligned by position; per (utterance, label) instance scoring with
// the miss / over-trigger = 100% rule.
ArgWerReport argument_wer(const std::vector<SemanticFrame>& refs,
                          const std::vector<SemanticFrame>& hyps);

enum class EvalMode { end_to_end, transcript_plus_cfg };
const char* eval_mode_name(EvalMode m);
EvalMode eval_mode_from_name(const std::string& s);

struct EvalReport {
  EvalMode mode = EvalMode::end_to_end;
  int num_utterances = 0;
  // Absent when no decode record carries a transcript (direct models).
  std::optional<double> transcript_wer;
  F1Report domain;
  F1Report intent;  // frames without intent score as the class "(none)"
  ArgWerReport arguments;

  std::string to_text() const;
  std::string to_json() const;
  void save(const std::string& path) const;  // JSON record file
  static EvalReport from_json(const std::string& text);
  static EvalReport load(const std::string& path);
};

// Scores decode records against reference utterances, matched by id (every
// reference id must be covered). end_to_end scores the decoded frames;
// transcript_plus_cfg re-derives frames by CFG-parsing decoded transcripts.
EvalReport evaluate(const std::vector<DecodeRecord>& decodes,
                    const std::vector<Utterance>& references, EvalMode mode,
                    const Vocab& vocab, const Grammar& grammar);

}  // namespace slu
