#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "slu/rng.hpp"
#include "slu/semantics.hpp"

namespace slu {

// One carrier-phrase template, e.g. "can you set an alarm for {DATETIME}".
// Slots reference filler lists by label; expanding a template yields a
// transcript plus the frame (domain, intent, slot values in slot order).
struct Template {
  std::string domain;
  std::optional<std::string> intent;
  std::string pattern;                // literal text with {LABEL} slots
  std::vector<std::string> slots() const;
};

// Finite, unambiguous context-free grammar over a fixed set of domains,
// intents and two argument sub-grammars. Used three ways: sampling training
// utterances, labeling transcripts (cfg_parse), and enumerating the full
// expansion space for exhaustive checks.
class Grammar {
 public:
  static Grammar builtin_default();
  static Grammar load(const std::string& path);
  void save(const std::string& path) const;

  const std::vector<std::string>& domains() const { return domains_; }
  const std::map<std::string, double>& domain_weights() const { return weights_; }
  const std::vector<Template>& templates() const { return templates_; }
  const std::map<std::string, std::vector<std::string>>& fillers() const {
    return fillers_;
  }
  std::vector<std::string> intent_names() const;
  std::vector<std::string> arg_labels() const;

  // Vocabulary induced by this grammar (graphemes + tags + names).
  Vocab make_vocab() const;

  struct Expansion {
    std::string transcript;
    SemanticFrame frame;
  };
  // Every derivable (transcript, frame) pair. Finite by construction.
  std::vector<Expansion> enumerate_all() const;

  // Samples one utterance: domain by weight, then uniform template and
  // uniform filler values.
  Expansion sample(Rng& rng) const;

  // Frame of the unique derivation of `transcript`, or the NONE fallback
  // frame when the transcript is out of grammar. Total and deterministic.
  SemanticFrame parse(const std::string& transcript) const;

  // Throws if any transcript is derivable with two distinct frames.
  void check_unambiguous() const;

 private:
  static Grammar parse_text(const std::string& text);
  void validate_and_index();
  void build_parse_index() const;
  std::vector<std::string> domains_;
  std::map<std::string, double> weights_;
  std::vector<Template> templates_;
  std::map<std::string, std::vector<std::string>> fillers_;
  mutable std::map<std::string, SemanticFrame> parse_index_;
};

}  // namespace slu
