#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace slu {

// Structured (domain, intent?, arguments) record.
struct SemanticFrame {
  std::string domain;
  std::optional<std::string> intent;
  std::vector<std::pair<std::string, std::string>> args;  // (label, value)

  bool operator==(const SemanticFrame& other) const = default;
  std::string debug_str() const;
};

enum class TokenClass {
  control,      // sos / eos / pad
  grapheme,
  domain_tag,   // <DOMAIN>
  intent_tag,   // <INTENT>
  domain_name,  // <PRODUCTIVITY> ...
  intent_name,  // <SET_ALARM> ...
  arg_label,    // <DATETIME>, <SUBJECT>
};

const char* token_class_name(TokenClass c);
TokenClass token_class_from_name(const std::string& s);

// Bidirectional token<->id map mixing graphemes with single-token semantic
// tags. Ordering is deterministic and part of the checkpoint contract.
class Vocab {
 public:
  static Vocab build(const std::vector<std::string>& domains,
                     const std::vector<std::string>& intents,
                     const std::vector<std::string>& arg_labels);

  int id(const std::string& token) const;       // throws on unknown
  int find(const std::string& token) const;     // -1 on unknown
  const std::string& token(int id) const;
  TokenClass token_class(int id) const;
  int size() const { return static_cast<int>(tokens_.size()); }

  int pad() const { return pad_; }
  int sos() const { return sos_; }
  int eos() const { return eos_; }
  int domain_tag() const { return domain_tag_; }
  int intent_tag() const { return intent_tag_; }

  bool is_semantic_tag(int id) const;  // domain/intent tag or arg label

  // Grapheme helpers: transcripts are single characters, one token each.
  std::vector<int> encode_graphemes(const std::string& text) const;
  static const std::string& grapheme_set();

  // Rendered-text forms used by corpus/decode files: tags appear as
  // "<NAME>", graphemes as their character.
  std::string render(const std::vector<int>& ids) const;
  std::vector<int> parse_rendered(const std::string& text) const;

  // One token per line, "token<TAB>class"; line number == id. Bit-exact.
  void save(const std::string& path) const;
  static Vocab load(const std::string& path);

  bool operator==(const Vocab& other) const;

 private:
  void add(const std::string& token, TokenClass cls);
  std::vector<std::string> tokens_;
  std::vector<TokenClass> classes_;
  std::map<std::string, int> index_;
  int pad_ = -1, sos_ = -1, eos_ = -1, domain_tag_ = -1, intent_tag_ = -1;
};

// Serializes a frame to token ids: <DOMAIN> <dom> [<INTENT> <int>] then per
// argument <LABEL> followed by a space and the value graphemes.
std::vector<int> serialize(const SemanticFrame& frame, const Vocab& vocab);

struct DeserializeResult {
  SemanticFrame frame;
  std::vector<std::string> diagnostics;
  bool clean() const { return diagnostics.empty(); }
};

// Total function over arbitrary model output; order-agnostic in the special
// tags. Unparseable input falls back to the NONE domain with diagnostics.
DeserializeResult deserialize(const std::vector<int>& tokens,
                              const Vocab& vocab,
                              const std::string& fallback_domain = "NONE");

// Splits a joint-model output at the first semantic-tag token.
std::pair<std::vector<int>, std::vector<int>> split_joint_output(
    const std::vector<int>& tokens, const Vocab& vocab);

// Collapse runs of whitespace and trim; values are compared word-wise.
std::string normalize_value(const std::string& s);

}  // namespace slu
