#include "slu/semantics.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace slu {

std::string SemanticFrame::debug_str() const {
  std::ostringstream os;
  os << domain;
  if (intent) os << '/' << *intent;
  for (const auto& [label, value] : args) os << ' ' << label << "=\"" << value << '"';
  return os.str();
}

const char* token_class_name(TokenClass c) {
  switch (c) {
    case TokenClass::control: return "control";
    case TokenClass::grapheme: return "grapheme";
    case TokenClass::domain_tag: return "domain_tag";
    case TokenClass::intent_tag: return "intent_tag";
    case TokenClass::domain_name: return "domain_name";
    case TokenClass::intent_name: return "intent_name";
    case TokenClass::arg_label: return "arg_label";
  }
  return "?";
}

TokenClass token_class_from_name(const std::string& s) {
  for (TokenClass c : {TokenClass::control, TokenClass::grapheme,
                       TokenClass::domain_tag, TokenClass::intent_tag,
                       TokenClass::domain_name, TokenClass::intent_name,
                       TokenClass::arg_label})
    if (s == token_class_name(c)) return c;
  throw std::runtime_error("unknown token class: " + s);
}

const std::string& Vocab::grapheme_set() {
  static const std::string set =
      " abcdefghijklmnopqrstuvwxyz0123456789'._[]";
  return set;
}

void Vocab::add(const std::string& token, TokenClass cls) {
  if (index_.count(token))
    throw std::invalid_argument("Vocab: duplicate token " + token);
  index_[token] = static_cast<int>(tokens_.size());
  tokens_.push_back(token);
  classes_.push_back(cls);
}

Vocab Vocab::build(const std::vector<std::string>& domains,
                   const std::vector<std::string>& intents,
                   const std::vector<std::string>& arg_labels) {
  Vocab v;
  v.add("<pad>", TokenClass::control);
  v.add("<sos>", TokenClass::control);
  v.add("<eos>", TokenClass::control);
  v.pad_ = 0;
  v.sos_ = 1;
  v.eos_ = 2;
  for (char c : grapheme_set()) v.add(std::string(1, c), TokenClass::grapheme);
  v.add("<DOMAIN>", TokenClass::domain_tag);
  v.add("<INTENT>", TokenClass::intent_tag);
  v.domain_tag_ = v.index_.at("<DOMAIN>");
  v.intent_tag_ = v.index_.at("<INTENT>");
  auto sorted = [](std::vector<std::string> xs) {
    std::sort(xs.begin(), xs.end());
    xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
    return xs;
  };
  for (const std::string& d : sorted(domains))
    v.add("<" + d + ">", TokenClass::domain_name);
  for (const std::string& i : sorted(intents))
    v.add("<" + i + ">", TokenClass::intent_name);
  for (const std::string& a : sorted(arg_labels))
    v.add("<" + a + ">", TokenClass::arg_label);
  return v;
}

int Vocab::id(const std::string& token) const {
  auto it = index_.find(token);
  if (it == index_.end())
    throw std::out_of_range("Vocab: unknown token \"" + token + '"');
  return it->second;
}

int Vocab::find(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? -1 : it->second;
}

const std::string& Vocab::token(int id) const {
  return tokens_.at(static_cast<std::size_t>(id));
}

TokenClass Vocab::token_class(int id) const {
  return classes_.at(static_cast<std::size_t>(id));
}

bool Vocab::is_semantic_tag(int id) const {
  TokenClass c = token_class(id);
  return c == TokenClass::domain_tag || c == TokenClass::intent_tag ||
         c == TokenClass::arg_label;
}

std::vector<int> Vocab::encode_graphemes(const std::string& text) const {
  std::vector<int> ids;
  ids.reserve(text.size());
  for (char c : text) {
    int id = find(std::string(1, c));
    if (id < 0 || token_class(id) != TokenClass::grapheme)
      throw std::out_of_range(std::string("unknown grapheme '") + c + "'");
    ids.push_back(id);
  }
  return ids;
}

std::string Vocab::render(const std::vector<int>& ids) const {
  std::string out;
  for (int id : ids) out += token(id);
  return out;
}

std::vector<int> Vocab::parse_rendered(const std::string& text) const {
  std::vector<int> ids;
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] == '<') {
      std::size_t close = text.find('>', i);
      if (close == std::string::npos)
        throw std::runtime_error("parse_rendered: unterminated tag");
      ids.push_back(id(text.substr(i, close - i + 1)));
      i = close + 1;
    } else {
      ids.push_back(id(std::string(1, text[i])));
      ++i;
    }
  }
  return ids;
}

void Vocab::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("Vocab::save: cannot open " + path);
  for (int i = 0; i < size(); ++i)
    out << tokens_[static_cast<std::size_t>(i)] << '\t'
        << token_class_name(classes_[static_cast<std::size_t>(i)]) << '\n';
}

Vocab Vocab::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("Vocab::load: cannot open " + path);
  Vocab v;
  std::string line;
  while (std::getline(in, line)) {
    std::size_t tab = line.find('\t');
    if (tab == std::string::npos)
      throw std::runtime_error("Vocab::load: malformed line: " + line);
    v.add(line.substr(0, tab), token_class_from_name(line.substr(tab + 1)));
  }
  v.pad_ = v.find("<pad>");
  v.sos_ = v.find("<sos>");
  v.eos_ = v.find("<eos>");
  v.domain_tag_ = v.find("<DOMAIN>");
  v.intent_tag_ = v.find("<INTENT>");
  if (v.pad_ < 0 || v.sos_ < 0 || v.eos_ < 0 || v.domain_tag_ < 0 ||
      v.intent_tag_ < 0)
    throw std::runtime_error("Vocab::load: missing control or tag tokens");
  return v;
}

bool Vocab::operator==(const Vocab& other) const {
  return tokens_ == other.tokens_ && classes_ == other.classes_;
}

std::string normalize_value(const std::string& s) {
  std::string out;
  bool in_space = true;  // strips leading whitespace
  for (char c : s) {
    if (c == ' ' || c == '\t') {
      if (!in_space) out += ' ';
      in_space = true;
    } else {
      out += c;
      in_space = false;
    }
  }
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

std::vector<int> serialize(const SemanticFrame& frame, const Vocab& vocab) {
  std::vector<int> ids;
  auto name_id = [&](const std::string& name) {
    int id = vocab.find("<" + name + ">");
    if (id < 0)
      throw std::out_of_range("serialize: symbol <" + name +
                              "> not in vocabulary");
    return id;
  };
  ids.push_back(vocab.domain_tag());
  ids.push_back(name_id(frame.domain));
  if (frame.intent) {
    ids.push_back(vocab.intent_tag());
    ids.push_back(name_id(*frame.intent));
  }
  for (const auto& [label, value] : frame.args) {
    ids.push_back(name_id(label));
    std::vector<int> v = vocab.encode_graphemes(" " + value);
    ids.insert(ids.end(), v.begin(), v.end());
  }
  return ids;
}

DeserializeResult deserialize(const std::vector<int>& tokens,
                              const Vocab& vocab,
                              const std::string& fallback_domain) {
  DeserializeResult res;
  SemanticFrame& f = res.frame;
  bool have_domain = false;
  bool stray_noted = false;
  std::size_t i = 0;
  auto cls = [&](std::size_t k) { return vocab.token_class(tokens[k]); };
  auto strip_brackets = [&](int id) {
    const std::string& t = vocab.token(id);
    return t.substr(1, t.size() - 2);
  };
  while (i < tokens.size()) {
    TokenClass c = cls(i);
    if (c == TokenClass::control) {
      ++i;
      continue;
    }
    if (c == TokenClass::domain_tag) {
      if (i + 1 < tokens.size() && cls(i + 1) == TokenClass::domain_name) {
        if (have_domain) {
          res.diagnostics.push_back("duplicate domain tag");
        } else {
          f.domain = strip_brackets(tokens[i + 1]);
          have_domain = true;
        }
        i += 2;
      } else {
        res.diagnostics.push_back("dangling tag <DOMAIN>");
        ++i;
      }
      continue;
    }
    if (c == TokenClass::intent_tag) {
      if (i + 1 < tokens.size() && cls(i + 1) == TokenClass::intent_name) {
        if (f.intent) {
          res.diagnostics.push_back("duplicate intent tag");
        } else {
          f.intent = strip_brackets(tokens[i + 1]);
        }
        i += 2;
      } else {
        res.diagnostics.push_back("dangling tag <INTENT>");
        ++i;
      }
      continue;
    }
    if (c == TokenClass::arg_label) {
      std::string label = strip_brackets(tokens[i]);
      ++i;
      std::string raw;
      while (i < tokens.size() && (cls(i) == TokenClass::grapheme ||
                                   cls(i) == TokenClass::control)) {
        if (cls(i) == TokenClass::grapheme) raw += vocab.token(tokens[i]);
        ++i;
      }
      std::string value = normalize_value(raw);
      bool dup = false;
      for (const auto& [l, v] : f.args)
        if (l == label) dup = true;
      if (dup) {
        res.diagnostics.push_back("duplicate argument label " + label);
      } else {
        if (value.empty())
          res.diagnostics.push_back("empty value for argument " + label);
        f.args.emplace_back(label, value);
      }
      continue;
    }
    if (c == TokenClass::grapheme) {
      if (!stray_noted) {
        res.diagnostics.push_back("stray graphemes outside any value");
        stray_noted = true;
      }
      ++i;
      continue;
    }
    // domain_name / intent_name without their tag
    res.diagnostics.push_back("unexpected token " + vocab.token(tokens[i]));
    ++i;
  }
  if (!have_domain) {
    res.diagnostics.push_back("missing domain");
    f.domain = fallback_domain;
  }
  return res;
}

std::pair<std::vector<int>, std::vector<int>> split_joint_output(
    const std::vector<int>& tokens, const Vocab& vocab) {
  std::size_t split = tokens.size();
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (vocab.is_semantic_tag(tokens[i])) {
      split = i;
      break;
    }
  }
  return {std::vector<int>(tokens.begin(),
                           tokens.begin() + static_cast<std::ptrdiff_t>(split)),
          std::vector<int>(tokens.begin() + static_cast<std::ptrdiff_t>(split),
                           tokens.end())};
}

}  // namespace slu
