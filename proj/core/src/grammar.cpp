#include "slu/grammar.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace slu {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_alternatives(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string piece;
  while (std::getline(ss, piece, '|')) {
    piece = trim(piece);
    if (!piece.empty()) out.push_back(piece);
  }
  return out;
}

const char* kBuiltinGrammar = R"(# Default desk-scale grammar: 5 domains, 20 intents, 2 argument types.
# Domain weights mirror the training mix used throughout the experiments.
weight MEDIA 0.30
weight MEDIA_CONTROL 0.08
weight PRODUCTIVITY 0.07
weight DELIGHT 0.02
weight NONE 0.53

filler DATETIME = 2 p.m. | 7 a.m. | noon | midnight | tonight | tomorrow morning | friday | 8 o'clock | 5 30 p.m. | sunday evening
filler SUBJECT = buy milk | call mom | walk the dog | the meeting | water the plants | pay the rent | jazz | classic rock | the daily news | my workout mix | smooth piano | pick up the kids

template MEDIA PLAY_SONG : play the song {SUBJECT} | can you play the song {SUBJECT}
template MEDIA PLAY_ARTIST : play some music by {SUBJECT} | put on music by {SUBJECT}
template MEDIA PLAY_STATION : tune to the {SUBJECT} station | play the {SUBJECT} station
template MEDIA PLAY_PODCAST : play the podcast about {SUBJECT} | start the podcast about {SUBJECT}
template MEDIA PLAY_ALBUM : play the album {SUBJECT}
template MEDIA PLAY_MOVIE : put on the movie {SUBJECT} | play the movie {SUBJECT}
template MEDIA PLAY_NEWS : play me the news | play the latest news
template MEDIA SHUFFLE_PLAYLIST : shuffle my playlist | shuffle the playlist
template MEDIA_CONTROL - : next song please | pause the music | resume the music | stop playing | turn the volume up | turn the volume down | skip this track
template PRODUCTIVITY SET_ALARM : can you set an alarm for {DATETIME} | set an alarm for {DATETIME} | wake me up at {DATETIME}
template PRODUCTIVITY CANCEL_ALARM : cancel my alarm | turn off the alarm
template PRODUCTIVITY SET_TIMER : set a timer for {DATETIME} | start a timer for {DATETIME}
template PRODUCTIVITY ADD_REMINDER : remind me to {SUBJECT} | add a reminder to {SUBJECT}
template PRODUCTIVITY SELF_NOTE : make a note to {SUBJECT} | note to self {SUBJECT}
template PRODUCTIVITY SCHEDULE_EVENT : schedule {SUBJECT} for {DATETIME} | put {SUBJECT} on the calendar for {DATETIME}
template PRODUCTIVITY CHECK_CALENDAR : what's on my calendar | check my calendar
template PRODUCTIVITY DELETE_REMINDER : delete my reminder to {SUBJECT}
template DELIGHT TELL_JOKE : tell me a joke | make me laugh
template DELIGHT SING_SONG : sing me a song | sing something
template DELIGHT FLIP_COIN : flip a coin | toss a coin
template DELIGHT COMPLIMENT : say something nice
template NONE - : how old is barack obama | what is the capital of france | how tall is the eiffel tower | who wrote hamlet | what is the speed of light | how far away is the moon | what does this word mean | when was the telephone invented
)";

}  // namespace

std::vector<std::string> Template::slots() const {
  std::vector<std::string> out;
  std::size_t i = 0;
  while ((i = pattern.find('{', i)) != std::string::npos) {
    std::size_t close = pattern.find('}', i);
    if (close == std::string::npos)
      throw std::runtime_error("template: unterminated slot in " + pattern);
    out.push_back(pattern.substr(i + 1, close - i - 1));
    i = close + 1;
  }
  return out;
}

Grammar Grammar::builtin_default() { return parse_text(kBuiltinGrammar); }

Grammar Grammar::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("Grammar::load: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_text(buf.str());
}

void Grammar::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("Grammar::save: cannot open " + path);
  for (const std::string& d : domains_)
    out << "weight " << d << ' ' << weights_.at(d) << '\n';
  for (const auto& [label, values] : fillers_) {
    out << "filler " << label << " =";
    for (std::size_t i = 0; i < values.size(); ++i)
      out << (i ? " | " : " ") << values[i];
    out << '\n';
  }
  // group alternatives back by (domain, intent) in first-seen order
  std::vector<std::pair<std::string, std::string>> groups;
  for (const Template& t : templates_) {
    std::pair<std::string, std::string> key{t.domain,
                                            t.intent.value_or("-")};
    if (std::find(groups.begin(), groups.end(), key) == groups.end())
      groups.push_back(key);
  }
  for (const auto& [domain, intent] : groups) {
    out << "template " << domain << ' ' << intent << " :";
    bool first = true;
    for (const Template& t : templates_)
      if (t.domain == domain && t.intent.value_or("-") == intent) {
        out << (first ? " " : " | ") << t.pattern;
        first = false;
      }
    out << '\n';
  }
}

std::vector<std::string> Grammar::intent_names() const {
  std::set<std::string> names;
  for (const Template& t : templates_)
    if (t.intent) names.insert(*t.intent);
  return {names.begin(), names.end()};
}

std::vector<std::string> Grammar::arg_labels() const {
  std::set<std::string> labels;
  for (const auto& [label, values] : fillers_) labels.insert(label);
  return {labels.begin(), labels.end()};
}

Vocab Grammar::make_vocab() const {
  return Vocab::build(domains_, intent_names(), arg_labels());
}

std::vector<Grammar::Expansion> Grammar::enumerate_all() const {
  std::vector<Expansion> out;
  for (const Template& t : templates_) {
    std::vector<std::string> slot_labels = t.slots();
    std::vector<std::size_t> idx(slot_labels.size(), 0);
    while (true) {
      Expansion e;
      e.frame.domain = t.domain;
      e.frame.intent = t.intent;
      std::string text = t.pattern;
      for (std::size_t s = 0; s < slot_labels.size(); ++s) {
        const std::string& label = slot_labels[s];
        auto it = fillers_.find(label);
        if (it == fillers_.end() || it->second.empty())
          throw std::runtime_error("grammar: no fillers for slot " + label);
        const std::string& value = it->second[idx[s]];
        std::size_t pos = text.find('{' + label + '}');
        text.replace(pos, label.size() + 2, value);
        e.frame.args.emplace_back(label, value);
      }
      e.transcript = text;
      out.push_back(std::move(e));
      // odometer over filler indices
      std::size_t s = 0;
      for (; s < idx.size(); ++s) {
        if (++idx[s] < fillers_.at(slot_labels[s]).size()) break;
        idx[s] = 0;
      }
      if (s == idx.size()) break;
    }
  }
  return out;
}

Grammar::Expansion Grammar::sample(Rng& rng) const {
  std::vector<double> w;
  w.reserve(domains_.size());
  for (const std::string& d : domains_) w.push_back(weights_.at(d));
  const std::string& domain = domains_[rng.categorical(w)];
  std::vector<const Template*> candidates;
  for (const Template& t : templates_)
    if (t.domain == domain) candidates.push_back(&t);
  if (candidates.empty())
    throw std::runtime_error("grammar: no templates for domain " + domain);
  const Template& t = *candidates[rng.below(candidates.size())];
  Expansion e;
  e.frame.domain = t.domain;
  e.frame.intent = t.intent;
  std::string text = t.pattern;
  for (const std::string& label : t.slots()) {
    const std::vector<std::string>& values = fillers_.at(label);
    const std::string& value = values[rng.below(values.size())];
    std::size_t pos = text.find('{' + label + '}');
    text.replace(pos, label.size() + 2, value);
    e.frame.args.emplace_back(label, value);
  }
  e.transcript = text;
  return e;
}

SemanticFrame Grammar::parse(const std::string& transcript) const {
  build_parse_index();
  auto it = parse_index_.find(transcript);
  if (it != parse_index_.end()) return it->second;
  SemanticFrame none;
  none.domain = "NONE";
  return none;
}

void Grammar::check_unambiguous() const { build_parse_index(); }

void Grammar::build_parse_index() const {
  if (!parse_index_.empty()) return;
  for (const Expansion& e : enumerate_all()) {
    auto [it, inserted] = parse_index_.emplace(e.transcript, e.frame);
    if (!inserted && !(it->second == e.frame))
      throw std::runtime_error("grammar: ambiguous transcript \"" +
                               e.transcript + "\"");
  }
}

void Grammar::validate_and_index() {
  if (domains_.empty()) throw std::runtime_error("grammar: no domains");
  for (const Template& t : templates_) {
    if (!weights_.count(t.domain))
      throw std::runtime_error("grammar: template for unknown domain " +
                               t.domain);
    if (t.domain == "NONE" && !t.slots().empty())
      throw std::runtime_error("grammar: NONE template with slots: " +
                               t.pattern);
  }
  check_unambiguous();
}

Grammar Grammar::parse_text(const std::string& text) {
  // same line format as builtin_default
  std::istringstream is(text);
  Grammar g;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string kind;
    ls >> kind;
    if (kind == "weight") {
      std::string name;
      double w;
      ls >> name >> w;
      if (!ls || w < 0)
        throw std::runtime_error("grammar: bad weight line " +
                                 std::to_string(lineno));
      g.domains_.push_back(name);
      g.weights_[name] = w;
    } else if (kind == "filler") {
      std::string label, eq;
      ls >> label >> eq;
      if (eq != "=")
        throw std::runtime_error("grammar: bad filler line " +
                                 std::to_string(lineno));
      std::string rest;
      std::getline(ls, rest);
      g.fillers_[label] = split_alternatives(rest);
    } else if (kind == "template") {
      std::string domain, intent, colon;
      ls >> domain >> intent >> colon;
      if (colon != ":")
        throw std::runtime_error("grammar: bad template line " +
                                 std::to_string(lineno));
      std::string rest;
      std::getline(ls, rest);
      for (const std::string& pat : split_alternatives(rest)) {
        Template t;
        t.domain = domain;
        if (intent != "-") t.intent = intent;
        t.pattern = pat;
        g.templates_.push_back(std::move(t));
      }
    } else {
      throw std::runtime_error("grammar: unknown directive '" + kind +
                               "' at line " + std::to_string(lineno));
    }
  }
  g.validate_and_index();
  return g;
}

}  // namespace slu
