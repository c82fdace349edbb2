#include "slu/metrics.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace slu {

using nlohmann::json;

std::vector<std::string> tokenize_words(const std::string& s) {
  std::vector<std::string> words;
  std::istringstream in(normalize_value(s));
  std::string w;
  while (in >> w) words.push_back(std::move(w));
  return words;
}

EditCounts word_edit_distance(const std::vector<std::string>& ref,
                              const std::vector<std::string>& hyp) {
  const std::size_t n = ref.size(), m = hyp.size();
  // dp[i][j] = cheapest edit counts turning ref[0..i) into hyp[0..j);
  // on cost ties prefer substitutions, then deletions (deterministic).
  std::vector<std::vector<EditCounts>> dp(n + 1,
                                          std::vector<EditCounts>(m + 1));
  for (std::size_t i = 1; i <= n; ++i) dp[i][0].deletions = static_cast<int>(i);
  for (std::size_t j = 1; j <= m; ++j)
    dp[0][j].insertions = static_cast<int>(j);
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      if (ref[i - 1] == hyp[j - 1]) {
        dp[i][j] = dp[i - 1][j - 1];
        continue;
      }
      EditCounts sub = dp[i - 1][j - 1];
      ++sub.substitutions;
      EditCounts del = dp[i - 1][j];
      ++del.deletions;
      EditCounts ins = dp[i][j - 1];
      ++ins.insertions;
      EditCounts best = sub;
      if (del.total() < best.total()) best = del;
      if (ins.total() < best.total()) best = ins;
      dp[i][j] = best;
    }
  }
  return dp[n][m];
}

double word_error_rate(const std::vector<std::string>& ref,
                       const std::vector<std::string>& hyp) {
  if (ref.empty()) return hyp.empty() ? 0.0 : 1.0;
  double wer = static_cast<double>(word_edit_distance(ref, hyp).total()) /
               static_cast<double>(ref.size());
  return std::min(wer, 1.0);
}

double ClassStats::precision() const {
  return tp + fp ? static_cast<double>(tp) / (tp + fp) : 0.0;
}
double ClassStats::recall() const {
  return tp + fn ? static_cast<double>(tp) / (tp + fn) : 0.0;
}
double ClassStats::f1() const {
  double p = precision(), r = recall();
  return p + r > 0 ? 2 * p * r / (p + r) : 0.0;
}

F1Report multiclass_f1(const std::vector<std::string>& refs,
                       const std::vector<std::string>& hyps) {
  if (refs.size() != hyps.size())
    throw std::invalid_argument("multiclass_f1: length mismatch");
  F1Report report;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    if (refs[i] == hyps[i]) {
      ++report.per_class[refs[i]].tp;
    } else {
      ++report.per_class[refs[i]].fn;
      ++report.per_class[hyps[i]].fp;
    }
  }
  long tp = 0, fp = 0, fn = 0;
  for (const auto& [cls, st] : report.per_class) {
    tp += st.tp;
    fp += st.fp;
    fn += st.fn;
  }
  report.micro_precision =
      tp + fp ? static_cast<double>(tp) / (tp + fp) : 0.0;
  report.micro_recall = tp + fn ? static_cast<double>(tp) / (tp + fn) : 0.0;
  double p = report.micro_precision, r = report.micro_recall;
  report.micro_f1 = p + r > 0 ? 2 * p * r / (p + r) : 0.0;
  return report;
}

namespace {

// First value per label; duplicate labels within one frame collapse to the
// first occurrence, matching the de-serializer's keep-first rule.
std::map<std::string, std::string> arg_map(const SemanticFrame& f) {
  std::map<std::string, std::string> m;
  for (const auto& [label, value] : f.args) m.emplace(label, value);
  return m;
}

}  // namespace

ArgWerReport argument_wer(const std::vector<SemanticFrame>& refs,
                          const std::vector<SemanticFrame>& hyps) {
  if (refs.size() != hyps.size())
    throw std::invalid_argument("argument_wer: length mismatch");
  ArgWerReport report;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    auto ref_args = arg_map(refs[i]);
    auto hyp_args = arg_map(hyps[i]);
    for (const auto& [label, ref_value] : ref_args) {
      ArgWerLabelStats& st = report.per_label[label];
      auto it = hyp_args.find(label);
      if (it == hyp_args.end()) {
        ++st.misses;
        st.wer_sum += 1.0;
      } else {
        ++st.matches;
        st.wer_sum +=
            word_error_rate(tokenize_words(ref_value), tokenize_words(it->second));
      }
    }
    for (const auto& [label, hyp_value] : hyp_args) {
      if (ref_args.count(label)) continue;
      ArgWerLabelStats& st = report.per_label[label];
      ++st.over_triggers;
      st.wer_sum += 1.0;
    }
  }
  double weight_sum = 0.0, weighted = 0.0;
  for (const auto& [label, st] : report.per_label) {
    weight_sum += st.instances();
    weighted += st.wer() * st.instances();
  }
  report.empty = weight_sum == 0.0;
  report.weighted_average = report.empty ? 0.0 : weighted / weight_sum;
  return report;
}

const char* eval_mode_name(EvalMode m) {
  return m == EvalMode::end_to_end ? "end_to_end" : "transcript_plus_cfg";
}

EvalMode eval_mode_from_name(const std::string& s) {
  if (s == "end_to_end") return EvalMode::end_to_end;
  if (s == "transcript_plus_cfg") return EvalMode::transcript_plus_cfg;
  throw std::invalid_argument("unknown eval mode: " + s);
}

EvalReport evaluate(const std::vector<DecodeRecord>& decodes,
                    const std::vector<Utterance>& references, EvalMode mode,
                    const Vocab& vocab, const Grammar& grammar) {
  std::map<std::string, const DecodeRecord*> by_id;
  for (const DecodeRecord& d : decodes) by_id[d.id] = &d;

  EvalReport report;
  report.mode = mode;
  report.num_utterances = static_cast<int>(references.size());

  std::vector<std::string> ref_domains, hyp_domains, ref_intents, hyp_intents;
  std::vector<SemanticFrame> ref_frames, hyp_frames;
  double wer_sum = 0.0;
  int wer_count = 0;

  for (const Utterance& ref : references) {
    auto it = by_id.find(ref.id);
    if (it == by_id.end())
      throw std::runtime_error("evaluate: no decode record for id " + ref.id);
    const DecodeRecord& dec = *it->second;

    SemanticFrame hyp;
    if (mode == EvalMode::transcript_plus_cfg) {
      if (!dec.transcript)
        throw std::runtime_error(
            "evaluate: transcript_plus_cfg needs transcripts (id " + ref.id +
            ")");
      hyp = grammar.parse(*dec.transcript);
    } else {
      hyp = deserialize(vocab.parse_rendered(dec.semantics_rendered), vocab)
                .frame;
    }

    if (dec.transcript) {
      wer_sum += word_error_rate(tokenize_words(ref.transcript),
                                 tokenize_words(*dec.transcript));
      ++wer_count;
    }

    ref_domains.push_back(ref.frame.domain);
    hyp_domains.push_back(hyp.domain);
    ref_intents.push_back(ref.frame.intent.value_or("(none)"));
    hyp_intents.push_back(hyp.intent.value_or("(none)"));
    ref_frames.push_back(ref.frame);
    hyp_frames.push_back(std::move(hyp));
  }

  if (wer_count > 0) report.transcript_wer = wer_sum / wer_count;
  report.domain = multiclass_f1(ref_domains, hyp_domains);
  report.intent = multiclass_f1(ref_intents, hyp_intents);
  report.arguments = argument_wer(ref_frames, hyp_frames);
  return report;
}

namespace {

json f1_to_json(const F1Report& r) {
  json per = json::object();
  for (const auto& [cls, st] : r.per_class)
    per[cls] = {{"tp", st.tp},
                {"fp", st.fp},
                {"fn", st.fn},
                {"precision", st.precision()},
                {"recall", st.recall()},
                {"f1", st.f1()}};
  return {{"per_class", per},
          {"micro_precision", r.micro_precision},
          {"micro_recall", r.micro_recall},
          {"micro_f1", r.micro_f1}};
}

F1Report f1_from_json(const json& j) {
  F1Report r;
  for (auto& [cls, st] : j.at("per_class").items()) {
    ClassStats s;
    s.tp = st.at("tp").get<int>();
    s.fp = st.at("fp").get<int>();
    s.fn = st.at("fn").get<int>();
    r.per_class[cls] = s;
  }
  r.micro_precision = j.at("micro_precision").get<double>();
  r.micro_recall = j.at("micro_recall").get<double>();
  r.micro_f1 = j.at("micro_f1").get<double>();
  return r;
}

}  // namespace

std::string EvalReport::to_json() const {
  json per_label = json::object();
  for (const auto& [label, st] : arguments.per_label)
    per_label[label] = {{"matches", st.matches},
                        {"misses", st.misses},
                        {"over_triggers", st.over_triggers},
                        {"wer", st.wer()}};
  json j = {{"mode", eval_mode_name(mode)},
            {"num_utterances", num_utterances},
            {"domain", f1_to_json(domain)},
            {"intent", f1_to_json(intent)},
            {"argument_wer",
             {{"per_label", per_label},
              {"weighted_average", arguments.weighted_average},
              {"empty", arguments.empty}}}};
  if (transcript_wer) j["transcript_wer"] = *transcript_wer;
  return j.dump(2) + "\n";
}

EvalReport EvalReport::from_json(const std::string& text) {
  json j = json::parse(text);
  EvalReport r;
  r.mode = eval_mode_from_name(j.at("mode").get<std::string>());
  r.num_utterances = j.at("num_utterances").get<int>();
  if (j.contains("transcript_wer"))
    r.transcript_wer = j["transcript_wer"].get<double>();
  r.domain = f1_from_json(j.at("domain"));
  r.intent = f1_from_json(j.at("intent"));
  const json& aw = j.at("argument_wer");
  for (auto& [label, st] : aw.at("per_label").items()) {
    ArgWerLabelStats s;
    s.matches = st.at("matches").get<int>();
    s.misses = st.at("misses").get<int>();
    s.over_triggers = st.at("over_triggers").get<int>();
    s.wer_sum = st.at("wer").get<double>() * s.instances();
    r.arguments.per_label[label] = s;
  }
  r.arguments.weighted_average = aw.at("weighted_average").get<double>();
  r.arguments.empty = aw.at("empty").get<bool>();
  return r;
}

std::string EvalReport::to_text() const {
  std::ostringstream out;
  out.precision(6);
  out << "mode: " << eval_mode_name(mode) << '\n';
  out << "utterances: " << num_utterances << '\n';
  if (transcript_wer)
    out << "transcript_wer: " << *transcript_wer << '\n';
  else
    out << "transcript_wer: n/a\n";
  auto dump_f1 = [&](const char* name, const F1Report& r) {
    out << name << "_micro_f1: " << r.micro_f1 << '\n';
    for (const auto& [cls, st] : r.per_class)
      out << name << '.' << cls << ": precision " << st.precision()
          << " recall " << st.recall() << " f1 " << st.f1() << '\n';
  };
  dump_f1("domain", domain);
  dump_f1("intent", intent);
  out << "argument_wer_weighted: " << arguments.weighted_average
      << (arguments.empty ? " (no scored instances)" : "") << '\n';
  for (const auto& [label, st] : arguments.per_label)
    out << "argument." << label << ": wer " << st.wer() << " matches "
        << st.matches << " misses " << st.misses << " over_triggers "
        << st.over_triggers << '\n';
  return out.str();
}

void EvalReport::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("EvalReport::save: cannot open " + path);
  out << to_json();
}

EvalReport EvalReport::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("EvalReport::load: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

}  // namespace slu
