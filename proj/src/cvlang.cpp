#include "cvrank/cvlang.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <unordered_map>

#include <json.hpp>

#include "cvrank/binary_io.hpp"
#include "cvrank/error.hpp"
#include "cvrank/jsonl.hpp"

namespace cvrank::cvlang {

namespace detail {
extern const std::string_view kBuiltinQuestionBank;
}

namespace {

constexpr std::string_view kTemplate =
    "The image shows a [Q1] area with a [Q2] road layout, featuring [Q3] such as [Q4]. The buildings are "
    "predominantly [Q5], with vegetation described as [Q6]. Distinctive features include [Q7], and the architecture "
    "style is [Q8].\n"
    "\n"
    "Transportation features include [Q9], with open spaces like [Q10]. The area is [Q11] in layout, with [Q12] "
    "patterns. The roofs are predominantly [Q13] in color, while the roads are [Q14] with [Q15].\n"
    "\n"
    "The main road visible is a [Q16], with road markings such as [Q17] in [Q18]. Road structures include [Q19], and "
    "the road orientation is [Q20]. Surrounding vehicles are mainly [Q21]. The junction allows [Q22] traffic flow, "
    "with a road width of [Q23].\n"
    "\n"
    "Traffic lights: [Q24], billboard signs: [Q25]. A service station is [Q26] visible, offering [Q27]. Sports "
    "courts ([Q28]) are visible, hard shoulder: [Q29], and pedestrian area: [Q30].";

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += " | ";
    out += items[i];
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Question bank

const QuestionBank& QuestionBank::builtin() {
  static const QuestionBank bank = parse(detail::kBuiltinQuestionBank, "<builtin question bank>");
  return bank;
}

QuestionBank QuestionBank::parse(std::string_view json_text, const std::string& what) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(what + ": malformed question bank: " + e.what());
  }
  QuestionBank bank;
  try {
    for (const auto& q : doc.at("questions")) {
      Question item;
      item.id = q.at("id").get<std::string>();
      item.text = q.at("question").get<std::string>();
      item.options = q.at("options").get<std::vector<std::string>>();
      bank.questions_.push_back(std::move(item));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(what + ": malformed question bank: " + e.what());
  }
  if (bank.questions_.size() != kQuestionCount) {
    throw ValidationError(what + ": expected " + std::to_string(kQuestionCount) + " questions, found " +
                          std::to_string(bank.questions_.size()));
  }
  for (std::size_t i = 0; i < bank.questions_.size(); ++i) {
    const auto& q = bank.questions_[i];
    const auto expected = "Q" + std::to_string(i + 1);
    if (q.id != expected) throw ValidationError(what + ": question " + expected + " has id '" + q.id + "'");
    if (q.options.empty()) throw ValidationError(what + ": " + q.id + " has no options");
  }
  return bank;
}

QuestionBank QuestionBank::load(const std::string& path) { return parse(io::read_file(path), path); }

const Question* QuestionBank::find(std::string_view id) const {
  for (const auto& q : questions_) {
    if (q.id == id) return &q;
  }
  return nullptr;
}

// ---------------------------------------------------------------------------
// Sheets and rendering

std::vector<Violation> validate_sheet(const AnswerSheet& sheet, const QuestionBank& bank) {
  std::vector<Violation> out;
  for (const auto& q : bank.questions()) {
    const auto it = sheet.answers.find(q.id);
    if (it == sheet.answers.end()) {
      out.push_back({q.id, "", q.options, "unanswered " + q.id});
      continue;
    }
    if (std::find(q.options.begin(), q.options.end(), it->second) == q.options.end()) {
      out.push_back({q.id, it->second, q.options,
                     q.id + ": '" + it->second + "' is not one of the allowed options [" + join(q.options) + "]"});
    }
  }
  for (const auto& [id, answer] : sheet.answers) {
    if (!bank.find(id)) out.push_back({id, answer, {}, "unknown question " + id});
  }
  return out;
}

std::string_view description_template() { return kTemplate; }

std::string render_description(const AnswerSheet& sheet, const QuestionBank& bank) {
  const auto violations = validate_sheet(sheet, bank);
  if (!violations.empty()) {
    std::string msg = "sheet '" + sheet.image_id + "' is not renderable:";
    for (const auto& v : violations) msg += "\n  " + v.message;
    throw ValidationError(msg);
  }
  std::string out;
  out.reserve(kTemplate.size() + 512);
  std::size_t pos = 0;
  while (pos < kTemplate.size()) {
    const auto open = kTemplate.find("[Q", pos);
    if (open == std::string_view::npos) {
      out.append(kTemplate.substr(pos));
      break;
    }
    const auto close = kTemplate.find(']', open);
    out.append(kTemplate.substr(pos, open - pos));
    const std::string slot(kTemplate.substr(open + 1, close - open - 1));
    out += sheet.answers.at(slot);
    pos = close + 1;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Stability metrics

std::set<std::string> word_set(std::string_view text) {
  std::set<std::string> words;
  std::string current;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      current += static_cast<char>(std::tolower(c));
    } else if (!current.empty()) {
      words.insert(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) words.insert(std::move(current));
  return words;
}

std::size_t word_count(std::string_view text) {
  std::size_t n = 0;
  bool in_word = false;
  for (char ch : text) {
    const bool space = std::isspace(static_cast<unsigned char>(ch)) != 0;
    if (!space && !in_word) ++n;
    in_word = !space;
  }
  return n;
}

double jaccard(std::string_view a, std::string_view b) {
  const auto wa = word_set(a);
  const auto wb = word_set(b);
  if (wa.empty() && wb.empty()) return 1.0;
  std::size_t common = 0;
  for (const auto& w : wa) common += wb.count(w);
  const std::size_t uni = wa.size() + wb.size() - common;
  return static_cast<double>(common) / static_cast<double>(uni);
}

StabilityReport stability_report(const std::vector<Description>& corpus_a, const std::vector<Description>& corpus_b,
                                 const std::vector<geostore::Embedding>& embeddings_a,
                                 const std::vector<geostore::Embedding>& embeddings_b) {
  if (corpus_a.size() != corpus_b.size()) {
    throw ValidationError("stability: corpora differ in size (" + std::to_string(corpus_a.size()) + " vs " +
                          std::to_string(corpus_b.size()) + ")");
  }
  if (embeddings_a.size() != corpus_a.size() || embeddings_b.size() != corpus_b.size()) {
    throw ValidationError("stability: embedding count does not match description count");
  }
  if (corpus_a.empty()) throw ValidationError("stability: empty corpora");
  std::unordered_map<std::string, std::size_t> index_b;
  for (std::size_t i = 0; i < corpus_b.size(); ++i) {
    if (!index_b.emplace(corpus_b[i].image_id, i).second) {
      throw ValidationError("stability: duplicate image id '" + corpus_b[i].image_id + "'");
    }
  }
  std::set<std::string> seen_a;
  StabilityReport r;
  double cos_sum = 0.0;
  double jac_sum = 0.0;
  std::vector<double> lengths;
  for (std::size_t i = 0; i < corpus_a.size(); ++i) {
    const auto& a = corpus_a[i];
    if (!seen_a.insert(a.image_id).second) throw ValidationError("stability: duplicate image id '" + a.image_id + "'");
    const auto it = index_b.find(a.image_id);
    if (it == index_b.end()) throw ValidationError("stability: image id '" + a.image_id + "' missing from second corpus");
    const auto& b = corpus_b[it->second];
    const auto& ea = embeddings_a[i];
    const auto& eb = embeddings_b[it->second];
    if (ea.size() != eb.size()) throw ValidationError("stability: embedding dims differ for '" + a.image_id + "'");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t d = 0; d < ea.size(); ++d) {
      dot += static_cast<double>(ea[d]) * eb[d];
      na += static_cast<double>(ea[d]) * ea[d];
      nb += static_cast<double>(eb[d]) * eb[d];
    }
    if (na == 0.0 || nb == 0.0) throw ValidationError("stability: zero embedding for '" + a.image_id + "'");
    cos_sum += std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
    jac_sum += jaccard(a.text, b.text);
    lengths.push_back(static_cast<double>(word_count(a.text)));
    lengths.push_back(static_cast<double>(word_count(b.text)));
  }
  const auto n = static_cast<double>(corpus_a.size());
  r.pairs = corpus_a.size();
  r.mean_cosine = cos_sum / n;
  r.mean_jaccard = jac_sum / n;
  double sum = 0.0;
  for (double l : lengths) sum += l;
  r.mean_length = sum / static_cast<double>(lengths.size());
  double var = 0.0;
  for (double l : lengths) var += (l - r.mean_length) * (l - r.mean_length);
  r.length_stddev = std::sqrt(var / static_cast<double>(lengths.size()));
  return r;
}

// ---------------------------------------------------------------------------
// Line-delimited I/O

std::vector<AnswerSheet> read_sheets(const std::string& path) {
  std::vector<AnswerSheet> out;
  std::set<std::string> seen;
  jsonl::for_each(path, [&](const nlohmann::json& row, std::size_t line) {
    AnswerSheet s;
    try {
      s.image_id = row.at("image_id").get<std::string>();
      for (const auto& [k, v] : row.at("answers").items()) s.answers[k] = v.get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(located(path, line, s.image_id, std::string("malformed answer sheet: ") + e.what()));
    }
    if (!seen.insert(s.image_id).second) throw ValidationError(located(path, line, s.image_id, "duplicate image_id"));
    out.push_back(std::move(s));
  });
  return out;
}

void write_sheets(const std::string& path, const std::vector<AnswerSheet>& sheets) {
  std::vector<jsonl::ordered_json> rows;
  for (const auto& s : sheets) {
    jsonl::ordered_json answers = jsonl::ordered_json::object();
    // Question order, not lexicographic ("Q10" before "Q2").
    std::vector<std::pair<std::string, std::string>> items(s.answers.begin(), s.answers.end());
    std::stable_sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
      auto num = [](const std::string& id) {
        return id.size() > 1 && id[0] == 'Q' ? std::strtol(id.c_str() + 1, nullptr, 10) : 0L;
      };
      return num(a.first) < num(b.first);
    });
    for (const auto& [k, v] : items) answers[k] = v;
    rows.push_back(jsonl::ordered_json{{"image_id", s.image_id}, {"answers", std::move(answers)}});
  }
  jsonl::write(path, rows);
}

std::vector<Description> read_descriptions(const std::string& path) {
  std::vector<Description> out;
  jsonl::for_each(path, [&](const nlohmann::json& row, std::size_t line) {
    Description d;
    try {
      d.image_id = row.at("image_id").get<std::string>();
      d.text = row.at("description").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(located(path, line, d.image_id, std::string("malformed description: ") + e.what()));
    }
    out.push_back(std::move(d));
  });
  return out;
}

void write_descriptions(const std::string& path, const std::vector<Description>& descriptions) {
  std::vector<jsonl::ordered_json> rows;
  for (const auto& d : descriptions) rows.push_back(jsonl::ordered_json{{"image_id", d.image_id}, {"description", d.text}});
  jsonl::write(path, rows);
}

}  // namespace cvrank::cvlang
