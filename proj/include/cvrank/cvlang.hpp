#pragma once

#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "cvrank/geostore.hpp"

namespace cvrank::cvlang {

inline constexpr std::size_t kQuestionCount = 30;

struct Question {
  std::string id;  // "Q1".."Q30"
  std::string text;
  std::vector<std::string> options;
};

class QuestionBank {
 public:
  // The bank compiled in from data/question_bank.json.
  static const QuestionBank& builtin();
  static QuestionBank parse(std::string_view json_text, const std::string& what);
  static QuestionBank load(const std::string& path);

  const std::vector<Question>& questions() const { return questions_; }
  const Question* find(std::string_view id) const;

 private:
  std::vector<Question> questions_;
};

struct AnswerSheet {
  std::string image_id;
  std::map<std::string, std::string> answers;  // question id -> option text

  friend bool operator==(const AnswerSheet&, const AnswerSheet&) = default;
};

struct Violation {
  std::string question_id;
  std::string answer;                // empty when unanswered
  std::vector<std::string> allowed;  // empty for unknown question ids
  std::string message;
};

// Answers must match an allowed option verbatim; every question must be answered.
std::vector<Violation> validate_sheet(const AnswerSheet& sheet, const QuestionBank& bank);

// Slot-for-slot substitution into the four-paragraph description template.
// Paragraphs are separated by a blank line; there is no trailing newline.
// Throws ValidationError listing the violations of an invalid sheet.
std::string render_description(const AnswerSheet& sheet, const QuestionBank& bank = QuestionBank::builtin());

// Description template with "[Qn]" slots.
std::string_view description_template();

// Case-folded word set; every non-alphanumeric byte separates words.
std::set<std::string> word_set(std::string_view text);
// Whitespace-delimited word count.
std::size_t word_count(std::string_view text);
// |A ∩ B| / |A ∪ B| over word sets; two empty sets give 1.
double jaccard(std::string_view a, std::string_view b);

struct Description {
  std::string image_id;
  std::string text;

  friend bool operator==(const Description&, const Description&) = default;
};

struct StabilityReport {
  std::size_t pairs = 0;
  double mean_cosine = 0.0;
  double mean_jaccard = 0.0;
  double mean_length = 0.0;    // words, over both corpora
  double length_stddev = 0.0;  // population
};

// Pairs descriptions by image id. Embeddings are parallel to their corpus.
StabilityReport stability_report(const std::vector<Description>& corpus_a, const std::vector<Description>& corpus_b,
                                 const std::vector<geostore::Embedding>& embeddings_a,
                                 const std::vector<geostore::Embedding>& embeddings_b);

// {"image_id": ..., "answers": {"Q1": ..., ...}}
std::vector<AnswerSheet> read_sheets(const std::string& path);
void write_sheets(const std::string& path, const std::vector<AnswerSheet>& sheets);
// {"image_id": ..., "description": ...}
std::vector<Description> read_descriptions(const std::string& path);
void write_descriptions(const std::string& path, const std::vector<Description>& descriptions);

}  // namespace cvrank::cvlang
