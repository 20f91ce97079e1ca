#include "cvrank/jsonl.hpp"

#include <sstream>

#include "cvrank/binary_io.hpp"
#include "cvrank/error.hpp"

namespace cvrank::jsonl {

void for_each(const std::string& path, const std::function<void(const nlohmann::json&, std::size_t)>& fn) {
  const std::string text = io::read_file(path);
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json row;
    try {
      row = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ValidationError(located(path, line_no, "", std::string("malformed JSON row: ") + e.what()));
    }
    if (!row.is_object()) throw ValidationError(located(path, line_no, "", "row is not a JSON object"));
    fn(row, line_no);
  }
}

std::string dump_lines(const std::vector<ordered_json>& rows) {
  std::string out;
  for (const auto& r : rows) {
    out += r.dump();
    out += '\n';
  }
  return out;
}

void write(const std::string& path, const std::vector<ordered_json>& rows) {
  io::write_file(path, dump_lines(rows));
}

}  // namespace cvrank::jsonl
