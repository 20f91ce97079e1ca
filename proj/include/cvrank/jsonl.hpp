#pragma once

#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

namespace cvrank::jsonl {

using ordered_json = nlohmann::ordered_json;

// Calls `fn(row, line_number)` for every non-blank line. Parse failures throw
// ValidationError with the file and line.
void for_each(const std::string& path, const std::function<void(const nlohmann::json&, std::size_t)>& fn);

std::string dump_lines(const std::vector<ordered_json>& rows);
void write(const std::string& path, const std::vector<ordered_json>& rows);

}  // namespace cvrank::jsonl
