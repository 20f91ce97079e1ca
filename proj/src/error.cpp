#include "cvrank/error.hpp"

namespace cvrank {

std::string located(const std::string& file, std::size_t line, const std::string& id,
                    const std::string& message) {
  std::string out = file + ":" + std::to_string(line) + ": ";
  if (!id.empty()) out += "id '" + id + "': ";
  return out + message;
}

}  // namespace cvrank
