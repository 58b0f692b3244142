#pragma once

#include <stdexcept>
#include <string>

namespace wdetect {

// Raised for malformed inputs. `where` names the offending field or entity
// (a dotted scenario path such as "detector.kl.theta", or an edge).
class ValidationError : public std::runtime_error {
 public:
  ValidationError(std::string where, const std::string& what)
      : std::runtime_error(where.empty() ? what : where + ": " + what), where_(std::move(where)) {}
  const std::string& where() const noexcept { return where_; }

 private:
  std::string where_;
};

}  // namespace wdetect
