#pragma once

#include <cstdio>
#include <stdexcept>
#include <string>

namespace dsal {

// Error with a stable machine-parsable class tag. The CLI prints failures as
// one line, "<class>: <message>".
class Error : public std::runtime_error {
 public:
  Error(std::string klass, const std::string& message)
      : std::runtime_error(message), klass_(std::move(klass)) {}
  const std::string& klass() const { return klass_; }

 private:
  std::string klass_;
};

inline void log_warn(const std::string& msg) {
  std::fprintf(stderr, "warning: %s\n", msg.c_str());
}

}  // namespace dsal
