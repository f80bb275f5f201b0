#pragma once

// Acceptance criteria. Each returns an outcome; main prints one PASS/FAIL
// line per criterion.

#include <cstdio>
#include <filesystem>
#include <sstream>
#include <string>

namespace cade::acceptance {

struct Outcome {
  bool pass = false;
  std::string detail;
};

/// Counts expectations and remembers the first failure.
class Checks {
 public:
  bool expect(bool ok, const std::string& what) {
    ++count_;
    if (!ok) {
      ++failed_;
      if (first_.empty()) first_ = what;
    }
    return ok;
  }

  int count() const { return count_; }
  int failed() const { return failed_; }

  Outcome outcome(const std::string& summary) const {
    std::ostringstream s;
    s << summary << "; " << count_ - failed_ << "/" << count_ << " checks";
    if (failed_) s << "; first failure: " << first_;
    return {failed_ == 0, s.str()};
  }

 private:
  int count_ = 0;
  int failed_ = 0;
  std::string first_;
};

/// Progress for long criteria, on stderr so stdout keeps one line each.
template <typename... Args>
void progress(const char* fmt, Args... args) {
  if constexpr (sizeof...(Args) == 0) {
    std::fputs(fmt, stderr);
  } else {
    std::fprintf(stderr, fmt, args...);
  }
  std::fputc('\n', stderr);
  std::fflush(stderr);
}

std::filesystem::path scratch_dir(const std::string& tag);

Outcome geometry_suite();       // 1
Outcome anchor_suite();         // 2
Outcome loss_suite();           // 3
Outcome shape_contract();       // 4
Outcome preprocessing_suite();  // 5
Outcome overfit();              // 6
Outcome generalization();       // 7
Outcome evaluation_suite();     // 8
Outcome determinism();          // 9

}  // namespace cade::acceptance
