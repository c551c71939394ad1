#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace nlstop {

/// One named check inside a verification report. `witness` describes the
/// first failing instance (empty when the check passed).
struct CheckResult {
  std::string name;
  bool passed = true;
  std::size_t evaluations = 0;
  std::string witness;
};

class Report {
 public:
  /// Returns the entry called `name`, creating it if needed.
  CheckResult& entry(const std::string& name);

  /// Records one evaluation of `name`; the first failure keeps its witness.
  void record(const std::string& name, bool ok, const std::string& witness = {});

  void merge(const Report& other, const std::string& prefix = {});

  [[nodiscard]] bool all_passed() const;
  [[nodiscard]] const CheckResult* find(const std::string& name) const;
  [[nodiscard]] const std::vector<CheckResult>& entries() const { return entries_; }

  /// One line per check: "<name>: pass|fail [witness]".
  [[nodiscard]] std::string to_string() const;

 private:
  std::vector<CheckResult> entries_;
};

}  // namespace nlstop
