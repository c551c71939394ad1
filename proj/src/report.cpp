#include "nlstop/report.hpp"

#include <algorithm>
#include <sstream>

namespace nlstop {

CheckResult& Report::entry(const std::string& name) {
  auto it = std::find_if(entries_.begin(), entries_.end(),
                         [&](const CheckResult& c) { return c.name == name; });
  if (it != entries_.end()) return *it;
  entries_.push_back(CheckResult{name, true, 0, {}});
  return entries_.back();
}

void Report::record(const std::string& name, bool ok, const std::string& witness) {
  CheckResult& c = entry(name);
  ++c.evaluations;
  if (!ok && c.passed) {
    c.passed = false;
    c.witness = witness;
  }
}

void Report::merge(const Report& other, const std::string& prefix) {
  for (const auto& c : other.entries_) {
    CheckResult& mine = entry(prefix + c.name);
    mine.evaluations += c.evaluations;
    if (!c.passed && mine.passed) {
      mine.passed = false;
      mine.witness = c.witness;
    }
  }
}

bool Report::all_passed() const {
  return std::all_of(entries_.begin(), entries_.end(),
                     [](const CheckResult& c) { return c.passed; });
}

const CheckResult* Report::find(const std::string& name) const {
  auto it = std::find_if(entries_.begin(), entries_.end(),
                         [&](const CheckResult& c) { return c.name == name; });
  return it == entries_.end() ? nullptr : &*it;
}

std::string Report::to_string() const {
  std::ostringstream os;
  for (const auto& c : entries_) {
    os << c.name << ": " << (c.passed ? "pass" : "fail") << " (" << c.evaluations
       << " evaluations)";
    if (!c.passed) os << " witness: " << c.witness;
    os << '\n';
  }
  return os.str();
}

}  // namespace nlstop
