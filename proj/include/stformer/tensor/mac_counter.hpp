#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>

namespace stf {

/// Per-run multiply-accumulate accumulator. Kernels report into the counter
/// installed on the current thread by a Scope; with no scope they report nowhere.
/// One fused multiply-add counts as one MAC.
class MacCounter {
 public:
  class Scope {
   public:
    explicit Scope(MacCounter& c) : previous_(slot()) { slot() = &c; }
    ~Scope() { slot() = previous_; }
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    MacCounter* previous_;
  };

  static void report(std::string_view kernel, std::uint64_t macs) {
    if (MacCounter* c = slot()) c->by_kernel_[std::string(kernel)] += macs;
  }

  std::uint64_t total() const {
    std::uint64_t t = 0;
    for (const auto& [_, n] : by_kernel_) t += n;
    return t;
  }
  std::uint64_t count(const std::string& kernel) const {
    auto it = by_kernel_.find(kernel);
    return it == by_kernel_.end() ? 0 : it->second;
  }
  const std::map<std::string, std::uint64_t>& by_kernel() const { return by_kernel_; }

 private:
  static MacCounter*& slot() {
    thread_local MacCounter* s = nullptr;
    return s;
  }

  std::map<std::string, std::uint64_t> by_kernel_;
};

}  // namespace stf
