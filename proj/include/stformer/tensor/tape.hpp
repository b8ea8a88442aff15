#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "stformer/tensor/tensor.hpp"

namespace stf {

/// Linear record of differentiable ops executed while a Recording is live on
/// this thread. Entries are appended in execution order, so replaying them
/// backwards is a valid topological order.
template <typename T>
class Tape {
 public:
  using NodePtr = std::shared_ptr<TensorNode<T>>;

  struct Entry {
    std::string op;
    NodePtr output;
    std::vector<NodePtr> inputs;
    std::function<void()> backward;
  };

  /// Makes `tape` the active tape on this thread for the guard's lifetime.
  class Recording {
   public:
    explicit Recording(Tape& tape) : previous_(active_slot()) { active_slot() = &tape; }
    ~Recording() { active_slot() = previous_; }
    Recording(const Recording&) = delete;
    Recording& operator=(const Recording&) = delete;

   private:
    Tape* previous_;
  };

  /// Suspends recording (inference inside a training loop, finite differences).
  class Pause {
   public:
    Pause() : previous_(active_slot()) { active_slot() = nullptr; }
    ~Pause() { active_slot() = previous_; }
    Pause(const Pause&) = delete;
    Pause& operator=(const Pause&) = delete;

   private:
    Tape* previous_;
  };

  static Tape* active() { return active_slot(); }

  void record(Entry e) { entries_.push_back(std::move(e)); }
  std::size_t size() const { return entries_.size(); }
  const std::vector<Entry>& entries() const { return entries_; }
  void clear() { entries_.clear(); }

  /// Seeds d(loss)/d(loss) = 1 and replays the tape in reverse. Leaf gradients
  /// accumulate (sum over use sites); intermediate gradients are released.
  /// The tape is cleared afterwards.
  void backward(const Tensor<T>& loss) {
    if (!loss.defined() || loss.numel() != 1) {
      throw ContractError("backward: loss must be a scalar, got dims " +
                          (loss.defined() ? shape_str(loss.dims()) : std::string("<undefined>")));
    }
    if (!loss.requires_grad() || loss.is_leaf()) {
      bool found = false;
      for (const auto& e : entries_) found = found || e.output == loss.node();
      if (!found) throw ContractError("backward: loss was not produced on this tape");
    }
    loss.node()->ensure_grad();
    loss.node()->grad[0] += T{1};
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
      if (it->output->grad.empty()) continue;
      it->backward();
      if (!it->output->leaf) {
        it->output->grad.clear();
        it->output->grad.shrink_to_fit();
      }
    }
    entries_.clear();
  }

 private:
  static Tape*& active_slot() {
    thread_local Tape* slot = nullptr;
    return slot;
  }

  std::vector<Entry> entries_;
};

}  // namespace stf
