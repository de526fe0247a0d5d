#pragma once

#include <atomic>
#include <cstdint>

namespace gmpslab::envs {

/// Process-wide tally of simulated environment transitions. Every step taken
/// through this module increments it, independently of the bookkeeping done
/// by trainers, so the two can be cross-checked.
class StepCounter {
 public:
  void add(std::int64_t n) { count_.fetch_add(n, std::memory_order_relaxed); }
  std::int64_t value() const { return count_.load(std::memory_order_relaxed); }
  void reset() { count_.store(0, std::memory_order_relaxed); }

 private:
  std::atomic<std::int64_t> count_{0};
};

/// Steps used for learning.
StepCounter& global_step_counter();
/// Steps spent measuring performance (held-out evaluation, reporting).
StepCounter& evaluation_step_counter();

/// Routes steps simulated on this thread to the evaluation counter while alive.
class EvaluationScope {
 public:
  explicit EvaluationScope(bool active = true);
  ~EvaluationScope();
  EvaluationScope(const EvaluationScope&) = delete;
  EvaluationScope& operator=(const EvaluationScope&) = delete;

 private:
  bool previous_;
};

/// True while an EvaluationScope is active on this thread.
bool evaluation_active();

/// Adds n steps to whichever counter is active on this thread.
void record_steps(std::int64_t n);

}  // namespace gmpslab::envs
