#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

namespace cmdplab {

/// One line of a learner's per-epoch log.
struct EpochRecord {
  std::size_t epoch = 0;
  std::size_t start_time = 0;
  double epsilon = 0.0;
  double objective = 0.0;
  std::string status;
  double slack = 0.0;
  double dual = 0.0;
  double solve_seconds = 0.0;
};

/// Online agent driven one environment step at a time. The driver calls
/// act() with the current state, samples the environment, then reports the
/// transition through observe().
class Learner {
 public:
  virtual ~Learner() = default;

  virtual std::size_t act(std::size_t state) = 0;
  virtual void observe(std::size_t state, std::size_t action, std::size_t next_state) = 0;

  const std::vector<EpochRecord>& epochs() const { return epochs_; }

  /// Per-epoch log as CSV with a header line.
  virtual void write_epoch_log(std::ostream& out) const;

 protected:
  std::vector<EpochRecord> epochs_;
};

}  // namespace cmdplab
