#include "cmdplab/learner.hpp"

#include <ostream>

#include "cmdplab/format.hpp"

namespace cmdplab {

// Wall-clock solve times are left out so logs stay reproducible.
void Learner::write_epoch_log(std::ostream& out) const {
  out << "epoch,start_time,epsilon,objective,status,slack,dual\n";
  for (const auto& e : epochs_) {
    out << e.epoch << ',' << e.start_time << ',' << format_double(e.epsilon) << ',' << format_double(e.objective)
        << ',' << e.status << ',' << format_double(e.slack) << ',' << format_double(e.dual) << '\n';
  }
}

}  // namespace cmdplab
