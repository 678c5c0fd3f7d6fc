#pragma once

#include <string>

#include "fmpn/errors.hpp"

namespace fmpn {

/// Learning-rate schedule of one training stage: constant at base_lr until
/// decay_start, then linear decay reaching exactly 0 at total_epochs.
struct StageSchedule {
    double base_lr = 1e-4;
    int total_epochs = 0;
    int decay_start = 0;

    void validate() const {
        if (base_lr <= 0.0) throw ConfigError("schedule: base_lr must be > 0");
        if (total_epochs < 0) throw ConfigError("schedule: total_epochs must be >= 0");
        if (total_epochs > 0 && (decay_start < 0 || decay_start >= total_epochs)) {
            throw ConfigError("schedule: decay_start must lie in [0, total_epochs)");
        }
    }
};

inline double lr_at(const StageSchedule& s, int epoch) {
    if (epoch < 0 || epoch > s.total_epochs) {
        throw ArgumentError("lr_at: epoch " + std::to_string(epoch) + " outside [0," +
                            std::to_string(s.total_epochs) + "]");
    }
    if (epoch < s.decay_start) return s.base_lr;
    return s.base_lr * static_cast<double>(s.total_epochs - epoch) /
           static_cast<double>(s.total_epochs - s.decay_start);
}

} // namespace fmpn
