#include "steerlab/errors.hpp"

namespace steerlab {

int exit_code_for(ErrorCategory category) noexcept {
    switch (category) {
        case ErrorCategory::usage: return 2;
        case ErrorCategory::data: return 3;
        case ErrorCategory::io: return 4;
    }
    return 1;
}

}  // namespace steerlab
