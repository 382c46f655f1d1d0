#include "kvr/difficulty.hpp"

namespace kvr::difficulty {

DifficultyLabel assign_label(bool fast_correct, bool slow_correct, std::uint64_t fast_len) {
    DifficultyLabel label{0, fast_correct, slow_correct, fast_len};
    if (fast_correct)
        label.d = fast_len < kShortAnswerTokens ? 0 : 25;
    else
        label.d = slow_correct ? 75 : 100;
    return label;
}

}  // namespace kvr::difficulty
