#pragma once

#include <string>
#include <string_view>

namespace keyetm {

// Porter's suffix-stripping algorithm, original 1980 rule set (steps 1a-5b).
// Input must be lowercase ASCII letters; words of length <= 2 are returned
// unchanged, as in the reference implementation.
std::string porter_stem(std::string_view word);

}  // namespace keyetm
