#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace clarifyir {

using TokenStream = std::vector<std::string>;

// Lowercases ASCII letters and splits on every byte that is not an ASCII
// letter or digit. Non-ASCII bytes act as separators.
TokenStream tokenize(std::string_view text);

// English stopword list used only by keyword extraction.
bool is_stopword(std::string_view token);

}  // namespace clarifyir
