#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace redirect {

enum class Punctuation { keep, drop };

/// Lowercasing whitespace/punctuation tokenizer shared by the n-gram scorer,
/// TF-IDF embedder and term counting.
///
/// ASCII letters and digits form words and are folded to lowercase. Bytes
/// >= 0x80 (UTF-8 continuation and lead bytes) are treated as word
/// characters and kept verbatim. An apostrophe joins two word runs
/// ("don't"). Every other ASCII punctuation character is a one-character
/// token with Punctuation::keep and a separator with Punctuation::drop.
std::vector<std::string> tokenize(std::string_view text,
                                  Punctuation punct = Punctuation::keep);

/// Strips leading/trailing ASCII whitespace and turns CRLF / CR into LF.
std::string normalize_text(std::string_view text);

}  // namespace redirect
