#ifndef QAFILA_JUDGE_REPLY_HPP
#define QAFILA_JUDGE_REPLY_HPP

#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "qafila/corpus_model.hpp"

namespace qafila {

class ReplyParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ReplyRangeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Keys a judge reply must supply: {"DA","CA"} for dialect scoring,
/// {"reference","candidate"} for relative scoring, {"score"} otherwise.
std::vector<std::string> reply_dimensions(Rubric rubric);

/// Extracts judge scores. A JSON object carrying every required key wins;
/// otherwise labelled numbers ("Authenticity 7/10"), then the first N
/// standalone numbers in order. Scale mentions ("1-10", "/10", "out of 10")
/// are never read as scores. Throws ReplyParseError if too few numbers are
/// found and ReplyRangeError if any score falls outside [1, 10].
std::map<std::string, double> parse_judge_reply(std::string_view text, Rubric rubric);

}  // namespace qafila

#endif  // QAFILA_JUDGE_REPLY_HPP
