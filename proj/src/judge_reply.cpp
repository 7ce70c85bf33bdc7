#include "qafila/judge_reply.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <optional>
#include <regex>

namespace qafila {

namespace {

struct DimensionSpec {
    std::string key;
    std::vector<std::string> json_aliases;  // normalized: lowercase, '_'/'-' -> ' '
    std::string label_pattern;
};

std::vector<DimensionSpec> specs_for(Rubric rubric) {
    switch (rubric) {
        case Rubric::dialect_da_ca:
            return {{"DA",
                     {"da", "dialect authenticity", "dialect authenticity score", "authenticity"},
                     R"((?:dialect\s+authenticity|authenticity|\bDA\b))"},
                    {"CA",
                     {"ca", "content accuracy", "content accuracy score", "context accuracy", "context accuracy score",
                      "accuracy"},
                     R"((?:content\s+accuracy|context\s+accuracy|accuracy|\bCA\b))"}};
        case Rubric::msa_relative:
            return {{"reference", {"reference", "assistant 1", "assistant1", "ref"}, R"((?:reference|assistant\s*1))"},
                    {"candidate", {"candidate", "assistant 2", "assistant2"}, R"((?:candidate|assistant\s*2))"}};
        case Rubric::human_overall:
            return {{"score", {"score", "overall", "overall score"}, R"((?:overall\s+score|overall|score))"}};
    }
    return {};
}

std::string normalize_key(std::string key) {
    for (auto& c : key) {
        c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        if (c == '_' || c == '-') c = ' ';
    }
    auto b = key.find_first_not_of(' ');
    auto e = key.find_last_not_of(' ');
    return b == std::string::npos ? std::string() : key.substr(b, e - b + 1);
}

std::optional<double> json_number(const Json& v) {
    if (v.is_number()) return v.get<double>();
    if (v.is_string()) {
        const auto s = v.get<std::string>();
        static const std::regex num(R"(\s*(-?\d+(?:\.\d+)?)\s*(?:/\s*10)?\s*)");
        std::smatch m;
        if (std::regex_match(s, m, num)) return std::stod(m[1].str());
    }
    return std::nullopt;
}

// Balanced {...} substrings, outermost first, in order of appearance.
std::vector<std::string_view> object_candidates(std::string_view text) {
    std::vector<std::string_view> out;
    for (std::size_t start = text.find('{'); start != std::string_view::npos; start = text.find('{', start + 1)) {
        int depth = 0;
        bool in_string = false;
        for (std::size_t i = start; i < text.size(); ++i) {
            const char c = text[i];
            if (in_string) {
                if (c == '\\') ++i;
                else if (c == '"') in_string = false;
                continue;
            }
            if (c == '"') in_string = true;
            else if (c == '{') ++depth;
            else if (c == '}' && --depth == 0) {
                out.push_back(text.substr(start, i - start + 1));
                break;
            }
        }
    }
    return out;
}

std::optional<std::map<std::string, double>> from_json(std::string_view text, const std::vector<DimensionSpec>& specs) {
    for (auto candidate : object_candidates(text)) {
        Json j;
        try {
            j = Json::parse(candidate.begin(), candidate.end());
        } catch (const nlohmann::json::parse_error&) {
            continue;
        }
        if (!j.is_object()) continue;
        std::map<std::string, double> values;
        for (const auto& spec : specs) {
            for (auto it = j.begin(); it != j.end(); ++it) {
                const auto key = normalize_key(it.key());
                if (std::find(spec.json_aliases.begin(), spec.json_aliases.end(), key) == spec.json_aliases.end())
                    continue;
                if (auto v = json_number(it.value())) values[spec.key] = *v;
                break;
            }
        }
        if (values.size() == specs.size()) return values;
    }
    return std::nullopt;
}

std::string strip_scale_mentions(std::string text) {
    static const std::regex range(R"(\b1\s*(?:-|–|to|through)\s*10\b)", std::regex::icase);
    static const std::regex denominator(R"((?:/|\bout\s+of)\s*10(?:\.0+)?\b)", std::regex::icase);
    text = std::regex_replace(text, range, " ");
    return std::regex_replace(text, denominator, " ");
}

std::optional<std::map<std::string, double>> from_labels(const std::string& text,
                                                         const std::vector<DimensionSpec>& specs) {
    std::map<std::string, double> values;
    for (const auto& spec : specs) {
        const std::regex re(spec.label_pattern +
                                R"((?:\s*score)?[\s:=*"'()\[\]]*(?:(?:is|of|gets|receives|scores?|rated|rating)\s*[:=]?\s*)?(-?\d+(?:\.\d+)?))",
                            std::regex::icase);
        std::smatch m;
        if (!std::regex_search(text, m, re)) return std::nullopt;
        values[spec.key] = std::stod(m[1].str());
    }
    return values;
}

std::vector<double> standalone_numbers(const std::string& text) {
    static const std::regex assistant_label(R"(assistant\s*[12])", std::regex::icase);
    const std::string t = std::regex_replace(text, assistant_label, " ");
    auto is_word = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; };
    std::vector<double> out;
    std::size_t i = 0;
    while (i < t.size()) {
        const bool neg = t[i] == '-' && i + 1 < t.size() && std::isdigit(static_cast<unsigned char>(t[i + 1]));
        if (!neg && !std::isdigit(static_cast<unsigned char>(t[i]))) {
            ++i;
            continue;
        }
        const std::size_t start = i;
        if (neg) ++i;
        while (i < t.size() && std::isdigit(static_cast<unsigned char>(t[i]))) ++i;
        if (i + 1 < t.size() && t[i] == '.' && std::isdigit(static_cast<unsigned char>(t[i + 1]))) {
            ++i;
            while (i < t.size() && std::isdigit(static_cast<unsigned char>(t[i]))) ++i;
        }
        const bool glued_before = start > 0 && (is_word(t[start - 1]) || t[start - 1] == '.');
        const bool glued_after = i < t.size() && is_word(t[i]);
        if (!glued_before && !glued_after) out.push_back(std::stod(t.substr(start, i - start)));
    }
    return out;
}

}  // namespace

std::vector<std::string> reply_dimensions(Rubric rubric) {
    std::vector<std::string> out;
    for (const auto& s : specs_for(rubric)) out.push_back(s.key);
    return out;
}

std::map<std::string, double> parse_judge_reply(std::string_view text, Rubric rubric) {
    const auto specs = specs_for(rubric);
    auto values = from_json(text, specs);
    if (!values) {
        const std::string cleaned = strip_scale_mentions(std::string(text));
        values = from_labels(cleaned, specs);
        if (!values) {
            const auto numbers = standalone_numbers(cleaned);
            if (numbers.size() < specs.size())
                throw ReplyParseError("judge reply has " + std::to_string(numbers.size()) + " usable numbers, need " +
                                      std::to_string(specs.size()));
            values.emplace();
            for (std::size_t i = 0; i < specs.size(); ++i) (*values)[specs[i].key] = numbers[i];
        }
    }
    for (const auto& [key, v] : *values) {
        if (!std::isfinite(v) || v < 1.0 || v > 10.0) {
            char buf[64];
            std::snprintf(buf, sizeof buf, "%g", v);
            throw ReplyRangeError(key + " = " + buf + (v < 1.0 ? " is below minimum 1" : " is above maximum 10"));
        }
    }
    return *values;
}

}  // namespace qafila
