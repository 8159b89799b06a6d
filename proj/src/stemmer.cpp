#include <string>

#include "gcap/metrics.hpp"

namespace gcap {

// Porter, M. "An algorithm for suffix stripping" — the standard five steps.
namespace {

bool is_vowel_at(const std::string& w, std::size_t i) {
    switch (w[i]) {
        case 'a': case 'e': case 'i': case 'o': case 'u':
            return true;
        case 'y':
            return i > 0 && !is_vowel_at(w, i - 1);
        default:
            return false;
    }
}

// number of VC sequences in the stem
int measure(const std::string& w) {
    int m = 0;
    bool in_vowel_run = false;
    for (std::size_t i = 0; i < w.size(); ++i) {
        if (is_vowel_at(w, i)) {
            in_vowel_run = true;
        } else if (in_vowel_run) {
            ++m;
            in_vowel_run = false;
        }
    }
    return m;
}

bool contains_vowel(const std::string& w) {
    for (std::size_t i = 0; i < w.size(); ++i)
        if (is_vowel_at(w, i)) return true;
    return false;
}

bool double_consonant_end(const std::string& w) {
    const std::size_t n = w.size();
    return n >= 2 && w[n - 1] == w[n - 2] && !is_vowel_at(w, n - 1);
}

// consonant-vowel-consonant ending where the final consonant is not w, x, y
bool cvc_end(const std::string& w) {
    const std::size_t n = w.size();
    if (n < 3) return false;
    if (is_vowel_at(w, n - 3) || !is_vowel_at(w, n - 2) || is_vowel_at(w, n - 1)) return false;
    const char c = w[n - 1];
    return c != 'w' && c != 'x' && c != 'y';
}

bool ends_with(const std::string& w, const char* suffix) {
    const std::size_t n = std::char_traits<char>::length(suffix);
    return w.size() >= n && w.compare(w.size() - n, n, suffix) == 0;
}

// replace `suffix` by `repl` when the remaining stem has measure > min_m
bool replace_m(std::string& w, const char* suffix, const char* repl, int min_m) {
    if (!ends_with(w, suffix)) return false;
    const std::size_t cut = w.size() - std::char_traits<char>::length(suffix);
    const std::string stem = w.substr(0, cut);
    if (measure(stem) <= min_m) return true;  // suffix matched, rule does not fire
    w = stem + repl;
    return true;
}

void step1a(std::string& w) {
    if (ends_with(w, "sses")) w.resize(w.size() - 2);
    else if (ends_with(w, "ies")) w.resize(w.size() - 2);
    else if (ends_with(w, "ss")) {}
    else if (ends_with(w, "s")) w.resize(w.size() - 1);
}

void step1b(std::string& w) {
    if (ends_with(w, "eed")) {
        if (measure(w.substr(0, w.size() - 3)) > 0) w.resize(w.size() - 1);
        return;
    }
    bool stripped = false;
    if (ends_with(w, "ed") && contains_vowel(w.substr(0, w.size() - 2))) {
        w.resize(w.size() - 2);
        stripped = true;
    } else if (ends_with(w, "ing") && contains_vowel(w.substr(0, w.size() - 3))) {
        w.resize(w.size() - 3);
        stripped = true;
    }
    if (!stripped) return;
    if (ends_with(w, "at") || ends_with(w, "bl") || ends_with(w, "iz")) {
        w.push_back('e');
    } else if (double_consonant_end(w)) {
        const char c = w.back();
        if (c != 'l' && c != 's' && c != 'z') w.pop_back();
    } else if (measure(w) == 1 && cvc_end(w)) {
        w.push_back('e');
    }
}

void step1c(std::string& w) {
    if (ends_with(w, "y") && contains_vowel(w.substr(0, w.size() - 1))) w.back() = 'i';
}

void step2(std::string& w) {
    static const std::pair<const char*, const char*> rules[] = {
        {"ational", "ate"}, {"tional", "tion"}, {"enci", "ence"}, {"anci", "ance"},
        {"izer", "ize"},    {"abli", "able"},   {"alli", "al"},   {"entli", "ent"},
        {"eli", "e"},       {"ousli", "ous"},   {"ization", "ize"}, {"ation", "ate"},
        {"ator", "ate"},    {"alism", "al"},    {"iveness", "ive"}, {"fulness", "ful"},
        {"ousness", "ous"}, {"aliti", "al"},    {"iviti", "ive"},  {"biliti", "ble"},
    };
    for (const auto& [suffix, repl] : rules)
        if (replace_m(w, suffix, repl, 0)) return;
}

void step3(std::string& w) {
    static const std::pair<const char*, const char*> rules[] = {
        {"icate", "ic"}, {"ative", ""}, {"alize", "al"}, {"iciti", "ic"},
        {"ical", "ic"},  {"ful", ""},   {"ness", ""},
    };
    for (const auto& [suffix, repl] : rules)
        if (replace_m(w, suffix, repl, 0)) return;
}

void step4(std::string& w) {
    static const char* suffixes[] = {"al",   "ance", "ence", "er",  "ic",  "able", "ible",
                                     "ant",  "ement", "ment", "ent", "ion", "ou",   "ism",
                                     "ate",  "iti",   "ous",  "ive", "ize"};
    for (const char* suffix : suffixes) {
        if (!ends_with(w, suffix)) continue;
        const std::size_t cut = w.size() - std::char_traits<char>::length(suffix);
        const std::string stem = w.substr(0, cut);
        if (measure(stem) > 1) {
            if (std::string(suffix) == "ion" && !(ends_with(stem, "s") || ends_with(stem, "t")))
                return;
            w = stem;
        }
        return;
    }
}

void step5(std::string& w) {
    if (ends_with(w, "e")) {
        const std::string stem = w.substr(0, w.size() - 1);
        const int m = measure(stem);
        if (m > 1 || (m == 1 && !cvc_end(stem))) w = stem;
    }
    if (ends_with(w, "ll") && measure(w.substr(0, w.size() - 1)) > 1) w.pop_back();
}

}  // namespace

std::string porter_stem(const std::string& word) {
    if (word.size() <= 2) return word;
    std::string w = word;
    step1a(w);
    step1b(w);
    step1c(w);
    step2(w);
    step3(w);
    step4(w);
    step5(w);
    return w;
}

}  // namespace gcap
