#include "memmgr/text.hpp"

#include "memmgr/error.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iterator>
#include <sstream>

namespace memmgr {

namespace detail {
extern const std::string_view kStopwordsEnV1;
}

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

}  // namespace

std::string_view trim(std::string_view s) {
    while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
    while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
    return s;
}

bool is_blank(std::string_view s) { return trim(s).empty(); }

std::string canonical_form(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    bool pending_space = false;
    for (char c : s) {
        const auto uc = static_cast<unsigned char>(c);
        if (std::ispunct(uc)) continue;
        if (std::isspace(uc)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) {
            out.push_back(' ');
            pending_space = false;
        }
        out.push_back(static_cast<char>(std::tolower(uc)));
    }
    return out;
}

std::vector<std::string> tokenize(std::string_view s) {
    std::vector<std::string> tokens;
    const std::string canon = canonical_form(s);
    std::size_t start = 0;
    while (start < canon.size()) {
        std::size_t end = canon.find(' ', start);
        if (end == std::string::npos) end = canon.size();
        tokens.emplace_back(canon.substr(start, end - start));
        start = end + 1;
    }
    return tokens;
}

StopwordList StopwordList::parse(std::string_view text) {
    StopwordList list;
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
        const auto word = trim(line);
        if (word.empty() || word.front() == '#') continue;
        list.words_.insert(canonical_form(word));
    }
    return list;
}

StopwordList StopwordList::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot read stopword list: " + path.string());
    std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    return parse(text);
}

const StopwordList& StopwordList::english_v1() {
    static const StopwordList list = parse(detail::kStopwordsEnV1);
    return list;
}

TokenSet normalize(std::string_view s, const StopwordList& stopwords) {
    TokenSet out;
    for (auto& token : tokenize(s)) {
        if (!stopwords.contains(token)) out.insert(std::move(token));
    }
    return out;
}

double jaccard(const TokenSet& a, const TokenSet& b) {
    if (a.empty() && b.empty()) return 1.0;
    std::size_t common = 0;
    auto ia = a.begin();
    auto ib = b.begin();
    while (ia != a.end() && ib != b.end()) {
        if (*ia < *ib) {
            ++ia;
        } else if (*ib < *ia) {
            ++ib;
        } else {
            ++common;
            ++ia;
            ++ib;
        }
    }
    const std::size_t total = a.size() + b.size() - common;
    return static_cast<double>(common) / static_cast<double>(total);
}

bool is_subset(const TokenSet& small, const TokenSet& large) {
    return std::includes(large.begin(), large.end(), small.begin(), small.end());
}

bool is_strict_subset(const TokenSet& small, const TokenSet& large) {
    return small.size() < large.size() && is_subset(small, large);
}

}  // namespace memmgr
