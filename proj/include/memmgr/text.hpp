#pragma once

#include <filesystem>
#include <set>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace memmgr {

using TokenSet = std::set<std::string>;

std::string_view trim(std::string_view s);
bool is_blank(std::string_view s);

// Lowercase, delete ASCII punctuation, collapse whitespace runs to one space.
// Two sentences are "normalized-equal" when their canonical forms match.
std::string canonical_form(std::string_view s);

std::vector<std::string> tokenize(std::string_view s);

class StopwordList {
public:
    StopwordList() = default;

    // One token per line; blank lines and lines starting with '#' are ignored.
    static StopwordList parse(std::string_view text);
    static StopwordList load(const std::filesystem::path& path);
    // The list in data/stopwords_en_v1.txt, compiled into the library.
    static const StopwordList& english_v1();

    bool contains(const std::string& token) const { return words_.count(token) != 0; }
    std::size_t size() const { return words_.size(); }

private:
    std::unordered_set<std::string> words_;
};

// Content-token set: canonical tokens minus stopwords.
TokenSet normalize(std::string_view s, const StopwordList& stopwords = StopwordList::english_v1());

// |a ∩ b| / |a ∪ b|; two empty sets are identical (1.0).
double jaccard(const TokenSet& a, const TokenSet& b);

bool is_subset(const TokenSet& small, const TokenSet& large);
bool is_strict_subset(const TokenSet& small, const TokenSet& large);

}  // namespace memmgr
