// Copyright (c) 2026, The looplab authors
// SPDX-License-Identifier: Apache-2.0
//
// Byte-level tokenizer, corpus loading and a deterministic synthetic text generator.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "looplab/model.hpp"
#include "looplab/rng.hpp"

namespace looplab {

inline std::vector<int> encode_bytes(const std::string& text) {
    std::vector<int> out;
    out.reserve(text.size());
    for (unsigned char c : text) out.push_back(static_cast<int>(c));
    return out;
}

/// Inverse of encode_bytes; special tokens are dropped.
inline std::string decode_bytes(const std::vector<int>& tokens) {
    std::string out;
    out.reserve(tokens.size());
    for (int t : tokens) {
        if (t < 0 || t >= kVocabSize) throw std::out_of_range("decode_bytes: token " + std::to_string(t));
        if (t < kByteVocab) out.push_back(static_cast<char>(static_cast<unsigned char>(t)));
    }
    return out;
}

/// BOS doc EOS BOS doc EOS ...
inline std::vector<int> encode_documents(const std::vector<std::string>& docs) {
    std::vector<int> out;
    for (const auto& d : docs) {
        out.push_back(kBos);
        const auto t = encode_bytes(d);
        out.insert(out.end(), t.begin(), t.end());
        out.push_back(kEos);
    }
    return out;
}

/// Splits on a document separator line (a line holding exactly "\x1e") or, when
/// absent, on blank lines.
inline std::vector<std::string> split_documents(const std::string& text) {
    std::vector<std::string> docs;
    const std::string rs = "\n\x1e\n";
    const std::string sep = text.find(rs) != std::string::npos ? rs : "\n\n";
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t next = text.find(sep, pos);
        const std::string doc = text.substr(pos, next == std::string::npos ? std::string::npos : next - pos);
        if (!doc.empty()) docs.push_back(doc);
        if (next == std::string::npos) break;
        pos = next + sep.size();
    }
    return docs;
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw std::runtime_error("error reading '" + path.string() + "'");
    return ss.str();
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xf];
    return s;
}

struct Corpus {
    std::vector<int> train, validation;
    std::size_t documents = 0;
    std::uint64_t bytes = 0;
    std::string hash;  // FNV-1a of the raw bytes
};

/// Tokenizes `text` into documents and holds out the final `val_frac` of tokens.
inline Corpus make_corpus(const std::string& text, double val_frac = 0.1) {
    if (text.empty()) throw std::invalid_argument("corpus is empty");
    if (!(val_frac >= 0.0 && val_frac < 1.0)) throw std::invalid_argument("corpus: validation fraction must be in [0, 1)");
    const auto docs = split_documents(text);
    const auto tokens = encode_documents(docs);
    const auto n_val = static_cast<std::size_t>(std::floor(val_frac * static_cast<double>(tokens.size())));
    Corpus c;
    c.train.assign(tokens.begin(), tokens.end() - static_cast<std::ptrdiff_t>(n_val));
    c.validation.assign(tokens.end() - static_cast<std::ptrdiff_t>(n_val), tokens.end());
    c.documents = docs.size();
    c.bytes = text.size();
    c.hash = hex64(fnv1a64(text.data(), text.size()));
    return c;
}

inline Corpus load_corpus(const std::filesystem::path& path, double val_frac = 0.1) {
    if (!std::filesystem::is_regular_file(path)) throw std::runtime_error("corpus '" + path.string() + "' not found");
    return make_corpus(read_file(path), val_frac);
}

/// English-like synthetic text: a fixed lexicon of syllable words, sentences
/// from a sparse Zipf-weighted word-transition table, paragraphs separated by
/// blank lines. Fully determined by (bytes, seed).
inline std::string synthetic_text(std::size_t bytes, std::uint64_t seed = 1) {
    Rng rng(seed, 0x7e47);
    static const char* onsets[] = {"b", "c", "d", "f", "g", "h", "l", "m", "n", "p", "r", "s", "t", "v", "w",
                                   "br", "ch", "st", "th", "tr", "pl", "gr", "sh", "k"};
    static const char* vowels[] = {"a", "e", "i", "o", "u", "ai", "ea", "ou", "ie", "oo"};
    static const char* codas[] = {"", "", "", "n", "r", "s", "t", "l", "nd", "st", "m", "ck"};
    auto pick = [&](const auto& arr) { return arr[rng.below(std::size(arr))]; };

    const std::size_t n_words = 600;
    std::vector<std::string> words;
    for (std::size_t i = 0; i < n_words; ++i) {
        const std::size_t syl = 1 + rng.below(i < 60 ? 1 : 3);
        std::string w;
        for (std::size_t s = 0; s < syl; ++s) w += std::string(pick(onsets)) + pick(vowels) + pick(codas);
        words.push_back(w);
    }
    // Zipf weights and, per word, a short list of likely successors.
    std::vector<double> cdf(n_words);
    double acc = 0.0;
    for (std::size_t i = 0; i < n_words; ++i) cdf[i] = acc += 1.0 / std::pow(static_cast<double>(i + 1), 1.1);
    for (auto& c : cdf) c /= acc;
    auto zipf = [&] {
        const double u = rng.uniform();
        std::size_t lo = 0, hi = n_words - 1;
        while (lo < hi) {
            const std::size_t mid = (lo + hi) / 2;
            if (cdf[mid] < u) lo = mid + 1;
            else hi = mid;
        }
        return lo;
    };
    const std::size_t fanout = 6;
    std::vector<std::vector<std::size_t>> next(n_words);
    for (auto& nx : next)
        for (std::size_t j = 0; j < fanout; ++j) nx.push_back(zipf());

    std::string out;
    out.reserve(bytes + 256);
    std::size_t sentences_in_par = 0;
    while (out.size() < bytes) {
        const std::size_t len = 4 + rng.below(9);
        std::size_t w = zipf();
        for (std::size_t i = 0; i < len; ++i) {
            std::string word = words[w];
            if (i == 0) word[0] = static_cast<char>(word[0] - 'a' + 'A');
            out += word;
            if (i + 1 < len) out += (rng.uniform() < 0.08 ? ", " : " ");
            // Mostly follow the transition table; sometimes jump.
            w = rng.uniform() < 0.85 ? next[w][std::min(rng.below(fanout), rng.below(fanout))] : zipf();
        }
        out += rng.uniform() < 0.1 ? "?" : ".";
        if (++sentences_in_par >= 3 + rng.below(5)) {
            out += "\n\n";
            sentences_in_par = 0;
        } else {
            out += " ";
        }
    }
    out.resize(bytes);
    return out;
}

}  // namespace looplab
