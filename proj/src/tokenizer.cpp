#include "tlm/tokenizer.hpp"

#include <clocale>
#include <cstdint>
#include <cwctype>
#include <locale.h>

namespace tlm {
namespace {

// glibc's C.UTF-8 carries full Unicode ctype tables; without it we fall back
// to ASCII rules and treat every non-ASCII code point as alphanumeric.
class UnicodeCtype {
public:
    UnicodeCtype() : loc_(newlocale(LC_CTYPE_MASK, "C.UTF-8", static_cast<locale_t>(nullptr))) {}
    ~UnicodeCtype() {
        if (loc_ != static_cast<locale_t>(nullptr)) freelocale(loc_);
    }
    UnicodeCtype(const UnicodeCtype&) = delete;
    UnicodeCtype& operator=(const UnicodeCtype&) = delete;

    bool is_alnum(char32_t cp) const {
        if (cp < 0x80) return (cp >= '0' && cp <= '9') || (cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z');
        if (loc_ == static_cast<locale_t>(nullptr)) return true;
        return iswalnum_l(static_cast<wint_t>(cp), loc_) != 0;
    }
    bool is_space(char32_t cp) const {
        if (cp < 0x80) return cp == ' ' || (cp >= '\t' && cp <= '\r');
        if (loc_ == static_cast<locale_t>(nullptr)) return false;
        return iswspace_l(static_cast<wint_t>(cp), loc_) != 0;
    }
    char32_t to_lower(char32_t cp) const {
        if (cp < 0x80) return (cp >= 'A' && cp <= 'Z') ? cp + 32 : cp;
        if (loc_ == static_cast<locale_t>(nullptr)) return cp;
        return static_cast<char32_t>(towlower_l(static_cast<wint_t>(cp), loc_));
    }

private:
    locale_t loc_;
};

const UnicodeCtype& ctype() {
    static const UnicodeCtype instance;
    return instance;
}

// Decodes one code point starting at `i`; invalid bytes decode as U+FFFD and
// consume one byte.
char32_t decode(std::string_view s, std::size_t& i) {
    auto b0 = static_cast<unsigned char>(s[i]);
    if (b0 < 0x80) {
        ++i;
        return b0;
    }
    int len = 0;
    char32_t cp = 0;
    if ((b0 & 0xE0) == 0xC0) {
        len = 2;
        cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
        len = 3;
        cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
        len = 4;
        cp = b0 & 0x07;
    } else {
        ++i;
        return 0xFFFD;
    }
    if (i + static_cast<std::size_t>(len) > s.size()) {
        ++i;
        return 0xFFFD;
    }
    for (int k = 1; k < len; ++k) {
        auto b = static_cast<unsigned char>(s[i + static_cast<std::size_t>(k)]);
        if ((b & 0xC0) != 0x80) {
            ++i;
            return 0xFFFD;
        }
        cp = (cp << 6) | (b & 0x3F);
    }
    i += static_cast<std::size_t>(len);
    return cp;
}

void encode(char32_t cp, std::string& out) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
    const auto& ct = ctype();
    std::vector<std::string> terms;
    std::string current;
    std::size_t i = 0;
    while (i < text.size()) {
        char32_t cp = decode(text, i);
        if (ct.is_alnum(cp)) {
            encode(ct.to_lower(cp), current);
            continue;
        }
        if (!current.empty()) {
            terms.push_back(std::move(current));
            current.clear();
        }
        if (ct.is_space(cp)) continue;
        std::string single;
        encode(ct.to_lower(cp), single);
        terms.push_back(std::move(single));
    }
    if (!current.empty()) terms.push_back(std::move(current));
    return terms;
}

bool is_punctuation_term(std::string_view term) {
    if (term.empty()) return false;
    std::size_t i = 0;
    char32_t cp = decode(term, i);
    return i == term.size() && !ctype().is_alnum(cp);
}

bool is_valid_utf8(std::string_view s) {
    std::size_t i = 0;
    while (i < s.size()) {
        auto b0 = static_cast<unsigned char>(s[i]);
        if (b0 < 0x80) {
            ++i;
            continue;
        }
        std::size_t len = 0;
        char32_t cp = 0;
        char32_t min_cp = 0;
        if ((b0 & 0xE0) == 0xC0) {
            len = 2;
            cp = b0 & 0x1F;
            min_cp = 0x80;
        } else if ((b0 & 0xF0) == 0xE0) {
            len = 3;
            cp = b0 & 0x0F;
            min_cp = 0x800;
        } else if ((b0 & 0xF8) == 0xF0) {
            len = 4;
            cp = b0 & 0x07;
            min_cp = 0x10000;
        } else {
            return false;
        }
        if (i + len > s.size()) return false;
        for (std::size_t k = 1; k < len; ++k) {
            auto b = static_cast<unsigned char>(s[i + k]);
            if ((b & 0xC0) != 0x80) return false;
            cp = (cp << 6) | (b & 0x3F);
        }
        if (cp < min_cp || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return false;
        i += len;
    }
    return true;
}

}  // namespace tlm
