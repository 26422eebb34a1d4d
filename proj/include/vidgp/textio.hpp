#pragma once

#include <cstdio>
#include <string>
#include <vector>

#include "vidgp/errors.hpp"

namespace vidgp {

/// Shortest decimal form that round-trips a double exactly.
inline std::string fmt_full(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

/// Whitespace tokenizer that remembers line numbers for parse errors.
class Tokenizer {
public:
    explicit Tokenizer(const std::string& text) : text_(text) {}

    bool next(std::string& tok) {
        while (pos_ < text_.size() && is_space(text_[pos_])) {
            if (text_[pos_] == '\n') ++line_;
            ++pos_;
        }
        if (pos_ >= text_.size()) return false;
        const std::size_t start = pos_;
        while (pos_ < text_.size() && !is_space(text_[pos_])) ++pos_;
        tok = text_.substr(start, pos_ - start);
        ++count_;
        return true;
    }

    std::string expect(const char* what) {
        std::string tok;
        if (!next(tok))
            throw ParseError(std::string("unexpected end of input, expected ") + what +
                             " at line " + std::to_string(line_));
        return tok;
    }

    double expect_double(const char* what) {
        const std::string tok = expect(what);
        char* end = nullptr;
        const double v = std::strtod(tok.c_str(), &end);
        if (end == tok.c_str() || *end != '\0')
            throw ParseError(std::string("bad ") + what + " token '" + tok + "' at line " +
                             std::to_string(line_));
        return v;
    }

    long expect_long(const char* what) {
        const std::string tok = expect(what);
        char* end = nullptr;
        const long v = std::strtol(tok.c_str(), &end, 10);
        if (end == tok.c_str() || *end != '\0')
            throw ParseError(std::string("bad ") + what + " token '" + tok + "' at line " +
                             std::to_string(line_));
        return v;
    }

    long line() const { return line_; }
    long token_count() const { return count_; }

private:
    static bool is_space(char c) {
        return c == ' ' || c == '\t' || c == '\n' || c == '\r';
    }
    const std::string& text_;
    std::size_t pos_ = 0;
    long line_ = 1;
    long count_ = 0;
};

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

/// One-header CSV writer; every file carries exactly one header line.
class CsvWriter {
public:
    explicit CsvWriter(std::vector<std::string> header) : header_(std::move(header)) {}

    void row(const std::vector<std::string>& cells) {
        if (cells.size() != header_.size())
            throw ShapeError("csv row width " + std::to_string(cells.size()) +
                             " != header width " + std::to_string(header_.size()));
        rows_.push_back(cells);
    }

    std::string str() const {
        std::string out = join(header_);
        for (const auto& r : rows_) out += join(r);
        return out;
    }

    void save(const std::string& path) const { write_text_file(path, str()); }

private:
    static std::string join(const std::vector<std::string>& cells) {
        std::string line;
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) line += ',';
            line += cells[i];
        }
        line += '\n';
        return line;
    }
    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
};

} // namespace vidgp
