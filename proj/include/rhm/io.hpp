#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "rhm/derivation.hpp"
#include "rhm/errors.hpp"

namespace rhm {

// 17 significant digits: enough to round-trip any double exactly.
inline std::string format_float(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

inline std::ofstream open_output(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot open for writing: " + path);
    return out;
}

inline std::ifstream open_input(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open: " + path);
    return in;
}

// Samples file: one sequence per line, space-separated decimal tokens.
inline void write_samples(const std::vector<Sequence>& samples, std::ostream& out) {
    for (const auto& seq : samples) {
        for (std::size_t i = 0; i < seq.size(); ++i) {
            if (i) out << ' ';
            out << seq[i];
        }
        out << '\n';
    }
}

inline void write_samples(const std::vector<Sequence>& samples, const std::string& path) {
    auto out = open_output(path);
    write_samples(samples, out);
    if (!out) throw io_error("write failed: " + path);
}

inline std::vector<Sequence> read_samples(const std::string& path) {
    auto in = open_input(path);
    std::vector<Sequence> samples;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        Sequence seq;
        std::istringstream row(line);
        long long tok;
        while (row >> tok) seq.push_back(static_cast<Symbol>(tok));
        if (!row.eof()) throw io_error("malformed samples line: " + line);
        if (!samples.empty() && seq.size() != samples.front().size())
            throw io_error("samples file has unequal sequence lengths");
        samples.push_back(std::move(seq));
    }
    return samples;
}

// Splits one CSV record on commas. No quoting support; quoted fields are
// handled by the one writer that needs them (enumeration dumps).
inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    fields.push_back(cur);
    return fields;
}

inline double parse_double(const std::string& s, const std::string& what) {
    try {
        std::size_t end = 0;
        double x = std::stod(s, &end);
        if (end != s.size()) throw std::invalid_argument(s);
        return x;
    } catch (const std::exception&) {
        throw io_error("cannot parse " + what + ": '" + s + "'");
    }
}

inline std::uint64_t parse_u64(const std::string& s, const std::string& what) {
    try {
        std::size_t end = 0;
        std::uint64_t x = std::stoull(s, &end);
        if (end != s.size()) throw std::invalid_argument(s);
        return x;
    } catch (const std::exception&) {
        throw io_error("cannot parse " + what + ": '" + s + "'");
    }
}

}  // namespace rhm
