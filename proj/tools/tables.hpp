#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "toggl/error.hpp"

namespace togglcli {

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

inline std::string to_tsv(const Table &table) {
    std::string out;
    auto emit = [&](const std::vector<std::string> &cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i)
                out += '\t';
            out += cells[i];
        }
        out += '\n';
    };
    emit(table.header);
    for (const auto &row : table.rows)
        emit(row);
    return out;
}

inline std::string to_aligned(const Table &table) {
    std::vector<std::size_t> width(table.header.size(), 0);
    auto widen = [&](const std::vector<std::string> &cells) {
        for (std::size_t i = 0; i < cells.size() && i < width.size(); ++i)
            width[i] = std::max(width[i], cells[i].size());
    };
    widen(table.header);
    for (const auto &row : table.rows)
        widen(row);

    std::string out;
    auto emit = [&](const std::vector<std::string> &cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i)
                out += "  ";
            out += cells[i];
            if (i + 1 < cells.size())
                out.append(width[i] - cells[i].size(), ' ');
        }
        out += '\n';
    };
    emit(table.header);
    for (const auto &row : table.rows)
        emit(row);
    return out;
}

inline void write_text_file(const std::string &path, const std::string &content) {
    std::ofstream out(path, std::ios::trunc);
    if (!out)
        throw toggl::DataError("cannot write " + path);
    out << content;
    if (!out)
        throw toggl::DataError("short write to " + path);
}

// WER as a percentage with two decimals; empty-reference infinities print as
// "inf" in tables (JSON carries null).
inline std::string format_pct(double wer) {
    if (!std::isfinite(wer))
        return "inf";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", 100.0 * wer);
    return buf;
}

} // namespace togglcli
