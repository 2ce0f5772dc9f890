#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "latentg/common.hpp"

namespace latentg {

// Minimal RFC-4180 style CSV reader: quoted fields, embedded commas and
// newlines, doubled quotes. Good enough for the corpus schema.
class CsvReader {
public:
    explicit CsvReader(const std::string& path) : in_(path) {
        if (!in_) throw FormatError("cannot open CSV file: " + path);
    }

    // Reads one record; returns false at EOF.
    bool next(std::vector<std::string>& fields) {
        fields.clear();
        int c = in_.get();
        if (c == EOF) return false;
        std::string field;
        bool quoted = false;
        while (true) {
            if (quoted) {
                if (c == EOF) throw FormatError("unterminated quoted CSV field");
                if (c == '"') {
                    int peek = in_.get();
                    if (peek == '"') {
                        field.push_back('"');
                    } else {
                        quoted = false;
                        c = peek;
                        continue;
                    }
                } else {
                    field.push_back(static_cast<char>(c));
                }
            } else {
                if (c == '"' && field.empty()) {
                    quoted = true;
                } else if (c == ',') {
                    fields.push_back(std::move(field));
                    field.clear();
                } else if (c == '\r') {
                    // swallow; handled by following \n or EOF
                } else if (c == '\n' || c == EOF) {
                    fields.push_back(std::move(field));
                    return true;
                } else {
                    field.push_back(static_cast<char>(c));
                }
            }
            c = in_.get();
        }
    }

private:
    std::ifstream in_;
};

inline std::string csv_escape(const std::string& s) {
    bool needs = false;
    for (char c : s) {
        if (c == ',' || c == '"' || c == '\n' || c == '\r') { needs = true; break; }
    }
    if (!needs) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    out += "\"";
    return out;
}

class CsvWriter {
public:
    explicit CsvWriter(const std::string& path) : out_(path) {
        if (!out_) throw FormatError("cannot open CSV file for writing: " + path);
    }

    void row(const std::vector<std::string>& fields) {
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i) out_ << ',';
            out_ << csv_escape(fields[i]);
        }
        out_ << '\n';
    }

private:
    std::ofstream out_;
};

}  // namespace latentg
