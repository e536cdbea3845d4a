#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace saint {

// Deterministic CSV emitter: comma separator, LF line endings, '.' decimal
// point, floats at 9 significant digits. Locale-independent by construction
// (std::to_chars), so equal inputs give byte-identical files.
class CsvWriter {
public:
    explicit CsvWriter(const std::string& path) : os_(path, std::ios::binary | std::ios::trunc) {
        if (!os_) throw std::runtime_error("CsvWriter: cannot open " + path);
    }

    void header(const std::vector<std::string>& cols) { row_strings(cols); }

    CsvWriter& col(const std::string& v) {
        sep();
        line_ += v;
        return *this;
    }
    CsvWriter& col(int64_t v) { return col(std::to_string(v)); }
    CsvWriter& col(int v) { return col(std::to_string(v)); }
    CsvWriter& col(uint64_t v) { return col(std::to_string(v)); }
    CsvWriter& col(double v) { return col(format_float(v)); }
    CsvWriter& col(float v) { return col(format_float(static_cast<double>(v))); }

    void end_row() {
        line_ += '\n';
        os_ << line_;
        line_.clear();
        first_ = true;
    }

    void row_strings(const std::vector<std::string>& cols) {
        for (const auto& c : cols) col(c);
        end_row();
    }

    static std::string format_float(double v) {
        char buf[64];
        auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 9);
        return std::string(buf, res.ptr);
    }

private:
    void sep() {
        if (!first_) line_ += ',';
        first_ = false;
    }

    std::ofstream os_;
    std::string line_;
    bool first_ = true;
};

}  // namespace saint
