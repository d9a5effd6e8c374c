#include "esm/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "esm/error.hpp"

namespace esm {

std::uint8_t belief_to_gray(double v)
{
    const double scaled = std::round(255.0 * (std::clamp(v, -1.0, 1.0) + 1.0) / 2.0);
    return static_cast<std::uint8_t>(scaled);
}

std::string encode_pgm(const Grid& belief)
{
    std::string out = "P5\n" + std::to_string(belief.cols()) + " " + std::to_string(belief.rows()) +
                      "\n255\n";
    out.reserve(out.size() + belief.size());
    for (double v : belief.values())
        out.push_back(static_cast<char>(belief_to_gray(v)));
    return out;
}

void write_pgm(const std::string& path, const Grid& belief) { write_text_file(path, encode_pgm(belief)); }

Grid read_pgm(const std::string& path)
{
    const std::string data = read_text_file(path);
    std::istringstream in(data);
    std::string magic;
    int cols = 0;
    int rows = 0;
    int maxval = 0;
    in >> magic >> cols >> rows >> maxval;
    if (magic != "P5" || cols <= 0 || rows <= 0 || maxval != 255)
        throw Error(ErrorCode::ParseError, path + ": not an 8-bit P5 image");
    in.get();
    const auto offset = static_cast<std::size_t>(in.tellg());
    if (data.size() < offset + static_cast<std::size_t>(rows) * cols)
        throw Error(ErrorCode::ParseError, path + ": truncated pixel data");
    Grid g(rows, cols);
    for (std::size_t k = 0; k < g.size(); ++k)
        g.values()[k] = static_cast<unsigned char>(data[offset + k]);
    return g;
}

std::string format_double(double v)
{
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc())
        throw Error(ErrorCode::IoError, "cannot format number");
    return std::string(buf, ptr);
}

std::string csv_field(const std::string& s)
{
    if (s.find_first_of(",\"\r\n") == std::string::npos)
        return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"')
            out += "\"\"";
        else
            out += c;
    }
    out += '"';
    return out;
}

void write_grid_csv(const std::string& path, const Grid& grid)
{
    std::string text;
    for (int r = 0; r < grid.rows(); ++r) {
        for (int c = 0; c < grid.cols(); ++c) {
            if (c > 0)
                text += ',';
            text += format_double(grid(r, c));
        }
        text += "\r\n";
    }
    write_text_file(path, text);
}

std::vector<std::vector<std::string>> read_csv(const std::string& path)
{
    const std::string text = read_text_file(path);
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool quoted = false;
    bool any = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (quoted) {
            if (c == '"' && i + 1 < text.size() && text[i + 1] == '"') {
                field += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                field += c;
            }
            continue;
        }
        if (c == '"') {
            quoted = true;
            any = true;
        } else if (c == ',') {
            row.push_back(std::move(field));
            field.clear();
            any = true;
        } else if (c == '\r') {
            continue;
        } else if (c == '\n') {
            if (any || !field.empty()) {
                row.push_back(std::move(field));
                rows.push_back(std::move(row));
            }
            row.clear();
            field.clear();
            any = false;
        } else {
            field += c;
            any = true;
        }
    }
    if (any || !field.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
    }
    return rows;
}

Grid read_grid_csv(const std::string& path)
{
    const auto rows = read_csv(path);
    if (rows.empty())
        return {};
    const auto cols = rows.front().size();
    Grid g(static_cast<int>(rows.size()), static_cast<int>(cols));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != cols)
            throw Error(ErrorCode::ParseError, path + ": ragged grid CSV", static_cast<long>(r));
        for (std::size_t c = 0; c < cols; ++c) {
            const std::string& s = rows[r][c];
            double v = 0.0;
            const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
            if (ec != std::errc() || ptr != s.data() + s.size())
                throw Error(ErrorCode::ParseError, path + ": bad number '" + s + "'", static_cast<long>(r));
            g(static_cast<int>(r), static_cast<int>(c)) = v;
        }
    }
    return g;
}

std::string read_text_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(ErrorCode::IoError, "cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::string& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw Error(ErrorCode::IoError, "cannot write " + path);
    out << text;
    if (!out)
        throw Error(ErrorCode::IoError, "write failed for " + path);
}

}  // namespace esm
