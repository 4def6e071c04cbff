#include <fstream>
#include <sstream>

#include "tbeam/io.hpp"

namespace tbeam {

void atomic_write_file(const std::filesystem::path& path,
                       const std::string& content) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw ValidationError("cannot open for writing: " + tmp.string());
        }
        out << content;
        if (!out) {
            throw ValidationError("write failed: " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

IdTextPairs read_id_text_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ParseError(path.string(), 0, "cannot open file");
    }
    IdTextPairs rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        const auto tab = line.find('\t');
        if (tab == std::string::npos) {
            throw ParseError(path.string(), line_no, "expected id<TAB>text");
        }
        rows.emplace_back(line.substr(0, tab), line.substr(tab + 1));
    }
    return rows;
}

std::string render_id_text(const IdTextPairs& rows) {
    std::ostringstream out;
    for (const auto& [id, text] : rows) {
        out << id << "\t" << text << "\n";
    }
    return out.str();
}

}  // namespace tbeam
