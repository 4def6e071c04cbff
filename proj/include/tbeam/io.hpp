#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "tbeam/types.hpp"

namespace tbeam {

// Write-to-temp-then-rename so partially written outputs never appear.
void atomic_write_file(const std::filesystem::path& path, const std::string& content);

// Line-oriented "id<TAB>text" files (transcripts, references).
using IdTextPairs = std::vector<std::pair<std::string, std::string>>;

IdTextPairs read_id_text_file(const std::filesystem::path& path);
std::string render_id_text(const IdTextPairs& rows);

}  // namespace tbeam
