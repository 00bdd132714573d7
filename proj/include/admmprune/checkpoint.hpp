#pragma once

#include <filesystem>
#include <string>

#include "admmprune/model.hpp"
#include "json.hpp"

namespace admmprune {

inline constexpr const char* kCheckpointFormat = "admmprune-checkpoint";
inline constexpr int kCheckpointVersion = 1;

nlohmann::json model_to_json(const Model& model);
Model model_from_json(const nlohmann::json& j);

// Versioned JSON container. Doubles are written with round-trip precision, so
// load(save(m)) == m bit-exactly.
void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

// Writes to a temporary sibling and renames, so readers never see a partial file.
void write_text_atomic(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace admmprune
