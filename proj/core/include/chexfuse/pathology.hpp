#pragma once

#include <array>
#include <string>
#include <string_view>

namespace chexfuse {

/// Canonical pathology order; every 14-wide vector in the project uses it.
inline constexpr std::array<std::string_view, 14> kPathologies = {
    "Atelectasis", "Cardiomegaly", "Consolidation",      "Edema",
    "Effusion",    "Emphysema",    "Fibrosis",           "Hernia",
    "Infiltration", "Mass",        "Nodule",             "Pleural Thickening",
    "Pneumonia",   "Pneumothorax",
};

/// Index in canonical order, or -1. "Pleural_Thickening" (the dataset's CSV
/// spelling) is accepted as an alias.
inline int pathology_index(std::string_view name) {
  if (name == "Pleural_Thickening") name = "Pleural Thickening";
  for (std::size_t i = 0; i < kPathologies.size(); ++i) {
    if (kPathologies[i] == name) return static_cast<int>(i);
  }
  return -1;
}

}  // namespace chexfuse
