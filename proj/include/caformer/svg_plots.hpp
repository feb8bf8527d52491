#pragma once

#include <string>
#include <vector>

#include "caformer/nd_array.hpp"

namespace caformer {

// Truth/prediction overlay line chart: truth in blue, prediction in orange.
void write_overlay_svg(const std::string& path, const std::vector<double>& truth,
                       const std::vector<double>& pred, const std::string& title);

// Per-dimension companion CSV: index,truth,pred.
void write_overlay_csv(const std::string& path, const std::vector<double>& truth,
                       const std::vector<double>& pred);

// All dimensions in one file: index, then truth_<d>,pred_<d> per dimension
// (1 + 2M columns). truth/pred are (M, T).
void write_combined_csv(const std::string& path, const NdArray& truth, const NdArray& pred);

// Grayscale-to-blue heatmap of a non-negative matrix. Cells holding exactly
// zero render at exactly the zero color (pure white), so masked triangles
// stay visibly blank.
void write_heatmap_svg(const std::string& path, const NdArray& matrix, const std::string& title);

} // namespace caformer
