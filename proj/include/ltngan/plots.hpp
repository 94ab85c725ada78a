#pragma once

// Minimal SVG writers for sample scatters and training curves.

#include <filesystem>
#include <string>
#include <vector>

#include "ltngan/datasets.hpp"
#include "ltngan/training.hpp"

namespace ltngan::plots {

struct Extent {
  double lo = -4.0;
  double hi = 4.0;
};

/// Square plot range used for each dataset's scatter.
Extent scatter_extent(train::Dataset d);

/// One circle per point; points outside the extent are clamped to the border.
std::string scatter_svg(const data::Batch2D& points, Extent extent, const std::string& title);

struct Series {
  std::string name;
  std::vector<double> values;
};

/// Line chart over epochs; each series gets its own colour and legend entry.
std::string curves_svg(const std::vector<Series>& series, const std::string& title);

/// L_G, L_D, S_logic and lambda from a run log.
std::vector<Series> standard_curves(const train::RunLog& log);

/// Plot files written for one run directory.
struct ExportResult {
  std::vector<std::filesystem::path> written;
};

/// Writes scatter.svg (2D) or samples.pgm (MNIST) from the newest sample dump,
/// and curves.svg from runlog.csv. Throws if the directory has no dumps or log.
ExportResult export_plots(const std::filesystem::path& run_dir);

}  // namespace ltngan::plots
