#include "ltngan/plots.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <regex>
#include <sstream>
#include <stdexcept>

#include "ltngan/experiment.hpp"

namespace ltngan::plots {

namespace {

constexpr double kWidth = 640.0;
constexpr double kHeight = 640.0;
constexpr double kMargin = 50.0;

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string open_svg(double w, double h) {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(w) + "\" height=\"" + num(h) +
         "\" viewBox=\"0 0 " + num(w) + " " + num(h) + "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write '" + path.string() + "'");
  os << text;
}

}  // namespace

Extent scatter_extent(train::Dataset d) {
  switch (d) {
    case train::Dataset::kGrid: return {-1.0, 1.0};
    case train::Dataset::kRing: return {-3.0, 3.0};
    default: return {-4.0, 4.0};
  }
}

std::string scatter_svg(const data::Batch2D& points, Extent extent, const std::string& title) {
  if (!(extent.hi > extent.lo)) throw std::invalid_argument("scatter extent must be nonempty");
  const double span = extent.hi - extent.lo;
  const double inner = kWidth - 2 * kMargin;
  auto px = [&](double x) { return kMargin + (std::clamp(x, extent.lo, extent.hi) - extent.lo) / span * inner; };
  auto py = [&](double y) { return kHeight - kMargin - (std::clamp(y, extent.lo, extent.hi) - extent.lo) / span * inner; };

  std::string s = open_svg(kWidth, kHeight);
  s += "<text x=\"" + num(kWidth / 2) + "\" y=\"30\" text-anchor=\"middle\" font-size=\"16\">" + escape(title) + "</text>\n";
  s += "<rect x=\"" + num(kMargin) + "\" y=\"" + num(kMargin) + "\" width=\"" + num(inner) + "\" height=\"" + num(inner) +
       "\" fill=\"none\" stroke=\"black\"/>\n";
  // Axis ticks at the ends and the middle.
  for (double t : {extent.lo, 0.5 * (extent.lo + extent.hi), extent.hi}) {
    s += "<text x=\"" + num(px(t)) + "\" y=\"" + num(kHeight - kMargin + 18) + "\" text-anchor=\"middle\" font-size=\"12\">" +
         num(t) + "</text>\n";
    s += "<text x=\"" + num(kMargin - 6) + "\" y=\"" + num(py(t) + 4) + "\" text-anchor=\"end\" font-size=\"12\">" + num(t) +
         "</text>\n";
  }
  s += "<g fill=\"#1f77b4\" fill-opacity=\"0.5\">\n";
  for (std::size_t i = 0; i < points.size(); ++i) {
    s += "<circle cx=\"" + num(px(points.x(i))) + "\" cy=\"" + num(py(points.y(i))) + "\" r=\"2\"/>\n";
  }
  s += "</g>\n</svg>\n";
  return s;
}

std::string curves_svg(const std::vector<Series>& series, const std::string& title) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  std::size_t len = 0;
  for (const auto& sr : series) {
    len = std::max(len, sr.values.size());
    for (double v : sr.values) {
      if (!std::isfinite(v)) continue;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (len == 0 || !std::isfinite(lo)) throw std::invalid_argument("curves_svg: no data");
  if (hi - lo < 1e-12) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double w = 800.0, h = 480.0, legend = 140.0;
  const double plot_w = w - 2 * kMargin - legend, plot_h = h - 2 * kMargin;
  auto px = [&](std::size_t i) { return kMargin + (len > 1 ? static_cast<double>(i) / static_cast<double>(len - 1) : 0.5) * plot_w; };
  auto py = [&](double v) { return h - kMargin - (v - lo) / (hi - lo) * plot_h; };

  std::string s = open_svg(w, h);
  s += "<text x=\"" + num(kMargin + plot_w / 2) + "\" y=\"30\" text-anchor=\"middle\" font-size=\"16\">" + escape(title) +
       "</text>\n";
  s += "<rect x=\"" + num(kMargin) + "\" y=\"" + num(kMargin) + "\" width=\"" + num(plot_w) + "\" height=\"" + num(plot_h) +
       "\" fill=\"none\" stroke=\"black\"/>\n";
  s += "<text x=\"" + num(kMargin - 6) + "\" y=\"" + num(py(hi) + 4) + "\" text-anchor=\"end\" font-size=\"12\">" + num(hi) + "</text>\n";
  s += "<text x=\"" + num(kMargin - 6) + "\" y=\"" + num(py(lo) + 4) + "\" text-anchor=\"end\" font-size=\"12\">" + num(lo) + "</text>\n";
  s += "<text x=\"" + num(kMargin + plot_w / 2) + "\" y=\"" + num(h - 12) + "\" text-anchor=\"middle\" font-size=\"12\">epoch</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const char* colour = kPalette[k % std::size(kPalette)];
    std::string pts;
    for (std::size_t i = 0; i < series[k].values.size(); ++i) {
      if (!std::isfinite(series[k].values[i])) continue;
      pts += num(px(i)) + "," + num(py(series[k].values[i])) + " ";
    }
    s += "<polyline class=\"series\" data-name=\"" + escape(series[k].name) + "\" fill=\"none\" stroke=\"" + colour +
         "\" stroke-width=\"1.5\" points=\"" + pts + "\"/>\n";
    const double ly = kMargin + 20.0 * static_cast<double>(k);
    s += "<line x1=\"" + num(w - legend) + "\" y1=\"" + num(ly) + "\" x2=\"" + num(w - legend + 20) + "\" y2=\"" + num(ly) +
         "\" stroke=\"" + colour + "\" stroke-width=\"2\"/>\n";
    s += "<text x=\"" + num(w - legend + 26) + "\" y=\"" + num(ly + 4) + "\" font-size=\"12\">" + escape(series[k].name) +
         "</text>\n";
  }
  s += "</svg>\n";
  return s;
}

std::vector<Series> standard_curves(const train::RunLog& log) {
  std::vector<Series> out{{"L_G", {}}, {"L_D", {}}, {"S_logic", {}}, {"lambda", {}}};
  for (const auto& r : log.records) {
    out[0].values.push_back(r.loss_g);
    out[1].values.push_back(r.loss_d);
    out[2].values.push_back(r.s_logic);
    out[3].values.push_back(r.lambda);
  }
  return out;
}

ExportResult export_plots(const std::filesystem::path& run_dir) {
  if (!std::filesystem::is_directory(run_dir)) throw std::runtime_error("'" + run_dir.string() + "' is not a directory");
  const auto log_path = run_dir / "runlog.csv";
  if (!std::filesystem::exists(log_path)) throw std::runtime_error("no runlog.csv in '" + run_dir.string() + "'");

  // Newest dump by epoch number.
  const std::regex dump_name(R"(samples_epoch(\d+)\.(csv|pgm))");
  std::filesystem::path newest;
  long best = -1;
  for (const auto& entry : std::filesystem::directory_iterator(run_dir)) {
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (std::regex_match(name, m, dump_name) && std::stol(m[1]) > best) {
      best = std::stol(m[1]);
      newest = entry.path();
    }
  }
  if (newest.empty()) throw std::runtime_error("no samples_epoch*.csv or .pgm dumps in '" + run_dir.string() + "'");

  train::Dataset dataset = train::Dataset::kGaussian;
  std::string label = run_dir.filename().string();
  if (std::filesystem::exists(run_dir / "manifest.json")) {
    const auto cfg = exp::config_from_run_dir(run_dir);
    dataset = cfg.dataset;
    label = train::to_string(cfg.dataset) + " " + cfg.variant;
  }

  ExportResult result;
  if (newest.extension() == ".pgm") {
    const auto out = run_dir / "samples.pgm";
    std::filesystem::copy_file(newest, out, std::filesystem::copy_options::overwrite_existing);
    result.written.push_back(out);
  } else {
    const auto points = data::read_points_csv(newest);
    const auto out = run_dir / "scatter.svg";
    write_file(out, scatter_svg(points, scatter_extent(dataset), label + ", epoch " + std::to_string(best)));
    result.written.push_back(out);
  }
  const auto log = train::RunLog::read_csv(log_path);
  const auto curves = run_dir / "curves.svg";
  write_file(curves, curves_svg(standard_curves(log), label));
  result.written.push_back(curves);
  return result;
}

}  // namespace ltngan::plots
