// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>

#include "json.hpp"
#include "modalbridge/checkpoint.hpp"
#include "modalbridge/cli.hpp"
#include "modalbridge/digest.hpp"

namespace modalbridge::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(text);
  while (std::getline(in, field, sep)) out.push_back(field);
  if (!text.empty() && text.back() == sep) out.emplace_back();
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                    "#9467bd", "#8c564b", "#e377c2", "#17becf"};

}  // namespace

std::string code_version() { return MODALBRIDGE_VERSION; }

std::string metrics_csv(const std::vector<MetricsRecord>& records) {
  std::string out = "phase,epoch,seed,loss,accuracy,ms\n";
  for (const auto& r : records) {
    out += fmt::format("{},{},{},{},{},{:.3f}\n", r.phase, r.epoch, r.seed, r.loss,
                       r.accuracy ? fmt::format("{}", *r.accuracy) : std::string(), r.ms);
  }
  return out;
}

std::vector<MetricsRow> parse_metrics_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || trim(line) != "phase,epoch,seed,loss,accuracy,ms") {
    throw std::runtime_error("metrics csv: unexpected header");
  }
  std::vector<MetricsRow> rows;
  std::size_t number = 1;
  while (std::getline(in, line)) {
    ++number;
    if (trim(line).empty()) continue;
    const auto f = split(trim(line), ',');
    if (f.size() != 6) {
      throw std::runtime_error("metrics csv line " + std::to_string(number) + ": expected 6 fields");
    }
    MetricsRow row;
    row.phase = f[0];
    row.epoch = std::stoull(f[1]);
    row.seed = std::stoull(f[2]);
    row.loss = std::stod(f[3]);
    if (!f[4].empty()) row.accuracy = std::stod(f[4]);
    row.ms = std::stod(f[5]);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string line_chart_svg(const std::string& title, const std::string& x_label,
                           const std::string& y_label, const std::vector<Series>& series) {
  constexpr double kWidth = 640, kHeight = 400;
  constexpr double kLeft = 70, kRight = 150, kTop = 40, kBottom = 50;
  const double plot_w = kWidth - kLeft - kRight, plot_h = kHeight - kTop - kBottom;

  double x_min = std::numeric_limits<double>::infinity(), x_max = -x_min;
  double y_min = x_min, y_max = -x_min;
  for (const auto& s : series) {
    for (auto [x, y] : s.points) {
      if (!std::isfinite(x) || !std::isfinite(y)) continue;
      x_min = std::min(x_min, x);
      x_max = std::max(x_max, x);
      y_min = std::min(y_min, y);
      y_max = std::max(y_max, y);
    }
  }
  if (!std::isfinite(x_min)) x_min = 0, x_max = 1, y_min = 0, y_max = 1;
  if (x_max == x_min) x_max = x_min + 1;
  if (y_max == y_min) y_max = y_min + 1;
  auto px = [&](double x) { return kLeft + (x - x_min) / (x_max - x_min) * plot_w; };
  auto py = [&](double y) { return kTop + (1.0 - (y - y_min) / (y_max - y_min)) * plot_h; };

  std::string svg = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" "
      "viewBox=\"0 0 {0} {1}\" font-family=\"sans-serif\" font-size=\"12\">\n"
      "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      "<text x=\"{2}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{3}</text>\n",
      kWidth, kHeight, kLeft + plot_w / 2, xml_escape(title));
  svg += fmt::format(
      "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#444\"/>\n",
      kLeft, kTop, plot_w, plot_h);
  for (int i = 0; i <= 4; ++i) {
    const double fy = y_min + (y_max - y_min) * i / 4.0;
    const double fx = x_min + (x_max - x_min) * i / 4.0;
    svg += fmt::format(
        "<line x1=\"{0}\" y1=\"{1:.2f}\" x2=\"{2}\" y2=\"{1:.2f}\" stroke=\"#ddd\"/>\n"
        "<text x=\"{3}\" y=\"{4:.2f}\" text-anchor=\"end\">{5:.3g}</text>\n"
        "<text x=\"{6:.2f}\" y=\"{7}\" text-anchor=\"middle\">{8:.3g}</text>\n",
        kLeft, py(fy), kLeft + plot_w, kLeft - 6, py(fy) + 4, fy, px(fx), kTop + plot_h + 18, fx);
  }
  svg += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
                     kLeft + plot_w / 2, kHeight - 10, xml_escape(x_label));
  svg += fmt::format(
      "<text x=\"18\" y=\"{0}\" text-anchor=\"middle\" transform=\"rotate(-90 18 {0})\">{1}</text>\n",
      kTop + plot_h / 2, xml_escape(y_label));

  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    const char* colour = kPalette[i % std::size(kPalette)];
    std::string points;
    for (auto [x, y] : s.points) {
      if (!std::isfinite(x) || !std::isfinite(y)) continue;
      points += fmt::format("{}{:.2f},{:.2f}", points.empty() ? "" : " ", px(x), py(y));
    }
    svg += fmt::format("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
                       colour, points);
    const double ly = kTop + 10 + 18 * static_cast<double>(i);
    svg += fmt::format(
        "<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"{3}\" stroke-width=\"2\"/>\n"
        "<text x=\"{4}\" y=\"{5}\">{6}</text>\n",
        kLeft + plot_w + 12, ly, kLeft + plot_w + 32, colour, kLeft + plot_w + 38, ly + 4,
        xml_escape(s.name));
  }
  svg += "</svg>\n";
  return svg;
}

std::vector<std::string> verify_manifest(const fs::path& dir) {
  std::vector<std::string> problems;
  const fs::path path = dir / "manifest.json";
  if (!fs::exists(path)) return {"missing " + path.string()};
  json manifest;
  try {
    manifest = json::parse(read_file(path));
  } catch (const std::exception& e) {
    return {"unreadable manifest: " + std::string(e.what())};
  }
  for (const char* section : {"checkpoints", "metrics", "plots", "files"}) {
    if (!manifest.contains(section)) continue;
    for (const auto& entry : manifest[section]) {
      const fs::path file = dir / entry.at("path").get<std::string>();
      if (!fs::exists(file)) {
        problems.push_back("missing " + entry.at("path").get<std::string>());
      } else if (file_sha256(file) != entry.at("sha256").get<std::string>()) {
        problems.push_back("digest mismatch for " + entry.at("path").get<std::string>());
      }
    }
  }
  return problems;
}

std::vector<AblationAxis> parse_grid_spec(const std::string& text) {
  static const std::set<std::string> kAxes{"source_modality", "loss", "granularity", "k"};
  const KeyValues kv = parse_key_values(text);
  std::vector<AblationAxis> axes;
  // Axis order is fixed so tables are laid out identically for any grid file.
  for (const std::string name : {"source_modality", "loss", "granularity", "k"}) {
    const auto it = kv.find(name);
    if (it == kv.end()) continue;
    AblationAxis axis{name, {}};
    for (const auto& v : split(it->second, ',')) {
      const std::string value = trim(v);
      if (value.empty()) throw ConfigError("grid axis '" + name + "' has an empty value");
      if (std::find(axis.values.begin(), axis.values.end(), value) != axis.values.end()) {
        throw ConfigError("grid axis '" + name + "' repeats value '" + value + "'");
      }
      axis.values.push_back(value);
    }
    axes.push_back(std::move(axis));
  }
  for (const auto& [key, value] : kv) {
    if (!kAxes.count(key)) {
      throw ConfigError("unknown grid axis '" + key +
                        "' (expected source_modality, loss, granularity or k)");
    }
  }
  if (axes.empty()) throw ConfigError("grid spec defines no axes");
  return axes;
}

std::vector<std::vector<std::pair<std::string, std::string>>> expand_grid(
    const std::vector<AblationAxis>& axes) {
  std::vector<std::vector<std::pair<std::string, std::string>>> cells{{}};
  for (const auto& axis : axes) {
    std::vector<std::vector<std::pair<std::string, std::string>>> next;
    for (const auto& prefix : cells) {
      for (const auto& value : axis.values) {
        auto cell = prefix;
        cell.emplace_back(axis.name, value);
        next.push_back(std::move(cell));
      }
    }
    cells = std::move(next);
  }
  return cells;
}

TransferConfig cell_config(const TransferConfig& base,
                           const std::vector<std::pair<std::string, std::string>>& cell) {
  KeyValues kv = config_to_key_values(base);
  for (const auto& [axis, value] : cell) {
    if (axis == "k") {
      kv["run.k"] = value;
    } else {
      kv["transfer." + axis] = value;
    }
  }
  return resolve_config(kv);
}

}  // namespace modalbridge::cli
