#pragma once

// Text formats: cam tables and descriptors, traces, fit reports.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "json.hpp"

#include "capsim/cam_profile.hpp"
#include "capsim/capsule.hpp"
#include "capsim/common.hpp"
#include "capsim/contact.hpp"
#include "capsim/explorer.hpp"
#include "capsim/identification.hpp"

namespace capsim::io {

using json = nlohmann::ordered_json;

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read failed: " + path.string());
  return ss.str();
}

/// Creates missing parent directories; overwrites existing files.
inline void write_file(const std::filesystem::path& path, std::string_view content) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      out.push_back(trim(s.substr(start, i - start)));
      start = i + 1;
    }
  }
  return out;
}

inline bool parse_double(std::string_view s, double& out) {
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

/// A table of numeric rows below a fixed header. Lines starting with '#' and
/// blank lines are skipped; comment lines are handed to on_comment.
template <typename OnComment>
std::vector<std::vector<double>> parse_table(std::string_view text, std::string_view header,
                                             const std::string& source, OnComment on_comment) {
  const auto columns = split(header, ',').size();
  std::vector<std::vector<double>> rows;
  bool seen_header = false;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const auto line = trim(text.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (line.empty()) continue;
    if (line.front() == '#') {
      on_comment(trim(line.substr(1)));
      continue;
    }
    const std::string where = source + ": line " + std::to_string(line_no) + ": ";
    if (!seen_header) {
      if (line != header)
        throw IoError(where + "expected header '" + std::string(header) + "'");
      seen_header = true;
      continue;
    }
    const auto fields = split(line, ',');
    if (fields.size() != columns)
      throw IoError(where + "expected " + std::to_string(columns) + " fields, got " +
                    std::to_string(fields.size()));
    std::vector<double> row(columns);
    for (std::size_t c = 0; c < columns; ++c)
      if (!parse_double(fields[c], row[c]))
        throw IoError(where + "cannot parse '" + std::string(fields[c]) + "' as a number");
    rows.push_back(std::move(row));
  }
  if (!seen_header) throw IoError(source + ": empty file or missing header");
  return rows;
}

inline double json_number(const json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_number())
    throw IoError(std::string("descriptor: missing numeric field '") + key + "'");
  return j[key].get<double>();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Cam profile

inline constexpr std::string_view kCamTableHeader = "theta_rad,lift_mm";

/// Table nodes: `samples` evenly spaced angles in [0, 2π) plus every breakpoint.
inline std::string cam_table_csv(const CamProfile& profile, int samples = 3600) {
  require(samples >= 2, "cam table needs >= 2 samples");
  std::vector<double> theta;
  for (int i = 0; i < samples; ++i) theta.push_back(kTwoPi * i / samples);
  for (double bp : profile.breakpoints()) theta.push_back(bp);
  std::sort(theta.begin(), theta.end());
  theta.erase(std::unique(theta.begin(), theta.end()), theta.end());
  std::string out(kCamTableHeader);
  out += '\n';
  for (double th : theta) out += format_number(th) + ',' + format_number(lift(profile, th)) + '\n';
  return out;
}

inline json cam_descriptor(const CamProfile& profile) {
  const auto duty = duty_fractions(profile);
  json segs = json::array();
  for (const auto& s : profile.segments()) {
    segs.push_back({{"theta_start", s.theta_start},
                    {"theta_end", s.theta_end},
                    {"kind", to_string(s.kind)},
                    {"shape", to_string(s.shape)},
                    {"lift_start_mm", s.lift_start},
                    {"lift_end_mm", s.lift_end},
                    {"arc_sagitta", s.arc_sagitta}});
  }
  return {{"stroke_mm", profile.stroke()},
          {"jump_count", profile.jump_count()},
          {"duty", {{"d_ret", duty.d_ret}, {"d_adv", duty.d_adv}, {"d_dwell", duty.d_dwell}}},
          {"delta_d", duty.asymmetry()},
          {"segments", std::move(segs)}};
}

inline CamProfile cam_from_descriptor(const json& desc) {
  if (!desc.contains("segments") || !desc["segments"].is_array())
    throw IoError("descriptor: missing 'segments' array");
  std::vector<CamSegment> segs;
  for (const auto& j : desc["segments"]) {
    CamSegment s;
    s.theta_start = detail::json_number(j, "theta_start");
    s.theta_end = detail::json_number(j, "theta_end");
    s.lift_start = detail::json_number(j, "lift_start_mm");
    s.lift_end = detail::json_number(j, "lift_end_mm");
    s.arc_sagitta = j.contains("arc_sagitta") ? detail::json_number(j, "arc_sagitta") : 0.0;
    const auto kind = j.value("kind", std::string());
    if (kind == "rise") s.kind = SegmentKind::rise;
    else if (kind == "fall") s.kind = SegmentKind::fall;
    else if (kind == "dwell") s.kind = SegmentKind::dwell;
    else throw IoError("descriptor: unknown segment kind '" + kind + "'");
    const auto shape = j.value("shape", std::string("linear"));
    if (shape == "linear") s.shape = SegmentShape::linear;
    else if (shape == "circular-arc") s.shape = SegmentShape::circular_arc;
    else throw IoError("descriptor: unknown segment shape '" + shape + "'");
    segs.push_back(s);
  }
  return CamProfile(std::move(segs));
}

/// Rebuilds the profile from its descriptor and checks every table node
/// against it within 1e-9 mm.
inline CamProfile import_cam(std::string_view table_csv, std::string_view descriptor_json,
                             const std::string& source = "cam table") {
  json desc;
  try {
    desc = json::parse(descriptor_json);
  } catch (const json::parse_error& e) {
    throw IoError(std::string("descriptor: ") + e.what());
  }
  auto profile = cam_from_descriptor(desc);
  const auto rows = detail::parse_table(table_csv, kCamTableHeader, source, [](auto) {});
  if (rows.empty()) throw IoError(source + ": no rows");
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double err = std::abs(lift(profile, rows[i][0]) - rows[i][1]);
    if (!(err <= 1e-9))
      throw ValidationError(source + ": row " + std::to_string(i + 1) +
                            " disagrees with the descriptor by " + format_number(err) + " mm");
  }
  return profile;
}

// ---------------------------------------------------------------------------
// Traces

inline constexpr std::string_view kContactHeader =
    "t_s,mode,x_wall_mm,v_wall_mm_s,F_wall_N,F_slider_N,F_elastic_N";

inline std::string contact_trace_csv(const ContactTrace& trace) {
  std::string out(kContactHeader);
  out += '\n';
  for (const auto& s : trace.samples) {
    out += format_number(s.t) + ',' + to_string(s.mode) + ',' +
           format_number(s.x_wall * kMmPerM) + ',' + format_number(s.v_wall * kMmPerM) + ',' +
           format_number(s.F_wall) + ',' + format_number(s.F_slider) + ',' +
           format_number(s.F_elastic) + '\n';
  }
  return out;
}

inline constexpr std::string_view kThrustHeader = "theta_rad,F_capsule_N,F_norm,n_ret,n_adv";

inline std::string thrust_trace_csv(const ThrustTrace& trace) {
  std::string out(kThrustHeader);
  out += '\n';
  for (const auto& s : trace.samples) {
    out += format_number(s.theta) + ',' + format_number(s.F_capsule) + ',' +
           format_number(s.F_normalized) + ',' + std::to_string(s.n_ret) + ',' +
           std::to_string(s.n_adv) + '\n';
  }
  return out;
}

inline json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline json tissue_json(const TissueParams& p) {
  return {{"k_tissue", p.k_tissue}, {"c_tissue", p.c_tissue}, {"mu_s_N", p.mu_s_N},
          {"mu_k_N", p.mu_k_N},     {"tau_ret", p.tau_ret},   {"tau_adv", p.tau_adv}};
}

inline json thrust_summary(const ThrustTrace& trace, const CapsuleConfig& config,
                           const DutyFractions& duty, double omega) {
  json cfg = {{"n_sliders", config.n_sliders},
              {"mu_N", config.mu_N},
              {"F_loss", config.F_loss},
              {"lambda", config.smoothing.lambda},
              {"model", to_string(config.model)},
              {"omega_rad_s", omega}};
  if (config.tissue) cfg["tissue"] = tissue_json(*config.tissue);
  return {{"mean_N", trace.mean},
          {"mean_normalized", trace.mean_normalized},
          {"ripple_cov", number_or_null(trace.ripple)},
          {"duty", {{"d_ret", duty.d_ret}, {"d_adv", duty.d_adv}, {"d_dwell", duty.d_dwell}}},
          {"delta_d", duty.asymmetry()},
          {"samples", trace.samples.size()},
          {"config", std::move(cfg)}};
}

inline constexpr std::string_view kMeasuredHeader = "t_s,F_N";

/// `# key=value` comment lines become metadata; other comments are ignored.
inline MeasuredTrace parse_measured_csv(std::string_view text,
                                        const std::string& source = "measured trace") {
  MeasuredTrace out;
  const auto rows = detail::parse_table(text, kMeasuredHeader, source, [&](std::string_view c) {
    const auto eq = c.find('=');
    if (eq == std::string_view::npos) return;
    out.metadata[std::string(detail::trim(c.substr(0, eq)))] =
        std::string(detail::trim(c.substr(eq + 1)));
  });
  if (rows.size() < 2) throw IoError(source + ": needs at least two data rows");
  for (const auto& r : rows) {
    out.t.push_back(r[0]);
    out.F.push_back(r[1]);
  }
  out.dt = (out.t.back() - out.t.front()) / static_cast<double>(out.t.size() - 1);
  out.validate();
  return out;
}

inline std::string measured_csv(const MeasuredTrace& trace) {
  std::string out;
  for (const auto& [k, v] : trace.metadata) out += "# " + k + '=' + v + '\n';
  out += kMeasuredHeader;
  out += '\n';
  for (std::size_t i = 0; i < trace.size(); ++i)
    out += format_number(trace.t[i]) + ',' + format_number(trace.F[i]) + '\n';
  return out;
}

inline json fit_report_json(const FitReport& r) {
  return {{"converged", r.converged()},
          {"k_tissue", number_or_null(r.k_tissue)},
          {"k_tissue_ci95", number_or_null(r.k_tissue_ci)},
          {"c_tissue", number_or_null(r.c_tissue)},
          {"c_tissue_ci95", number_or_null(r.c_tissue_ci)},
          {"tau_ret", number_or_null(r.tau_ret)},
          {"tau_adv", number_or_null(r.tau_adv)},
          {"mu_s_N", number_or_null(r.mu_s_N)},
          {"mu_k_N", number_or_null(r.mu_k_N)},
          {"rmse_N", number_or_null(r.rmse)},
          {"nrmse", number_or_null(r.nrmse)},
          {"rank_deficient", r.rank_deficient},
          {"flags", r.flags}};
}

inline std::string dump(const json& j) { return j.dump(2) + '\n'; }

}  // namespace capsim::io
