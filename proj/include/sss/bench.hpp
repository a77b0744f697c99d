#pragma once

// Benchmark pipeline: corrupt (optionally), run every requested method on
// the noisy image, score the outputs, and render the four-metric table.
// Undefined metrics surface as annotated cells ("identical"/"undefined"),
// never as silent numbers.

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sss/filters.hpp"
#include "sss/image.hpp"
#include "sss/metrics.hpp"
#include "sss/noise.hpp"
#include "sss/rng.hpp"
#include "sss/self2self.hpp"

namespace sss {

struct Self2SelfSpec {
  TrainConfig train;
  PredictConfig predict;
};

struct MethodSpec {
  enum class Kind { identity, filter, self2self };
  Kind kind = Kind::identity;
  FilterSpec filter{};   // when kind == filter
  Self2SelfSpec s2s{};   // when kind == self2self
};

inline std::string format_method(const MethodSpec& m) {
  switch (m.kind) {
    case MethodSpec::Kind::identity: return "identity";
    case MethodSpec::Kind::filter: return format_filter_spec(m.filter);
    case MethodSpec::Kind::self2self: return "self2self";
  }
  throw std::logic_error("format_method: bad kind");
}

// filesystem-safe name: every run of non-alphanumerics collapses to one '_'
inline std::string method_slug(const MethodSpec& m) {
  const std::string name = format_method(m);
  std::string slug;
  for (char ch : name) {
    if (std::isalnum(static_cast<unsigned char>(ch))) {
      slug += ch;
    } else if (slug.empty() || slug.back() != '_') {
      slug += '_';
    }
  }
  return slug;
}

// Splits a comma-separated method list. Filter arguments may themselves
// contain commas ("bilateral:2,2.0,0.1"), so purely numeric tokens re-attach
// to the method before them.
inline std::vector<MethodSpec> parse_methods(const std::string& text,
                                             const Self2SelfSpec& s2s_defaults = {}) {
  std::vector<std::string> tokens;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const std::string tok =
        text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    if (!tok.empty()) {
      const bool numeric = tok.find_first_not_of("0123456789.+-") == std::string::npos;
      if (numeric && !tokens.empty()) {
        tokens.back() += "," + tok;
      } else {
        tokens.push_back(tok);
      }
    }
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  if (tokens.empty()) throw std::invalid_argument("method list is empty");
  std::vector<MethodSpec> methods;
  for (const std::string& tok : tokens) {
    MethodSpec m;
    if (tok == "identity") {
      m.kind = MethodSpec::Kind::identity;
    } else if (tok == "self2self") {
      m.kind = MethodSpec::Kind::self2self;
      m.s2s = s2s_defaults;
    } else {
      m.kind = MethodSpec::Kind::filter;
      m.filter = parse_filter_spec(tok);
    }
    methods.push_back(std::move(m));
  }
  return methods;
}

// A table cell: either a numeric value or an annotation explaining why the
// metric does not exist ("identical" images, "undefined" ratio, ...).
struct MetricCell {
  std::optional<double> value;
  std::string note;

  static MetricCell of(double v) { return {v, ""}; }
  static MetricCell annotated(std::string n) { return {std::nullopt, std::move(n)}; }
  bool operator==(const MetricCell&) const = default;
};

struct MetricReport {
  MetricCell psnr, ssim, fi, epi;
  bool operator==(const MetricReport&) const = default;
};

struct TableRow {
  std::string method_name;
  MetricReport report;
  bool operator==(const TableRow&) const = default;
};

struct BenchmarkRun {
  std::string source;           // clean image when `noise` is set, noisy otherwise
  std::string clean_reference;  // optional explicit clean image ("" = none)
  std::optional<NoiseSpec> noise;
  std::vector<MethodSpec> methods;
  std::string output_dir;
  std::uint64_t seed = 1;
};

// Scores one denoised output: PSNR/SSIM against the clean reference when one
// exists, FI on the output alone, EPI against the noisy input.
inline MetricReport score_output(const GrayImage& output, const GrayImage& noisy,
                                 const GrayImage* clean) {
  MetricReport r;
  if (clean) {
    const auto p = psnr(output, *clean);
    r.psnr = p ? MetricCell::of(*p) : MetricCell::annotated("identical");
    r.ssim = MetricCell::of(ssim(output, *clean));
  } else {
    r.psnr = MetricCell::annotated("undefined");
    r.ssim = MetricCell::annotated("undefined");
  }
  const auto f = fi(output);
  r.fi = f ? MetricCell::of(*f) : MetricCell::annotated("undefined");
  const auto e = epi(output, noisy);
  r.epi = e ? MetricCell::of(*e) : MetricCell::annotated("undefined");
  return r;
}

inline GrayImage apply_method(const MethodSpec& m, const GrayImage& noisy) {
  switch (m.kind) {
    case MethodSpec::Kind::identity:
      return noisy;
    case MethodSpec::Kind::filter:
      return apply_filter(noisy, m.filter);
    case MethodSpec::Kind::self2self:
      return denoise_single<float>(noisy, m.s2s.train, m.s2s.predict).image;
  }
  throw std::logic_error("apply_method: bad kind");
}

// Runs the full protocol and writes every artifact under output_dir with
// names derived from the method specs and the seed.
inline std::vector<TableRow> run_benchmark(const BenchmarkRun& run) {
  if (run.methods.empty()) throw std::invalid_argument("benchmark needs at least one method");
  std::filesystem::create_directories(run.output_dir);
  const std::string sd = std::to_string(run.seed);

  GrayImage source = load_pgm(run.source);
  GrayImage noisy(1, 1);
  std::optional<GrayImage> clean;
  if (run.noise) {
    NoiseSpec spec = *run.noise;
    spec.seed = derive_seed(run.seed, stream_tag::bench_noise);
    clean = source;
    noisy = apply_noise(source, spec);
    save_pgm(noisy, run.output_dir + "/noisy_seed" + sd + ".pgm");
  } else {
    noisy = std::move(source);
    if (!run.clean_reference.empty()) clean = load_pgm(run.clean_reference);
  }

  std::vector<TableRow> rows;
  for (const MethodSpec& method : run.methods) {
    MethodSpec m = method;
    if (m.kind == MethodSpec::Kind::self2self) {
      m.s2s.train.seed = run.seed;
      m.s2s.predict.seed = run.seed;
    }
    GrayImage output = apply_method(m, noisy);
    save_pgm(output, run.output_dir + "/out_" + method_slug(m) + "_seed" + sd + ".pgm");
    rows.push_back({format_method(m), score_output(output, noisy, clean ? &*clean : nullptr)});
  }
  return rows;
}

enum class ReportFormat { text, csv };

inline ReportFormat parse_report_format(const std::string& s) {
  if (s == "text") return ReportFormat::text;
  if (s == "csv") return ReportFormat::csv;
  throw std::invalid_argument("unknown report format '" + s + "' (expected text or csv)");
}

namespace detail {

inline std::string format_cell(const MetricCell& c) {
  if (!c.value) return c.note;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", *c.value);
  return buf;
}

// quote a CSV field only when it contains a comma (filter specs do)
inline std::string csv_field(const std::string& s) {
  if (s.find(',') == std::string::npos && s.find('"') == std::string::npos) return s;
  std::string quoted = "\"";
  for (char ch : s) {
    if (ch == '"') quoted += '"';
    quoted += ch;
  }
  return quoted + "\"";
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

inline MetricCell parse_cell(const std::string& s) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return MetricCell::of(v);
  } catch (const std::exception&) {
  }
  return MetricCell::annotated(s);
}

}  // namespace detail

inline std::string render_table(const std::vector<TableRow>& rows, ReportFormat format) {
  if (rows.empty()) throw std::invalid_argument("render_table: no rows");
  const char* headers[5] = {"Method", "PSNR", "SSIM", "FI", "EPI"};
  std::vector<std::array<std::string, 5>> cells;
  for (const TableRow& row : rows)
    cells.push_back({row.method_name, detail::format_cell(row.report.psnr),
                     detail::format_cell(row.report.ssim), detail::format_cell(row.report.fi),
                     detail::format_cell(row.report.epi)});

  std::string out;
  if (format == ReportFormat::csv) {
    out = "method,psnr,ssim,fi,epi\n";
    for (const auto& row : cells) {
      for (int c = 0; c < 5; ++c) {
        if (c) out += ',';
        out += detail::csv_field(row[c]);
      }
      out += '\n';
    }
    return out;
  }

  std::size_t width[5];
  for (int c = 0; c < 5; ++c) {
    width[c] = std::string(headers[c]).size();
    for (const auto& row : cells) width[c] = std::max(width[c], row[c].size());
  }
  auto emit_row = [&](const std::array<std::string, 5>& row) {
    for (int c = 0; c < 5; ++c) {
      if (c) out += "  ";
      const std::size_t pad = width[c] - row[c].size();
      if (c == 0) {
        out += row[c];
        out.append(pad, ' ');
      } else {
        out.append(pad, ' ');
        out += row[c];
      }
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    out += '\n';
  };
  emit_row({headers[0], headers[1], headers[2], headers[3], headers[4]});
  emit_row({std::string(width[0], '-'), std::string(width[1], '-'), std::string(width[2], '-'),
            std::string(width[3], '-'), std::string(width[4], '-')});
  for (const auto& row : cells) emit_row(row);
  return out;
}

// inverse of render_table(., csv); annotations come back as annotated cells
inline std::vector<TableRow> parse_csv_report(const std::string& text) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    const auto nl = text.find('\n', start);
    const std::string line =
        text.substr(start, nl == std::string::npos ? std::string::npos : nl - start);
    if (!line.empty()) lines.push_back(line);
    if (nl == std::string::npos) break;
    start = nl + 1;
  }
  if (lines.empty() || lines[0] != "method,psnr,ssim,fi,epi")
    throw std::invalid_argument("parse_csv_report: missing header");
  std::vector<TableRow> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto fields = detail::split_csv_line(lines[i]);
    if (fields.size() != 5)
      throw std::invalid_argument("parse_csv_report: bad row '" + lines[i] + "'");
    TableRow row;
    row.method_name = fields[0];
    row.report.psnr = detail::parse_cell(fields[1]);
    row.report.ssim = detail::parse_cell(fields[2]);
    row.report.fi = detail::parse_cell(fields[3]);
    row.report.epi = detail::parse_cell(fields[4]);
    rows.push_back(std::move(row));
  }
  return rows;
}

inline void write_report(const std::vector<TableRow>& rows, const std::string& path,
                         ReportFormat format) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write report '" + path + "'");
  out << render_table(rows, format);
}

}  // namespace sss
