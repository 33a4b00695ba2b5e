#include "bicon/data_io.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include "bicon/binary_io.hpp"
#include "bicon/errors.hpp"
#include "bicon/rng.hpp"

namespace bicon {

namespace {

constexpr std::string_view kMatrixMagic = "BIMX1";

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    for (auto& s : out) {
        const auto b = s.find_first_not_of(" \t");
        const auto e = s.find_last_not_of(" \t");
        s = b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    }
    return out;
}

double parse_double(const std::string& s, std::size_t line) {
    double v = 0.0;
    const auto* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc() || ptr != end || s.empty()) {
        throw ParseError("cannot parse '" + s + "' as a real number", line);
    }
    return v;
}

long long parse_integer(const std::string& s, std::size_t line) {
    long long v = 0;
    const auto* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc() || ptr != end || s.empty()) {
        throw ParseError("cannot parse '" + s + "' as an integer label", line);
    }
    return v;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    os << text;
    if (!os) throw IoError("write failed: " + path.string());
}

std::string fmt_svg(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v == 0.0 ? 0.0 : v);
    return buf;
}

constexpr std::array<const char*, 10> kPalette = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                                  "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
                                                  "#bcbd22", "#17becf"};

const char* palette_color(int label) {
    return kPalette[static_cast<std::size_t>(((label % 10) + 10) % 10)];
}

}  // namespace

std::string_view to_string(Generator g) {
    switch (g) {
        case Generator::GaussianBlobs: return "gaussian_blobs";
        case Generator::ConcentricRings: return "concentric_rings";
        case Generator::File: return "file";
    }
    return "?";
}

Generator parse_generator(std::string_view name) {
    if (name == "gaussian_blobs") return Generator::GaussianBlobs;
    if (name == "concentric_rings") return Generator::ConcentricRings;
    if (name == "file") return Generator::File;
    throw ConfigError("unknown generator '" + std::string(name) +
                      "' (expected gaussian_blobs, concentric_rings or file)");
}

void DatasetSpec::validate() const {
    if (generator == Generator::File) {
        if (path.empty()) throw ConfigError("file dataset requires a path");
        return;
    }
    if (classes < 1) throw ConfigError("dataset needs at least one class");
    if (n < classes * 2) {
        throw ConfigError("dataset needs N >= 2 * classes (N=" + std::to_string(n) +
                          ", classes=" + std::to_string(classes) + ")");
    }
    if (!(separation > 0.0)) throw ConfigError("dataset separation must be > 0");
    if (d < 2) throw ConfigError("dataset dimension d must be >= 2");
}

LabeledMatrix generate(const DatasetSpec& spec) {
    spec.validate();
    if (spec.generator == Generator::File) return load_matrix(spec.path);

    Pcg32 rng(spec.seed, 0x626c6f6273ULL);
    LabeledMatrix out{Matrix(spec.n, spec.d), std::vector<int>(spec.n)};
    const auto classes = spec.classes;

    if (spec.generator == Generator::GaussianBlobs) {
        Matrix means(classes, spec.d);
        if (classes <= spec.d) {
            const double a = spec.separation / std::numbers::sqrt2;
            for (std::size_t c = 0; c < classes; ++c) means(c, c) = a;
        } else {
            const double radius =
                spec.separation / (2.0 * std::sin(std::numbers::pi / static_cast<double>(classes)));
            for (std::size_t c = 0; c < classes; ++c) {
                const double t = 2.0 * std::numbers::pi * static_cast<double>(c) / double(classes);
                means(c, 0) = radius * std::cos(t);
                means(c, 1) = radius * std::sin(t);
            }
        }
        for (std::size_t i = 0; i < spec.n; ++i) {
            const std::size_t c = i % classes;
            out.labels[i] = static_cast<int>(c);
            for (std::size_t j = 0; j < spec.d; ++j) out.features(i, j) = means(c, j) + rng.normal();
        }
        return out;
    }

    for (std::size_t i = 0; i < spec.n; ++i) {
        const std::size_t c = i % classes;
        out.labels[i] = static_cast<int>(c);
        const double r = static_cast<double>(c + 1) * spec.separation + rng.normal();
        const double t = rng.uniform(0.0, 2.0 * std::numbers::pi);
        out.features(i, 0) = r * std::cos(t);
        out.features(i, 1) = r * std::sin(t);
        for (std::size_t j = 2; j < spec.d; ++j) out.features(i, j) = rng.normal();
    }
    return out;
}

LabeledMatrix load_matrix(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    std::string head(kMatrixMagic.size(), '\0');
    is.read(head.data(), static_cast<std::streamsize>(head.size()));
    if (is.gcount() == static_cast<std::streamsize>(head.size()) && head == kMatrixMagic) {
        return load_matrix_binary(path);
    }
    return load_matrix_csv(path);
}

LabeledMatrix load_matrix_csv(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open " + path.string());
    std::string line;
    if (!std::getline(is, line)) throw ParseError("empty file, expected a header", 1);
    const auto header = split_csv_line(line);
    if (header.size() < 2 || header.back() != "label") {
        throw ParseError("header '" + line + "' lacks a trailing 'label' column", 1);
    }
    const std::size_t d = header.size() - 1;
    for (std::size_t j = 0; j < d; ++j) {
        if (header[j] != "f" + std::to_string(j)) {
            throw ParseError("header '" + line + "': column " + std::to_string(j) +
                                 " should be named f" + std::to_string(j),
                             1);
        }
    }
    std::vector<double> values;
    std::vector<int> labels;
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != d + 1) {
            throw ParseError("expected " + std::to_string(d + 1) + " fields, found " +
                                 std::to_string(fields.size()),
                             lineno);
        }
        for (std::size_t j = 0; j < d; ++j) {
            const double v = parse_double(fields[j], lineno);
            if (!std::isfinite(v)) throw ParseError("non-finite feature value", lineno);
            values.push_back(v);
        }
        const long long label = parse_integer(fields[d], lineno);
        if (label < 0 || label > std::numeric_limits<int>::max()) {
            throw ParseError("label out of range", lineno);
        }
        labels.push_back(static_cast<int>(label));
    }
    LabeledMatrix out{Matrix(labels.size(), d), std::move(labels)};
    std::copy(values.begin(), values.end(), out.features.data().begin());
    return out;
}

LabeledMatrix load_matrix_binary(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    binary::expect_magic(is, kMatrixMagic);
    const std::uint64_t n = binary::read_u64(is);
    const std::uint64_t d = binary::read_u64(is);
    const std::uint64_t has_labels = binary::read_u64(is);
    if (n > (1u << 28) || d > (1u << 20) || has_labels > 1) {
        throw IoError("corrupt matrix header in " + path.string());
    }
    LabeledMatrix out{Matrix(n, d), {}};
    for (double& v : out.features.data()) v = binary::read_f64(is);
    if (has_labels) {
        out.labels.resize(n);
        for (int& l : out.labels) l = static_cast<int>(binary::read_i64(is));
    }
    return out;
}

void save_matrix_binary(const std::filesystem::path& path, const LabeledMatrix& m) {
    if (m.has_labels() && m.labels.size() != m.features.rows()) {
        throw DimensionError("label count does not match row count");
    }
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    os.write(kMatrixMagic.data(), static_cast<std::streamsize>(kMatrixMagic.size()));
    binary::write_u64(os, m.features.rows());
    binary::write_u64(os, m.features.cols());
    binary::write_u64(os, m.has_labels() ? 1 : 0);
    for (double v : m.features.data()) binary::write_f64(os, v);
    for (int l : m.labels) binary::write_i64(os, l);
    if (!os) throw IoError("write failed: " + path.string());
}

std::string format_real(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void save_matrix_csv(const std::filesystem::path& path, const LabeledMatrix& m) {
    if (m.labels.size() != m.features.rows()) {
        throw DimensionError("CSV output requires one label per row");
    }
    std::string text;
    for (std::size_t j = 0; j < m.features.cols(); ++j) text += "f" + std::to_string(j) + ",";
    text += "label\n";
    for (std::size_t i = 0; i < m.features.rows(); ++i) {
        for (double v : m.features.row(i)) text += format_real(v) + ",";
        text += std::to_string(m.labels[i]) + "\n";
    }
    write_text(path, text);
}

std::string scatter_svg(const Matrix& points, std::span<const int> labels) {
    if (points.cols() != 2) throw DimensionError("scatter plot needs 2-D points");
    if (labels.size() != points.rows()) throw DimensionError("one label per point required");

    double minx = 0, maxx = 0, miny = 0, maxy = 0;
    for (std::size_t i = 0; i < points.rows(); ++i) {
        const double x = points(i, 0);
        const double y = -points(i, 1);  // SVG y grows downwards
        if (i == 0) {
            minx = maxx = x;
            miny = maxy = y;
        }
        minx = std::min(minx, x);
        maxx = std::max(maxx, x);
        miny = std::min(miny, y);
        maxy = std::max(maxy, y);
    }
    double span = std::max(maxx - minx, maxy - miny);
    if (!(span > 0.0)) span = 1.0;
    const double margin = 0.05 * span;
    const double radius = 0.006 * span;
    const double font = 0.03 * span;
    const double legend_w = 0.25 * span;

    std::vector<int> classes(labels.begin(), labels.end());
    std::sort(classes.begin(), classes.end());
    classes.erase(std::unique(classes.begin(), classes.end()), classes.end());

    const double vx = minx - margin;
    const double vy = miny - margin;
    const double vw = (maxx - minx) + 2 * margin + legend_w;
    const double vh = std::max((maxy - miny) + 2 * margin,
                               (static_cast<double>(classes.size()) * 1.5 + 1.0) * font);
    const double width = 800.0;
    const double height = std::round(width * vh / vw);

    std::string s;
    s += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    s += "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" + fmt_svg(width) +
         "\" height=\"" + fmt_svg(height) + "\" viewBox=\"" + fmt_svg(vx) + " " + fmt_svg(vy) +
         " " + fmt_svg(vw) + " " + fmt_svg(vh) + "\">\n";
    s += "<g id=\"points\" stroke=\"none\">\n";
    for (std::size_t i = 0; i < points.rows(); ++i) {
        s += "<circle cx=\"" + fmt_svg(points(i, 0)) + "\" cy=\"" + fmt_svg(-points(i, 1)) +
             "\" r=\"" + fmt_svg(radius) + "\" fill=\"" + palette_color(labels[i]) + "\"/>\n";
    }
    s += "</g>\n";
    s += "<g id=\"legend\" font-family=\"sans-serif\" font-size=\"" + fmt_svg(font) + "\">\n";
    const double lx = maxx + margin + 0.2 * legend_w;
    for (std::size_t k = 0; k < classes.size(); ++k) {
        const double ly = vy + font * (0.5 + 1.5 * static_cast<double>(k));
        s += "<rect x=\"" + fmt_svg(lx) + "\" y=\"" + fmt_svg(ly) + "\" width=\"" + fmt_svg(font) +
             "\" height=\"" + fmt_svg(font) + "\" fill=\"" + palette_color(classes[k]) + "\"/>\n";
        s += "<text x=\"" + fmt_svg(lx + 1.5 * font) + "\" y=\"" + fmt_svg(ly + 0.85 * font) +
             "\">class " + std::to_string(classes[k]) + "</text>\n";
    }
    s += "</g>\n</svg>\n";
    return s;
}

void emit_scatter_svg(const Matrix& points, std::span<const int> labels,
                      const std::filesystem::path& path) {
    write_text(path, scatter_svg(points, labels));
}

std::string report_csv(const TrainReport& report) {
    for (const auto& row : report.grad_norms) {
        if (row.size() != report.tensor_names.size()) {
            throw DimensionError("report gradient-norm row does not match tensor count");
        }
    }
    if (report.grad_norms.size() != report.losses.size()) {
        throw DimensionError("report has mismatched loss and gradient-norm lengths");
    }
    std::string s = "step,loss";
    for (const auto& t : report.tensor_names) s += ",grad_norm_" + t;
    for (const auto& m : report.metric_names) s += "," + m;
    s += "\n";
    std::size_t snap = 0;
    for (std::size_t step = 0; step < report.steps(); ++step) {
        s += std::to_string(step) + "," + format_real(report.losses[step]);
        for (double g : report.grad_norms[step]) s += "," + format_real(g);
        while (snap < report.snapshots.size() && report.snapshots[snap].step < step) ++snap;
        const MetricSnapshot* cur =
            snap < report.snapshots.size() && report.snapshots[snap].step == step
                ? &report.snapshots[snap]
                : nullptr;
        for (std::size_t m = 0; m < report.metric_names.size(); ++m) {
            s += ",";
            if (cur && m < cur->values.size() && !std::isnan(cur->values[m])) {
                s += format_real(cur->values[m]);
            }
        }
        s += "\n";
    }
    return s;
}

void emit_report_csv(const TrainReport& report, const std::filesystem::path& path) {
    write_text(path, report_csv(report));
}

TrainReport read_report_csv(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open " + path.string());
    std::string line;
    if (!std::getline(is, line)) throw ParseError("empty report", 1);
    const auto header = split_csv_line(line);
    if (header.size() < 2 || header[0] != "step" || header[1] != "loss") {
        throw ParseError("report header must start with step,loss", 1);
    }
    TrainReport r;
    std::size_t metric_start = 2;
    while (metric_start < header.size() && header[metric_start].rfind("grad_norm_", 0) == 0) {
        r.tensor_names.push_back(header[metric_start].substr(10));
        ++metric_start;
    }
    r.metric_names.assign(header.begin() + static_cast<std::ptrdiff_t>(metric_start), header.end());
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto f = split_csv_line(line);
        if (f.size() != header.size()) throw ParseError("wrong field count", lineno);
        const auto step = static_cast<std::size_t>(parse_integer(f[0], lineno));
        r.losses.push_back(parse_double(f[1], lineno));
        std::vector<double> norms;
        for (std::size_t j = 2; j < metric_start; ++j) norms.push_back(parse_double(f[j], lineno));
        r.grad_norms.push_back(std::move(norms));
        MetricSnapshot snap{step, {}};
        bool any = false;
        for (std::size_t j = metric_start; j < f.size(); ++j) {
            if (f[j].empty()) {
                snap.values.push_back(std::numeric_limits<double>::quiet_NaN());
            } else {
                snap.values.push_back(parse_double(f[j], lineno));
                any = true;
            }
        }
        if (any) r.snapshots.push_back(std::move(snap));
    }
    return r;
}

void append_metrics_csv(const std::filesystem::path& path, std::span<const MetricRow> rows,
                        std::uint64_t config_hash, std::uint64_t seed) {
    const bool fresh = !std::filesystem::exists(path);
    std::ofstream os(path, std::ios::binary | std::ios::app);
    if (!os) throw IoError("cannot open " + path.string() + " for appending");
    if (fresh) os << "metric,value,config_hash,seed\n";
    char hash[24];
    std::snprintf(hash, sizeof hash, "%016" PRIx64, config_hash);
    for (const auto& r : rows) {
        os << r.metric << ',' << format_real(r.value) << ',' << hash << ',' << seed << '\n';
    }
    if (!os) throw IoError("write failed: " + path.string());
}

}  // namespace bicon
