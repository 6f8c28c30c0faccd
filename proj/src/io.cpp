#include "isac/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>
#include <openssl/evp.h>

namespace isac {

namespace {

std::string read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf", "#7f7f7f"};

}  // namespace

std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw Error("sha256: digest failed");
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", md[i]);
    hex += buf;
  }
  return hex;
}

std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(read_all(path)); }

int csv_data_rows(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  std::string line;
  int rows = -1;  // header
  while (std::getline(in, line))
    if (!line.empty()) ++rows;
  return std::max(rows, 0);
}

void write_svg(const SvgPlot& plot, const std::filesystem::path& path) {
  constexpr double W = 640, H = 420, L = 70, R = 150, T = 40, B = 50;
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& s : plot.series)
    for (Eigen::Index i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
      if (!std::isfinite(s.x(i)) || !std::isfinite(s.y(i))) continue;
      x0 = std::min(x0, s.x(i));
      x1 = std::max(x1, s.x(i));
      y0 = std::min(y0, s.y(i));
      y1 = std::max(y1, s.y(i));
    }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x0 -= 0.5, x1 += 0.5;
  if (y1 == y0) y0 -= 0.5, y1 += 0.5;
  auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };

  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << fmt(W / 2) << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << escape(plot.title) << "</text>\n";
  out << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << W - L - R << "\" height=\"" << H - T - B
      << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double xv = x0 + (x1 - x0) * k / 4.0, yv = y0 + (y1 - y0) * k / 4.0;
    out << "<text x=\"" << fmt(px(xv)) << "\" y=\"" << fmt(H - B + 16) << "\" text-anchor=\"middle\">" << tick(xv) << "</text>\n";
    out << "<text x=\"" << fmt(L - 6) << "\" y=\"" << fmt(py(yv) + 4) << "\" text-anchor=\"end\">" << tick(yv) << "</text>\n";
  }
  out << "<text x=\"" << fmt(L + (W - L - R) / 2) << "\" y=\"" << fmt(H - 12) << "\" text-anchor=\"middle\">"
      << escape(plot.x_label) << "</text>\n";
  out << "<text x=\"16\" y=\"" << fmt(T + (H - T - B) / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
      << fmt(T + (H - T - B) / 2) << ")\">" << escape(plot.y_label) << "</text>\n";

  for (std::size_t k = 0; k < plot.series.size(); ++k) {
    const auto& s = plot.series[k];
    const char* color = kColors[k % std::size(kColors)];
    const Eigen::Index n = std::min(s.x.size(), s.y.size());
    if (s.scatter) {
      for (Eigen::Index i = 0; i < n; ++i)
        if (std::isfinite(s.x(i)) && std::isfinite(s.y(i)))
          out << "<circle cx=\"" << fmt(px(s.x(i))) << "\" cy=\"" << fmt(py(s.y(i))) << "\" r=\"2\" fill=\"" << color
              << "\"/>\n";
    } else {
      out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
      for (Eigen::Index i = 0; i < n; ++i)
        if (std::isfinite(s.x(i)) && std::isfinite(s.y(i))) out << fmt(px(s.x(i))) << ',' << fmt(py(s.y(i))) << ' ';
      out << "\"/>\n";
    }
    const double ly = T + 14 + 18 * static_cast<double>(k);
    out << "<rect x=\"" << fmt(W - R + 10) << "\" y=\"" << fmt(ly - 9) << "\" width=\"12\" height=\"10\" fill=\"" << color
        << "\"/>\n";
    out << "<text x=\"" << fmt(W - R + 28) << "\" y=\"" << fmt(ly) << "\">" << escape(s.label) << "</text>\n";
  }
  out << "</svg>\n";
}

bool Probe::pass() const {
  if (!std::isfinite(measured)) return false;
  if (relation == "abs") return std::abs(measured - expected) <= tolerance;
  if (relation == "le") return measured <= expected + tolerance;
  if (relation == "ge") return measured >= expected - tolerance;
  throw DomainError("probe " + name + ": unknown relation '" + relation + "'");
}

void write_probes_csv(const std::vector<Probe>& probes, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out.precision(12);
  out << "name,measured,expected,tolerance,relation,pass\n";
  for (const auto& p : probes)
    out << p.name << ',' << p.measured << ',' << p.expected << ',' << p.tolerance << ',' << p.relation << ','
        << (p.pass() ? 1 : 0) << '\n';
}

std::vector<Probe> read_probes_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  std::vector<Probe> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() < 5) throw Error(path.string() + ": malformed probe row '" + line + "'");
    Probe p;
    p.name = f[0];
    p.measured = std::stod(f[1]);
    p.expected = std::stod(f[2]);
    p.tolerance = std::stod(f[3]);
    p.relation = f[4];
    out.push_back(p);
  }
  return out;
}

Manifest make_manifest(const std::string& kind, const std::filesystem::path& dir, const std::vector<std::string>& files) {
  Manifest m;
  m.kind = kind;
  for (const auto& f : files) {
    const auto p = dir / f;
    const bool csv = p.extension() == ".csv";
    m.entries.push_back({f, sha256_file(p), csv ? csv_data_rows(p) : 0});
  }
  return m;
}

void write_manifest(const Manifest& m, const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["kind"] = m.kind;
  j["artifacts"] = nlohmann::ordered_json::array();
  for (const auto& e : m.entries) j["artifacts"].push_back({{"file", e.file}, {"sha256", e.sha256}, {"rows", e.rows}});
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

Manifest read_manifest(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_all(path));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path.string(), e.what());
  }
  Manifest m;
  m.kind = j.value("kind", "");
  if (!j.contains("artifacts")) return m;
  for (const auto& a : j.at("artifacts"))
    m.entries.push_back({a.at("file").get<std::string>(), a.at("sha256").get<std::string>(), a.value("rows", 0)});
  return m;
}

}  // namespace isac
