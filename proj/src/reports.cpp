#include "gpinet/errors.hpp"
#include "gpinet/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace gpinet {

namespace {

std::string fmt(double v, const char* format = "%.10g") {
  char buf[64];
  std::snprintf(buf, sizeof(buf), format, v);
  return buf;
}

std::string opt_fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

nlohmann::json opt_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

std::optional<double> opt_from(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

std::string series_name(Method m, const std::string& variant) {
  std::string s = to_string(m);
  if (!variant.empty()) s += "[" + variant + "]";
  return s;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot open '" + path.string() + "' for writing");
  os << content;
}

}  // namespace

ReportFormat report_format_from_string(const std::string& name) {
  if (name == "csv") return ReportFormat::csv;
  if (name == "json") return ReportFormat::json;
  if (name == "svg") return ReportFormat::svg;
  throw ConfigError("unknown report format '" + name + "' (expected csv, json or svg)");
}

nlohmann::json report_to_json(const MetricsReport& r) {
  nlohmann::json records = nlohmann::json::array();
  for (const auto& rec : r.records) {
    records.push_back({{"method", to_string(rec.method)},
                       {"variant", rec.variant},
                       {"outlier_ratio", rec.outlier_ratio},
                       {"n", rec.n},
                       {"trial", rec.trial},
                       {"seed", rec.seed},
                       {"status", rec.status},
                       {"success", rec.success},
                       {"re_deg", opt_json(rec.rotation_error_deg)},
                       {"te_cm", opt_json(rec.translation_error_cm)},
                       {"ip", rec.precision},
                       {"ir", rec.recall},
                       {"f1", rec.f1},
                       {"inlier_count", rec.inlier_count}});
  }
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : r.cells) {
    cells.push_back({{"method", to_string(c.method)},
                     {"variant", c.variant},
                     {"outlier_ratio", c.outlier_ratio},
                     {"n", c.n},
                     {"trials", c.trials},
                     {"successes", c.successes},
                     {"rr", c.registration_recall},
                     {"mean_re_deg", opt_json(c.mean_rotation_error_deg)},
                     {"mean_te_cm", opt_json(c.mean_translation_error_cm)},
                     {"mean_ip", c.mean_precision},
                     {"mean_ir", c.mean_recall},
                     {"mean_f1", c.mean_f1}});
  }
  return {{"config", r.config}, {"records", records}, {"cells", cells}};
}

MetricsReport report_from_json(const nlohmann::json& j) {
  MetricsReport r;
  try {
    r.config = j.at("config");
    for (const auto& e : j.at("records")) {
      TrialRecord rec;
      rec.method = method_from_string(e.at("method").get<std::string>());
      rec.variant = e.at("variant").get<std::string>();
      rec.outlier_ratio = e.at("outlier_ratio").get<double>();
      rec.n = e.at("n").get<std::size_t>();
      rec.trial = e.at("trial").get<std::size_t>();
      rec.seed = e.at("seed").get<std::uint64_t>();
      rec.status = e.at("status").get<std::string>();
      rec.success = e.at("success").get<bool>();
      rec.rotation_error_deg = opt_from(e.at("re_deg"));
      rec.translation_error_cm = opt_from(e.at("te_cm"));
      rec.precision = e.at("ip").get<double>();
      rec.recall = e.at("ir").get<double>();
      rec.f1 = e.at("f1").get<double>();
      rec.inlier_count = e.at("inlier_count").get<std::size_t>();
      r.records.push_back(std::move(rec));
    }
    for (const auto& e : j.at("cells")) {
      CellAggregate c;
      c.method = method_from_string(e.at("method").get<std::string>());
      c.variant = e.at("variant").get<std::string>();
      c.outlier_ratio = e.at("outlier_ratio").get<double>();
      c.n = e.at("n").get<std::size_t>();
      c.trials = e.at("trials").get<std::size_t>();
      c.successes = e.at("successes").get<std::size_t>();
      c.registration_recall = e.at("rr").get<double>();
      c.mean_rotation_error_deg = opt_from(e.at("mean_re_deg"));
      c.mean_translation_error_cm = opt_from(e.at("mean_te_cm"));
      c.mean_precision = e.at("mean_ip").get<double>();
      c.mean_recall = e.at("mean_ir").get<double>();
      c.mean_f1 = e.at("mean_f1").get<double>();
      r.cells.push_back(c);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("report JSON: ") + e.what());
  }
  return r;
}

std::string report_csv(const MetricsReport& r) {
  std::ostringstream os;
  os << "method,variant,outlier_ratio,n,trials,successes,rr,mean_re_deg,mean_te_cm,mean_ip,mean_ir,mean_f1\n";
  for (const auto& c : r.cells) {
    os << to_string(c.method) << ',' << c.variant << ',' << fmt(c.outlier_ratio) << ',' << c.n << ','
       << c.trials << ',' << c.successes << ',' << fmt(c.registration_recall) << ','
       << opt_fmt(c.mean_rotation_error_deg) << ',' << opt_fmt(c.mean_translation_error_cm) << ','
       << fmt(c.mean_precision) << ',' << fmt(c.mean_recall) << ',' << fmt(c.mean_f1) << '\n';
  }
  return os.str();
}

std::string timings_csv(const MetricsReport& r) {
  std::ostringstream os;
  os << "method,variant,outlier_ratio,n,trial,wall_seconds\n";
  for (const auto& rec : r.records) {
    os << to_string(rec.method) << ',' << rec.variant << ',' << fmt(rec.outlier_ratio) << ',' << rec.n
       << ',' << rec.trial << ',' << fmt(rec.wall_seconds, "%.6f") << '\n';
  }
  return os.str();
}

std::string report_svg(const MetricsReport& r, SweepAxis axis) {
  constexpr double width = 720, height = 440;
  constexpr double left = 70, right = 200, top = 40, bottom = 60;
  const double plot_w = width - left - right;
  const double plot_h = height - top - bottom;

  const auto x_of = [axis](const CellAggregate& c) {
    return axis == SweepAxis::n ? static_cast<double>(c.n) : c.outlier_ratio;
  };
  const auto other_of = [axis](const CellAggregate& c) {
    return axis == SweepAxis::n ? c.outlier_ratio : static_cast<double>(c.n);
  };
  std::set<double> xs, others;
  for (const auto& c : r.cells) {
    xs.insert(x_of(c));
    others.insert(other_of(c));
  }
  // Categorical x positions: evenly spaced sorted axis values.
  std::map<double, double> x_pos;
  std::size_t k = 0;
  for (double x : xs) {
    const double frac = xs.size() > 1 ? static_cast<double>(k) / static_cast<double>(xs.size() - 1) : 0.5;
    x_pos[x] = left + frac * plot_w;
    ++k;
  }
  const auto y_pos = [&](double rr) { return top + (1.0 - rr / 100.0) * plot_h; };

  using SeriesKey = std::tuple<std::string, double>;
  std::map<SeriesKey, std::vector<std::pair<double, double>>> series;
  std::vector<SeriesKey> order;
  for (const auto& c : r.cells) {
    const SeriesKey key{series_name(c.method, c.variant), others.size() > 1 ? other_of(c) : 0.0};
    if (!series.count(key)) order.push_back(key);
    series[key].emplace_back(x_of(c), c.registration_recall);
  }

  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
                                  "#8c564b", "#e377c2", "#17becf", "#7f7f7f", "#bcbd22"};
  const std::string x_label = axis == SweepAxis::n ? "number of correspondences N" : "outlier ratio";

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\" viewBox=\"0 0 " << width << ' ' << height << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
  os << "<text x=\"" << left + plot_w / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">"
     << "Registration recall vs " << xml_escape(x_label) << "</text>\n";
  os << "<g stroke=\"black\" stroke-width=\"1\">\n"
     << "<line x1=\"" << left << "\" y1=\"" << top + plot_h << "\" x2=\"" << left + plot_w << "\" y2=\""
     << top + plot_h << "\"/>\n"
     << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + plot_h
     << "\"/>\n</g>\n";
  for (int tick = 0; tick <= 100; tick += 20) {
    const double y = y_pos(tick);
    os << "<line x1=\"" << left - 4 << "\" y1=\"" << y << "\" x2=\"" << left + plot_w << "\" y2=\"" << y
       << "\" stroke=\"#dddddd\"/>\n";
    os << "<text x=\"" << left - 8 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">" << tick << "</text>\n";
  }
  for (const auto& [x, px] : x_pos) {
    os << "<line x1=\"" << px << "\" y1=\"" << top + plot_h << "\" x2=\"" << px << "\" y2=\""
       << top + plot_h + 4 << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << px << "\" y=\"" << top + plot_h + 18 << "\" text-anchor=\"middle\">" << fmt(x, "%g")
       << "</text>\n";
  }
  os << "<text x=\"" << left + plot_w / 2 << "\" y=\"" << height - 18 << "\" text-anchor=\"middle\">"
     << xml_escape(x_label) << "</text>\n";
  os << "<text x=\"18\" y=\"" << top + plot_h / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
     << top + plot_h / 2 << ")\">registration recall (%)</text>\n";

  std::size_t s = 0;
  for (const auto& key : order) {
    auto pts = series[key];
    std::sort(pts.begin(), pts.end());
    const char* color = palette[s % std::size(palette)];
    std::string label = std::get<0>(key);
    if (others.size() > 1) {
      label += axis == SweepAxis::n ? " @ ratio " : " @ N=";
      label += fmt(std::get<1>(key), "%g");
    }
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < pts.size(); ++i) {
      os << (i ? " " : "") << fmt(x_pos[pts[i].first], "%.2f") << ',' << fmt(y_pos(pts[i].second), "%.2f");
    }
    os << "\"><title>" << xml_escape(label) << "</title></polyline>\n";
    for (const auto& [x, rr] : pts) {
      os << "<circle cx=\"" << fmt(x_pos[x], "%.2f") << "\" cy=\"" << fmt(y_pos(rr), "%.2f")
         << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    }
    const double ly = top + 10 + 18.0 * static_cast<double>(s);
    os << "<line x1=\"" << left + plot_w + 16 << "\" y1=\"" << ly << "\" x2=\"" << left + plot_w + 36
       << "\" y2=\"" << ly << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << left + plot_w + 42 << "\" y=\"" << ly + 4 << "\">" << xml_escape(label) << "</text>\n";
    ++s;
  }
  os << "</svg>\n";
  return os.str();
}

std::vector<std::filesystem::path> emit_reports(const MetricsReport& r, const std::filesystem::path& dir,
                                                const std::vector<ReportFormat>& formats) {
  if (r.cells.empty()) throw ContractError("emit_reports: report has no cells");
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  const auto emit = [&](const std::string& name, const std::string& content) {
    const auto path = dir / name;
    write_file(path, content);
    written.push_back(path);
  };
  for (ReportFormat f : formats) {
    switch (f) {
      case ReportFormat::csv: emit("report.csv", report_csv(r)); break;
      case ReportFormat::json: emit("report.json", report_to_json(r).dump(2) + "\n"); break;
      case ReportFormat::svg:
        emit("rr_vs_n.svg", report_svg(r, SweepAxis::n));
        emit("rr_vs_outlier_ratio.svg", report_svg(r, SweepAxis::outlier_ratio));
        break;
    }
  }
  emit("timings.csv", timings_csv(r));
  return written;
}

}  // namespace gpinet
