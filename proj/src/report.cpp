#include <cstdio>
#include <filesystem>
#include <sstream>

#include <json.hpp>

#include "cvrank/binary_io.hpp"
#include "cvrank/evaluator.hpp"

namespace cvrank::evaluator {

namespace {

using ojson = nlohmann::ordered_json;

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

std::string k_label(std::size_t k) { return "R@" + std::to_string(k); }
std::string t_label(double t) { return fmt("%.3g", t) + "km"; }

struct Row {
  std::string metric;
  double baseline;
  std::optional<double> reranked;
};

std::vector<Row> rows_of(const EvalReport& r) {
  std::vector<Row> rows;
  auto other = [&](auto get) -> std::optional<double> {
    if (!r.reranked) return std::nullopt;
    return get(*r.reranked);
  };
  for (std::size_t i = 0; i < r.config.ks.size(); ++i) {
    rows.push_back({k_label(r.config.ks[i]), r.baseline.recall[i], other([&](const Metrics& m) { return m.recall[i]; })});
  }
  rows.push_back({"AP", r.baseline.mean_ap, other([](const Metrics& m) { return m.mean_ap; })});
  for (std::size_t t = 0; t < r.baseline.threshold_recall.size(); ++t) {
    for (std::size_t i = 0; i < r.config.ks.size(); ++i) {
      rows.push_back({k_label(r.config.ks[i]) + "@" + t_label(r.config.thresholds_km[t]),
                      r.baseline.threshold_recall[t][i],
                      other([&](const Metrics& m) { return m.threshold_recall[t][i]; })});
    }
  }
  return rows;
}

ojson metrics_json(const Metrics& m, const EvalConfig& c) {
  ojson recall = ojson::object();
  for (std::size_t i = 0; i < c.ks.size(); ++i) recall[k_label(c.ks[i])] = m.recall[i];
  ojson out{{"recall", recall}, {"mean_ap", m.mean_ap}};
  if (!m.threshold_recall.empty()) {
    ojson th = ojson::object();
    for (std::size_t t = 0; t < m.threshold_recall.size(); ++t) {
      ojson row = ojson::object();
      for (std::size_t i = 0; i < c.ks.size(); ++i) row[k_label(c.ks[i])] = m.threshold_recall[t][i];
      th[t_label(c.thresholds_km[t])] = row;
    }
    out["threshold_recall"] = th;
  }
  return out;
}

}  // namespace

std::string report_json(const EvalReport& r) {
  ojson doc;
  doc["query_count"] = r.query_count;
  doc["skipped_count"] = r.skipped_count;
  doc["retrieval_depth"] = r.retrieval_depth;
  doc["config"] = ojson{{"ks", r.config.ks},
                        {"thresholds_km", r.config.thresholds_km},
                        {"earth_radius_km", r.config.earth_radius_km}};
  doc["baseline"] = metrics_json(r.baseline, r.config);
  if (r.reranked) {
    doc["reranked"] = metrics_json(*r.reranked, r.config);
    ojson delta = ojson::object();
    for (const auto& row : rows_of(r)) delta[row.metric] = *row.reranked - row.baseline;
    doc["delta"] = delta;
  }
  // Large-scale magnitudes for orientation only; nothing here is computed or checked.
  doc["reference_context"] = ojson{
      {"note", "full-dataset figures with a pretrained backbone; informational, not reproduced"},
      {"vigor_same_area_baseline", ojson{{"R@1", 77.86}, {"R@5", 95.18}, {"R@10", 97.21}}},
      {"vigor_same_area_reranked", ojson{{"R@1", 85.64}, {"R@5", 96.18}, {"R@10", 97.21}}},
      {"university_drone2sat_reranked", ojson{{"R@1", 93.15}, {"AP", 95.23}}}};
  return doc.dump(2) + "\n";
}

std::string report_csv(const EvalReport& r) {
  std::ostringstream out;
  out << "metric,baseline,reranked,delta\n";
  for (const auto& row : rows_of(r)) {
    out << row.metric << ',' << fmt("%.6f", row.baseline) << ',';
    if (row.reranked) out << fmt("%.6f", *row.reranked) << ',' << fmt("%+.6f", *row.reranked - row.baseline);
    else out << ',';
    out << '\n';
  }
  return out.str();
}

std::string report_svg(const EvalReport& r) {
  const auto& ks = r.config.ks;
  const int bar = 28;
  const int gap = 24;
  const int plot_h = 200;
  const int left = 50;
  const int top = 30;
  const int series = r.reranked ? 2 : 1;
  const int group_w = series * bar + gap;
  const int width = left + static_cast<int>(ks.size()) * group_w + 130;
  const int height = top + plot_h + 50;

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
    << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s << "<text x=\"" << left << "\" y=\"18\" font-size=\"13\">Recall@K, baseline vs reranked</text>\n";
  for (int tick = 0; tick <= 4; ++tick) {
    const double v = tick / 4.0;
    const int y = top + plot_h - static_cast<int>(v * plot_h);
    s << "<line x1=\"" << left << "\" y1=\"" << y << "\" x2=\"" << width - 130 << "\" y2=\"" << y
      << "\" stroke=\"#ddd\"/>\n";
    s << "<text x=\"" << left - 6 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">" << fmt("%.2f", v) << "</text>\n";
  }
  const char* colors[] = {"#8c8c8c", "#2b6cb0"};
  for (std::size_t i = 0; i < ks.size(); ++i) {
    const int x0 = left + gap / 2 + static_cast<int>(i) * group_w;
    for (int sidx = 0; sidx < series; ++sidx) {
      const double v = sidx == 0 ? r.baseline.recall[i] : r.reranked->recall[i];
      const int h = static_cast<int>(v * plot_h + 0.5);
      const int x = x0 + sidx * bar;
      s << "<rect x=\"" << x << "\" y=\"" << top + plot_h - h << "\" width=\"" << bar - 2 << "\" height=\"" << h
        << "\" fill=\"" << colors[sidx] << "\"><title>" << fmt("%.4f", v) << "</title></rect>\n";
    }
    s << "<text x=\"" << x0 + series * bar / 2 << "\" y=\"" << top + plot_h + 16 << "\" text-anchor=\"middle\">"
      << k_label(ks[i]) << "</text>\n";
  }
  const char* names[] = {"baseline", "reranked"};
  for (int sidx = 0; sidx < series; ++sidx) {
    const int y = top + 10 + sidx * 18;
    s << "<rect x=\"" << width - 120 << "\" y=\"" << y - 9 << "\" width=\"10\" height=\"10\" fill=\"" << colors[sidx]
      << "\"/>\n";
    s << "<text x=\"" << width - 105 << "\" y=\"" << y << "\">" << names[sidx] << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

void write_report(const std::string& out_dir, const EvalReport& report) {
  const std::filesystem::path dir(out_dir);
  io::write_file((dir / "report.json").string(), report_json(report));
  io::write_file((dir / "report.csv").string(), report_csv(report));
  io::write_file((dir / "report.svg").string(), report_svg(report));
}

}  // namespace cvrank::evaluator
