/*
 * Copyright 2026 The implang Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "implang/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "implang/error.hpp"

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace implang {

std::string Comparison::name() const
{
  return baseline + " vs " + other + " (" + to_string(metric) + ")";
}

const GroupResult& RunReport::group(const std::string& name) const
{
  for (const auto& g : groups)
    if (g.group == name) return g;
  throw InputError("report has no group '" + name + "'");
}

std::string to_string(Metric m)
{
  return m == Metric::Loss ? "loss" : "perplexity";
}

Metric parse_metric(const std::string& s)
{
  if (s == "loss") return Metric::Loss;
  if (s == "perplexity") return Metric::Perplexity;
  throw ConfigError("unknown metric '" + s + "' (loss or perplexity)");
}

void summarize(GroupResult& g, double window_fraction)
{
  if (g.runs.empty()) throw RuntimeError("group " + g.group + " has no runs");
  double final_sum = 0.0, heldout_sum = 0.0;
  g.min_perplexity = std::numeric_limits<double>::infinity();
  std::vector<MetricSeries> series;
  for (const auto& r : g.runs)
  {
    if (r.series.records.empty()) throw RuntimeError("group " + g.group + " has an empty series");
    final_sum += r.series.records.back().perplexity;
    heldout_sum += r.heldout.perplexity;
    for (const auto& rec : r.series.records) g.min_perplexity = std::min(g.min_perplexity, rec.perplexity);
    series.push_back(r.series);
  }
  const double n = static_cast<double>(g.runs.size());
  g.final_perplexity = final_sum / n;
  g.heldout_perplexity = heldout_sum / n;
  g.mean_stabilized_loss = mean(stabilized_window(series, window_fraction, Metric::Loss));
}

LinearityGradient linearity_gradient_summary(const RunReport& report)
{
  std::size_t impossible = 0;
  for (const auto& g : report.groups)
    if (g.group != "natural") ++impossible;
  if (impossible < 2) throw InputError("linearity gradient needs at least two impossible groups");

  LinearityGradient lg;
  for (const auto& g : report.groups) lg.ranking.emplace_back(g.group, g.mean_stabilized_loss);
  std::sort(lg.ranking.begin(), lg.ranking.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second < b.second : a.first < b.first;
  });

  const double* parity = nullptr;
  const double* reversed = nullptr;
  for (const auto& [name, loss] : lg.ranking)
  {
    if (name == "parity-negation") parity = &loss;
    if (name == "reversed") reversed = &loss;
  }
  lg.parity_below_reversed = parity && reversed && *parity < *reversed;
  return lg;
}

std::string format_p(double p)
{
  if (p < 0.001) return "p<.001";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", p);
  std::string s(buf);
  if (s.rfind("0.", 0) == 0) s.erase(0, 1);
  return "p=" + s;
}

std::string format_test(const TTestResult& r)
{
  char buf[128];
  std::snprintf(buf, sizeof buf, ", t(%.1f)=%.2f, Cohen's d=%.2f", r.df, r.t, r.cohen_d);
  return format_p(r.p_two_sided) + buf;
}

///////////////////////////////////////////
// JSON
///////////////////////////////////////////

namespace {

ordered_json to_json(const RunReport& report)
{
  ordered_json j;
  j["experiment"] = report.experiment;
  j["arch"] = to_string(report.arch);
  j["seed"] = report.seed;
  j["window"] = report.window_fraction;

  j["groups"] = ordered_json::array();
  for (const auto& g : report.groups)
  {
    ordered_json jg;
    jg["group"] = g.group;
    jg["vocab_size"] = g.vocab_size;
    jg["train_sentences"] = g.train_sentences;
    jg["heldout_sentences"] = g.heldout_sentences;
    jg["final_perplexity"] = g.final_perplexity;
    jg["min_perplexity"] = g.min_perplexity;
    jg["heldout_perplexity"] = g.heldout_perplexity;
    jg["mean_stabilized_loss"] = g.mean_stabilized_loss;
    jg["runs"] = ordered_json::array();
    for (const auto& r : g.runs)
    {
      ordered_json jr;
      jr["seed"] = r.seed;
      jr["metrics"] = r.metrics_file;
      jr["checkpoint"] = r.checkpoint_file;
      jr["records"] = r.series.records.size();
      jr["final_loss"] = r.series.records.empty() ? 0.0 : r.series.records.back().loss;
      jr["heldout_loss"] = r.heldout.loss;
      jr["heldout_perplexity"] = r.heldout.perplexity;
      jr["heldout_tokens"] = r.heldout.tokens;
      jg["runs"].push_back(std::move(jr));
    }
    j["groups"].push_back(std::move(jg));
  }

  j["comparisons"] = ordered_json::array();
  for (const auto& c : report.comparisons)
  {
    const auto& t = c.test;
    ordered_json jc;
    jc["comparison"] = c.baseline + " vs " + c.other;
    jc["metric"] = to_string(c.metric);
    jc["t"] = t.t;
    jc["df"] = t.df;
    jc["p"] = t.p_two_sided;
    jc["d"] = t.cohen_d;
    jc["n1"] = t.n1;
    jc["n2"] = t.n2;
    jc["means"] = {t.mean1, t.mean2};
    jc["variances"] = {t.var1, t.var2};
    j["comparisons"].push_back(std::move(jc));
  }

  std::size_t impossible = 0;
  for (const auto& g : report.groups)
    if (g.group != "natural") ++impossible;
  if (impossible >= 2)
  {
    const auto lg = linearity_gradient_summary(report);
    ordered_json jl;
    jl["ranking"] = ordered_json::array();
    for (const auto& [name, loss] : lg.ranking) jl["ranking"].push_back({{"group", name}, {"mean_loss", loss}});
    jl["parity_below_reversed"] = lg.parity_below_reversed;
    j["linearity"] = std::move(jl);
  }
  return j;
}

} // namespace

std::string report_json(const RunReport& report)
{
  return to_json(report).dump(2) + "\n";
}

RunReport read_report(const fs::path& dir)
{
  std::ifstream in(dir / "report.json");
  if (!in) throw InputError("cannot read " + (dir / "report.json").string());
  ordered_json j;
  try
  {
    j = ordered_json::parse(in);
  }
  catch (const nlohmann::json::exception& e)
  {
    throw InputError("malformed report.json: " + std::string(e.what()));
  }

  try
  {
    RunReport r;
    r.experiment = j.at("experiment").get<std::string>();
    auto arch = parse_architecture(j.at("arch").get<std::string>());
    if (!arch) throw InputError("report.json: unknown arch");
    r.arch = *arch;
    r.seed = j.at("seed").get<std::uint64_t>();
    r.window_fraction = j.at("window").get<double>();
    for (const auto& jg : j.at("groups"))
    {
      GroupResult g;
      g.group = jg.at("group").get<std::string>();
      g.vocab_size = jg.at("vocab_size").get<std::size_t>();
      g.train_sentences = jg.at("train_sentences").get<std::size_t>();
      g.heldout_sentences = jg.at("heldout_sentences").get<std::size_t>();
      for (const auto& jr : jg.at("runs"))
      {
        RunRecord rec;
        rec.group = g.group;
        rec.seed = jr.at("seed").get<std::uint64_t>();
        rec.metrics_file = jr.at("metrics").get<std::string>();
        rec.checkpoint_file = jr.at("checkpoint").get<std::string>();
        rec.heldout.loss = jr.at("heldout_loss").get<double>();
        rec.heldout.perplexity = jr.at("heldout_perplexity").get<double>();
        rec.heldout.tokens = jr.at("heldout_tokens").get<std::size_t>();
        std::ifstream csv(dir / rec.metrics_file);
        if (!csv) throw InputError("cannot read " + (dir / rec.metrics_file).string());
        rec.series = read_metrics_csv(csv);
        g.runs.push_back(std::move(rec));
      }
      summarize(g, r.window_fraction);
      r.groups.push_back(std::move(g));
    }
    for (const auto& jc : j.at("comparisons"))
    {
      Comparison c;
      const auto name = jc.at("comparison").get<std::string>();
      const auto vs = name.find(" vs ");
      if (vs == std::string::npos) throw InputError("report.json: bad comparison '" + name + "'");
      c.baseline = name.substr(0, vs);
      c.other = name.substr(vs + 4);
      c.metric = parse_metric(jc.at("metric").get<std::string>());
      auto& t = c.test;
      t.t = jc.at("t").get<double>();
      t.df = jc.at("df").get<double>();
      t.p_two_sided = jc.at("p").get<double>();
      t.cohen_d = jc.at("d").get<double>();
      t.n1 = jc.at("n1").get<std::size_t>();
      t.n2 = jc.at("n2").get<std::size_t>();
      t.mean1 = jc.at("means").at(0).get<double>();
      t.mean2 = jc.at("means").at(1).get<double>();
      t.var1 = jc.at("variances").at(0).get<double>();
      t.var2 = jc.at("variances").at(1).get<double>();
      r.comparisons.push_back(c);
    }
    return r;
  }
  catch (const nlohmann::json::exception& e)
  {
    throw InputError("report.json: " + std::string(e.what()));
  }
}

///////////////////////////////////////////
// Text
///////////////////////////////////////////

std::string report_text(const RunReport& report)
{
  std::ostringstream out;
  char buf[256];
  out << "Experiment " << report.experiment << " (" << to_string(report.arch) << "), seed " << report.seed
      << ", stabilized window from " << std::lround(100.0 * report.window_fraction) << "% of each series\n\n";

  std::snprintf(buf, sizeof buf, "%-16s %6s %5s %11s %11s %13s %16s\n", "group", "vocab", "runs",
    "final ppl", "min ppl", "held-out ppl", "stabilized loss");
  out << buf;
  for (const auto& g : report.groups)
  {
    std::snprintf(buf, sizeof buf, "%-16s %6zu %5zu %11.4f %11.4f %13.4f %16.4f\n", g.group.c_str(), g.vocab_size,
      g.runs.size(), g.final_perplexity, g.min_perplexity, g.heldout_perplexity, g.mean_stabilized_loss);
    out << buf;
  }

  if (!report.comparisons.empty())
  {
    out << "\nWelch's t-test on stabilized-window samples (natural first; negative t and d: natural lower)\n";
    for (const auto& c : report.comparisons) out << c.name() << ": " << format_test(c.test) << '\n';
  }

  std::size_t impossible = 0;
  for (const auto& g : report.groups)
    if (g.group != "natural") ++impossible;
  if (impossible >= 2)
  {
    const auto lg = linearity_gradient_summary(report);
    out << "\nLinearity gradient (mean stabilized loss): ";
    for (std::size_t i = 0; i < lg.ranking.size(); ++i) out << (i ? " < " : "") << lg.ranking[i].first;
    out << "\nparity-negation below reversed: " << (lg.parity_below_reversed ? "yes" : "no") << '\n';
  }
  return out.str();
}

///////////////////////////////////////////
// Curves and plots
///////////////////////////////////////////

namespace {

struct Curve
{
  std::string group;
  std::vector<long> steps;
  std::vector<double> loss;       // mean across seeds
  std::vector<double> perplexity; // mean across seeds
};

Curve mean_curve(const GroupResult& g, std::size_t limit)
{
  Curve c;
  c.group = g.group;
  std::size_t n = std::numeric_limits<std::size_t>::max();
  for (const auto& r : g.runs) n = std::min(n, r.series.records.size());
  n = std::min(n, limit);
  for (std::size_t i = 0; i < n; ++i)
  {
    double l = 0.0, p = 0.0;
    for (const auto& r : g.runs)
    {
      l += r.series.records[i].loss;
      p += r.series.records[i].perplexity;
    }
    c.steps.push_back(g.runs.front().series.records[i].step);
    c.loss.push_back(l / static_cast<double>(g.runs.size()));
    c.perplexity.push_back(p / static_cast<double>(g.runs.size()));
  }
  return c;
}

std::ofstream open_file(const fs::path& path)
{
  std::ofstream out(path);
  if (!out) throw RuntimeError("cannot write " + path.string());
  return out;
}

void write_curve(const fs::path& path, const GroupResult& g, std::size_t limit)
{
  auto out = open_file(path);
  out << std::setprecision(17);
  out << "step,loss_mean,perplexity_mean";
  for (const auto& r : g.runs) out << ",loss_seed" << r.seed;
  out << '\n';
  const Curve c = mean_curve(g, limit);
  for (std::size_t i = 0; i < c.steps.size(); ++i)
  {
    out << c.steps[i] << ',' << c.loss[i] << ',' << c.perplexity[i];
    for (const auto& r : g.runs) out << ',' << r.series.records[i].loss;
    out << '\n';
  }
}

const char* colour(const std::string& group)
{
  if (group == "natural") return "#1f77b4";
  if (group == "reversed") return "#d62728";
  if (group == "parity-negation") return "#2ca02c";
  return "#7f7f7f";
}

std::string fixed(double v, int digits)
{
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

void write_plot(const fs::path& path, const std::vector<Curve>& curves, Metric metric, const std::string& title)
{
  constexpr double W = 640, H = 400, left = 70, right = 160, top = 40, bottom = 50;
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& c : curves)
  {
    const auto& ys = metric == Metric::Loss ? c.loss : c.perplexity;
    for (std::size_t i = 0; i < ys.size(); ++i)
    {
      x0 = std::min(x0, static_cast<double>(c.steps[i]));
      x1 = std::max(x1, static_cast<double>(c.steps[i]));
      y0 = std::min(y0, ys[i]);
      y1 = std::max(y1, ys[i]);
    }
  }
  if (!(x1 > x0)) x1 = x0 + 1;
  if (!(y1 > y0)) y1 = y0 + 1;
  auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * (W - left - right); };
  auto py = [&](double y) { return H - bottom - (y - y0) / (y1 - y0) * (H - top - bottom); };

  auto out = open_file(path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n"
      << "<line x1=\"" << left << "\" y1=\"" << H - bottom << "\" x2=\"" << W - right << "\" y2=\"" << H - bottom
      << "\" stroke=\"black\"/>\n"
      << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << H - bottom
      << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k)
  {
    const double fx = x0 + (x1 - x0) * k / 4.0, fy = y0 + (y1 - y0) * k / 4.0;
    out << "<text x=\"" << fixed(px(fx), 1) << "\" y=\"" << H - bottom + 16 << "\" text-anchor=\"middle\">"
        << fixed(fx, 0) << "</text>\n"
        << "<text x=\"" << left - 6 << "\" y=\"" << fixed(py(fy) + 4, 1) << "\" text-anchor=\"end\">"
        << fixed(fy, 2) << "</text>\n";
  }
  out << "<text x=\"" << (left + W - right) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">step</text>\n"
      << "<text x=\"16\" y=\"" << H / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " << H / 2
      << ")\">" << to_string(metric) << "</text>\n";

  for (std::size_t i = 0; i < curves.size(); ++i)
  {
    const auto& c = curves[i];
    const auto& ys = metric == Metric::Loss ? c.loss : c.perplexity;
    out << "<polyline fill=\"none\" stroke=\"" << colour(c.group) << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t k = 0; k < ys.size(); ++k)
      out << (k ? " " : "") << fixed(px(static_cast<double>(c.steps[k])), 2) << ',' << fixed(py(ys[k]), 2);
    out << "\"/>\n";
    const double ly = top + 20.0 * static_cast<double>(i);
    out << "<line x1=\"" << W - right + 15 << "\" y1=\"" << ly << "\" x2=\"" << W - right + 40 << "\" y2=\"" << ly
        << "\" stroke=\"" << colour(c.group) << "\" stroke-width=\"2\"/>\n"
        << "<text x=\"" << W - right + 46 << "\" y=\"" << ly + 4 << "\">" << c.group << "</text>\n";
  }
  out << "</svg>\n";
}

void write_curves_and_plots(const RunReport& report, const fs::path& dir)
{
  std::error_code ec;
  fs::create_directories(dir / "curves", ec);
  fs::create_directories(dir / "plots", ec);
  if (ec) throw RuntimeError("cannot create " + (dir / "plots").string() + ": " + ec.message());

  constexpr std::size_t kAll = std::numeric_limits<std::size_t>::max();
  std::vector<Curve> overall, early;
  for (const auto& g : report.groups)
  {
    write_curve(dir / "curves" / (g.group + ".overall.csv"), g, kAll);
    write_curve(dir / "curves" / (g.group + ".first50.csv"), g, 50);
    overall.push_back(mean_curve(g, kAll));
    early.push_back(mean_curve(g, 50));
  }

  {
    auto out = open_file(dir / "curves" / "perplexity_table.csv");
    out << std::setprecision(17) << "group,final_perplexity,min_perplexity,heldout_perplexity\n";
    for (const auto& g : report.groups)
      out << g.group << ',' << g.final_perplexity << ',' << g.min_perplexity << ',' << g.heldout_perplexity << '\n';
  }

  const std::string arch = to_string(report.arch);
  write_plot(dir / "plots" / "loss.svg", overall, Metric::Loss, "Training loss (" + arch + ")");
  write_plot(dir / "plots" / "perplexity.svg", overall, Metric::Perplexity, "Perplexity (" + arch + ")");
  write_plot(dir / "plots" / "loss_first50.svg", early, Metric::Loss, "Loss, first 50 steps (" + arch + ")");
  write_plot(dir / "plots" / "perplexity_first50.svg", early, Metric::Perplexity,
    "Perplexity, first 50 steps (" + arch + ")");
}

} // namespace

void emit_report(const RunReport& report, ReportFormat format, const fs::path& dir)
{
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw RuntimeError("cannot create " + dir.string() + ": " + ec.message());
  if (format == ReportFormat::Json)
  {
    auto out = open_file(dir / "report.json");
    out << report_json(report);
  }
  else
  {
    auto out = open_file(dir / "report.txt");
    out << report_text(report);
  }
  write_curves_and_plots(report, dir);
}

} // namespace implang
