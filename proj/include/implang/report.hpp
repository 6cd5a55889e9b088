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

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "implang/models.hpp"
#include "implang/stats.hpp"
#include "implang/training.hpp"

namespace implang {

struct RunRecord
{
  std::string group;
  std::uint64_t seed = 0;
  std::string metrics_file;    // relative to the output directory
  std::string checkpoint_file; // relative to the output directory
  Evaluation heldout;
  MetricSeries series;
};

struct GroupResult
{
  std::string group;
  std::size_t vocab_size = 0;
  std::size_t train_sentences = 0;
  std::size_t heldout_sentences = 0;
  std::vector<RunRecord> runs;

  // Over the training series: mean of the last logged perplexity across
  // seeds, and the smallest perplexity logged by any seed.
  double final_perplexity = 0.0;
  double min_perplexity = 0.0;
  double heldout_perplexity = 0.0; // mean across seeds
  double mean_stabilized_loss = 0.0;
};

struct Comparison
{
  std::string baseline; // always "natural"
  std::string other;
  Metric metric = Metric::Loss;
  TTestResult test;

  std::string name() const; // "natural vs reversed (loss)"
};

struct LinearityGradient
{
  std::vector<std::pair<std::string, double>> ranking; // ascending mean stabilized loss
  bool parity_below_reversed = false;
};

struct RunReport
{
  std::string experiment;
  Architecture arch = Architecture::Transformer;
  std::uint64_t seed = 0;
  double window_fraction = 0.5;
  std::vector<GroupResult> groups;
  std::vector<Comparison> comparisons;

  const GroupResult& group(const std::string& name) const;
};

std::string to_string(Metric m);
Metric parse_metric(const std::string& s);

// Fills the per-group summary fields from the runs.
void summarize(GroupResult& g, double window_fraction);

// Ranking by mean stabilized loss, ties broken by group name. Throws
// InputError when the report holds fewer than two impossible groups.
LinearityGradient linearity_gradient_summary(const RunReport& report);

// "p<.001" below 0.001, otherwise "p=.223" (three decimals, no leading zero).
std::string format_p(double p);

// "p<.001, t(305.0)=-19.66, Cohen's d=-2.20"
std::string format_test(const TTestResult& r);

std::string report_json(const RunReport& report);
std::string report_text(const RunReport& report);

// Rebuilds a report from report.json, re-reading the metric files it names.
RunReport read_report(const std::filesystem::path& dir);

enum class ReportFormat { Json, Text };

// Writes report.json or report.txt, plus curves/ and plots/ in both cases.
void emit_report(const RunReport& report, ReportFormat format, const std::filesystem::path& dir);

} // namespace implang
