#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

namespace svtas {

struct Segment {
  int label = 0;
  std::size_t begin = 0;
  std::size_t end = 0;  // exclusive

  bool operator==(const Segment&) const = default;
};

using SegmentList = std::vector<Segment>;

// Maximal runs of equal labels.
SegmentList labels_to_segments(std::span<const int> labels);
std::vector<int> segments_to_labels(const SegmentList& segments);

// Percent of frames where pred == gt.
double frame_accuracy(std::span<const int> pred, std::span<const int> gt);

// 100 * (1 - Levenshtein(pred segment labels, gt segment labels) / max(|pred|, |gt|)).
double edit_score(std::span<const int> pred, std::span<const int> gt);

// Segmental F1 (0-100) at IoU threshold tau. Each predicted segment is
// matched to the same-label ground-truth segment with the highest IoU (first
// on ties); a true positive needs IoU >= tau and an unused ground truth.
double overlap_f1(std::span<const int> pred, std::span<const int> gt, double tau);

inline constexpr std::array<double, 3> kF1Thresholds{0.10, 0.25, 0.50};

struct MetricsReport {
  double acc = 0.0;
  double edit = 0.0;
  std::array<double, 3> f1{};  // at kF1Thresholds
  std::size_t videos = 0;
  std::size_t frames = 0;
};

struct EpisodeLabels {
  std::string id;
  std::vector<int> pred;
  std::vector<int> gt;
};

MetricsReport evaluate_video(std::span<const int> pred, std::span<const int> gt);

// Accuracy pooled over all frames; Edit and F1 averaged over videos.
MetricsReport evaluate_dataset(const std::vector<EpisodeLabels>& episodes);

// "label start end" per line.
std::string format_segments(const SegmentList& segments);
// Aligned text table with one row per report.
std::string format_report_table(const std::vector<std::pair<std::string, MetricsReport>>& rows);

}  // namespace svtas
