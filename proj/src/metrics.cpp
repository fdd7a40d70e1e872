#include "svtas/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "svtas/error.hpp"

namespace svtas {
namespace {

void require_same_length(const char* what, std::span<const int> pred, std::span<const int> gt) {
  if (pred.size() != gt.size())
    throw DataError(std::string(what) + ": prediction has " + std::to_string(pred.size()) + " frames, ground truth " +
                    std::to_string(gt.size()));
}

std::size_t levenshtein(const std::vector<int>& a, const std::vector<int>& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

std::vector<int> segment_labels(const SegmentList& segs) {
  std::vector<int> out;
  out.reserve(segs.size());
  for (const Segment& s : segs) out.push_back(s.label);
  return out;
}

}  // namespace

SegmentList labels_to_segments(std::span<const int> labels) {
  SegmentList segs;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (segs.empty() || segs.back().label != labels[i]) segs.push_back({labels[i], i, i + 1});
    else segs.back().end = i + 1;
  }
  return segs;
}

std::vector<int> segments_to_labels(const SegmentList& segments) {
  std::vector<int> out;
  for (const Segment& s : segments) out.insert(out.end(), s.end - s.begin, s.label);
  return out;
}

double frame_accuracy(std::span<const int> pred, std::span<const int> gt) {
  require_same_length("frame_accuracy", pred, gt);
  if (gt.empty()) throw DataError("frame_accuracy: empty sequence");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) hit += pred[i] == gt[i];
  return 100.0 * double(hit) / double(gt.size());
}

double edit_score(std::span<const int> pred, std::span<const int> gt) {
  require_same_length("edit_score", pred, gt);
  const auto p = segment_labels(labels_to_segments(pred));
  const auto g = segment_labels(labels_to_segments(gt));
  const std::size_t longest = std::max(p.size(), g.size());
  if (longest == 0) return 100.0;
  return (1.0 - double(levenshtein(p, g)) / double(longest)) * 100.0;
}

double overlap_f1(std::span<const int> pred, std::span<const int> gt, double tau) {
  require_same_length("overlap_f1", pred, gt);
  const SegmentList ps = labels_to_segments(pred);
  const SegmentList gs = labels_to_segments(gt);
  std::vector<bool> used(gs.size(), false);
  std::size_t tp = 0, fp = 0;
  for (const Segment& p : ps) {
    double best = 0.0;
    std::size_t best_idx = gs.size();
    for (std::size_t g = 0; g < gs.size(); ++g) {
      if (gs[g].label != p.label) continue;
      const std::size_t lo = std::max(p.begin, gs[g].begin), hi = std::min(p.end, gs[g].end);
      const double inter = hi > lo ? double(hi - lo) : 0.0;
      const double uni = double(std::max(p.end, gs[g].end) - std::min(p.begin, gs[g].begin));
      const double iou = inter / uni;
      if (best_idx == gs.size() || iou > best) {
        best = iou;
        best_idx = g;
      }
    }
    if (best_idx < gs.size() && best >= tau && !used[best_idx]) {
      ++tp;
      used[best_idx] = true;
    } else {
      ++fp;
    }
  }
  const std::size_t fn = gs.size() - tp;
  const double precision = tp + fp ? double(tp) / double(tp + fp) : 0.0;
  const double recall = tp + fn ? double(tp) / double(tp + fn) : 0.0;
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * (precision * recall) / (precision + recall) * 100.0;  // same rounding as the reference scorer
}

MetricsReport evaluate_video(std::span<const int> pred, std::span<const int> gt) {
  MetricsReport r;
  r.acc = frame_accuracy(pred, gt);
  r.edit = edit_score(pred, gt);
  for (std::size_t i = 0; i < kF1Thresholds.size(); ++i) r.f1[i] = overlap_f1(pred, gt, kF1Thresholds[i]);
  r.videos = 1;
  r.frames = gt.size();
  return r;
}

MetricsReport evaluate_dataset(const std::vector<EpisodeLabels>& episodes) {
  if (episodes.empty()) throw DataError("evaluate_dataset: no episodes");
  MetricsReport total;
  std::size_t hits = 0;
  for (const EpisodeLabels& e : episodes) {
    const MetricsReport r = evaluate_video(e.pred, e.gt);
    for (std::size_t i = 0; i < e.gt.size(); ++i) hits += e.pred[i] == e.gt[i];
    total.frames += e.gt.size();
    total.edit += r.edit;
    for (std::size_t i = 0; i < r.f1.size(); ++i) total.f1[i] += r.f1[i];
  }
  total.videos = episodes.size();
  total.acc = 100.0 * double(hits) / double(total.frames);
  total.edit /= double(total.videos);
  for (double& f : total.f1) f /= double(total.videos);
  return total;
}

std::string format_segments(const SegmentList& segments) {
  std::ostringstream os;
  for (const Segment& s : segments) os << s.label << ' ' << s.begin << ' ' << s.end << '\n';
  return os.str();
}

std::string format_report_table(const std::vector<std::pair<std::string, MetricsReport>>& rows) {
  std::size_t name_w = 5;
  for (const auto& [name, r] : rows) name_w = std::max(name_w, name.size());
  std::ostringstream os;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-*s %8s %8s %8s %8s %8s\n", int(name_w), "split", "Acc", "Edit", "F1@10",
                "F1@25", "F1@50");
  os << buf;
  for (const auto& [name, r] : rows) {
    std::snprintf(buf, sizeof buf, "%-*s %8.2f %8.2f %8.2f %8.2f %8.2f\n", int(name_w), name.c_str(), r.acc, r.edit,
                  r.f1[0], r.f1[1], r.f1[2]);
    os << buf;
  }
  return os.str();
}

}  // namespace svtas
