#ifndef ZSD_EVAL_HPP
#define ZSD_EVAL_HPP

#include "zsd/dataio.hpp"
#include "zsd/types.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace zsd {

struct Detection {
    std::string image_id;
    Box box;
    ClassId label = 0;
    double score = 0.0;
};

struct GroundTruth {
    std::string image_id;
    Box box;
    ClassId label = 0;
};

enum class EvalMode { Zsd, Gzsd };

struct EvalReport {
    std::map<ClassId, double> per_class_ap;
    double map_zsd = 0.0;
    double recall100_zsd = 0.0;
    double gzsd_seen_map = 0.0;
    double gzsd_unseen_map = 0.0;
    double gzsd_hm = 0.0;
    double iou_threshold = 0.5;

    friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

[[nodiscard]] double iou(const Box& a, const Box& b);

// Greedy suppression within one image and one class. Output is ordered by
// descending score, ties by input order.
[[nodiscard]] std::vector<Detection> nms(const std::vector<Detection>& dets, double threshold);

struct MatchResult {
    std::vector<bool> det_tp; // parallel to the detections argument
    std::vector<bool> gt_matched; // parallel to the ground-truth argument
};

// Per (image, class): detections in descending score order take the unmatched
// ground truth with the highest IoU at or above the threshold.
[[nodiscard]] MatchResult match_detections(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts,
                                           double iou_threshold);

// All-point interpolated AP over the score-ranked sequence. Empty when
// n_gt is zero (the class is then excluded from mAP).
[[nodiscard]] std::optional<double> average_precision(const std::vector<bool>& tp, const std::vector<double>& scores,
                                                      std::size_t n_gt);

enum class RecallPool { PerImage, PerClass };

[[nodiscard]] double recall_at_k(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts,
                                 std::size_t k, double iou_threshold, RecallPool pool = RecallPool::PerImage);

[[nodiscard]] double harmonic_mean(double seen, double unseen);

// ZSD fills map_zsd and recall100_zsd; GZSD fills the seen/unseen/hm triple.
// per_class_ap holds the APs of the classes scored in that mode.
[[nodiscard]] EvalReport evaluate(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts,
                                  const SplitSpec& split, EvalMode mode, double iou_threshold = 0.5,
                                  std::size_t k = 100);

std::vector<GroundTruth> ground_truth_from(const FeatureSet& objects);

nlohmann::json report_to_json(const EvalReport& report);
void save_report(const EvalReport& report, const std::filesystem::path& path);

void save_detections(const std::vector<Detection>& dets, const std::filesystem::path& path);
std::vector<Detection> load_detections(const std::filesystem::path& path);

} // namespace zsd

#endif // ZSD_EVAL_HPP
