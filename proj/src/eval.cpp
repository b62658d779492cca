#include "zsd/eval.hpp"
#include "zsd/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

namespace zsd {

namespace {

// Indices ordered by descending score; equal scores keep input order.
template<typename Scores>
std::vector<std::size_t> rank_by_score(const Scores& scores, std::size_t n)
{
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores(a) > scores(b); });
    return order;
}

double mean_of(const std::vector<double>& values)
{
    if (values.empty()) {
        return 0.0;
    }
    return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

} // namespace

double iou(const Box& a, const Box& b)
{
    const double ix = std::max(0.0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
    const double iy = std::max(0.0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
    const double inter = ix * iy;
    const double uni = a.w * a.h + b.w * b.h - inter;
    if (uni <= 0.0) {
        return 0.0;
    }
    return std::clamp(inter / uni, 0.0, 1.0);
}

std::vector<Detection> nms(const std::vector<Detection>& dets, double threshold)
{
    const auto order = rank_by_score([&](std::size_t i) { return dets[i].score; }, dets.size());
    std::vector<Detection> kept;
    for (const auto i : order) {
        const bool suppressed = std::any_of(kept.begin(), kept.end(),
                                            [&](const Detection& k) { return iou(k.box, dets[i].box) > threshold; });
        if (!suppressed) {
            kept.push_back(dets[i]);
        }
    }
    return kept;
}

MatchResult match_detections(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts,
                             double iou_threshold)
{
    MatchResult result{std::vector<bool>(dets.size(), false), std::vector<bool>(gts.size(), false)};

    std::map<std::pair<std::string, ClassId>, std::vector<std::size_t>> gt_groups;
    for (std::size_t g = 0; g < gts.size(); ++g) {
        gt_groups[{gts[g].image_id, gts[g].label}].push_back(g);
    }
    const auto order = rank_by_score([&](std::size_t i) { return dets[i].score; }, dets.size());
    for (const auto i : order) {
        const auto it = gt_groups.find({dets[i].image_id, dets[i].label});
        if (it == gt_groups.end()) {
            continue;
        }
        double best = -1.0;
        std::size_t best_gt = 0;
        for (const auto g : it->second) {
            if (result.gt_matched[g]) {
                continue;
            }
            const double overlap = iou(dets[i].box, gts[g].box);
            if (overlap >= iou_threshold && overlap > best) {
                best = overlap;
                best_gt = g;
            }
        }
        if (best >= 0.0) {
            result.det_tp[i] = true;
            result.gt_matched[best_gt] = true;
        }
    }
    return result;
}

std::optional<double> average_precision(const std::vector<bool>& tp, const std::vector<double>& scores,
                                        std::size_t n_gt)
{
    if (tp.size() != scores.size()) {
        throw ValidationError("average_precision: flags and scores differ in length");
    }
    if (n_gt == 0) {
        return std::nullopt;
    }
    const auto order = rank_by_score([&](std::size_t i) { return scores[i]; }, scores.size());
    std::vector<double> precision;
    std::vector<double> recall;
    precision.reserve(order.size());
    recall.reserve(order.size());
    double hits = 0.0;
    for (std::size_t r = 0; r < order.size(); ++r) {
        hits += tp[order[r]] ? 1.0 : 0.0;
        precision.push_back(hits / static_cast<double>(r + 1));
        recall.push_back(hits / static_cast<double>(n_gt));
    }
    // Monotone envelope from the right.
    for (std::size_t r = precision.size(); r-- > 1;) {
        precision[r - 1] = std::max(precision[r - 1], precision[r]);
    }
    double ap = 0.0;
    double prev_recall = 0.0;
    for (std::size_t r = 0; r < precision.size(); ++r) {
        ap += (recall[r] - prev_recall) * precision[r];
        prev_recall = recall[r];
    }
    return ap;
}

double recall_at_k(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts, std::size_t k,
                   double iou_threshold, RecallPool pool)
{
    if (gts.empty()) {
        return 0.0;
    }
    std::map<std::pair<std::string, ClassId>, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < dets.size(); ++i) {
        const ClassId key_label = pool == RecallPool::PerClass ? dets[i].label : ClassId{-1};
        groups[{dets[i].image_id, key_label}].push_back(i);
    }
    std::vector<Detection> kept;
    for (auto& [key, members] : groups) {
        std::stable_sort(members.begin(), members.end(),
                         [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });
        for (std::size_t j = 0; j < std::min(k, members.size()); ++j) {
            kept.push_back(dets[members[j]]);
        }
    }
    const auto match = match_detections(kept, gts, iou_threshold);
    const auto matched = std::count(match.gt_matched.begin(), match.gt_matched.end(), true);
    return static_cast<double>(matched) / static_cast<double>(gts.size());
}

double harmonic_mean(double seen, double unseen)
{
    const double sum = seen + unseen;
    if (sum == 0.0) {
        return 0.0;
    }
    return 2.0 * seen * unseen / sum;
}

EvalReport evaluate(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts, const SplitSpec& split,
                    EvalMode mode, double iou_threshold, std::size_t k)
{
    if (gts.empty()) {
        throw ValidationError("evaluate: empty ground-truth set");
    }
    for (const auto& d : dets) {
        if (!split.contains(d.label)) {
            throw ValidationError("evaluate: detection label " + std::to_string(d.label) + " is not in the split");
        }
        if (!std::isfinite(d.score) || d.score < 0.0 || d.score > 1.0) {
            throw ValidationError("evaluate: detection score outside [0, 1]");
        }
    }

    auto keep_classes = [&](auto predicate) {
        std::vector<Detection> d_out;
        std::vector<GroundTruth> g_out;
        for (const auto& d : dets) {
            if (predicate(d.label)) {
                d_out.push_back(d);
            }
        }
        for (const auto& g : gts) {
            if (predicate(g.label)) {
                g_out.push_back(g);
            }
        }
        return std::make_pair(std::move(d_out), std::move(g_out));
    };

    auto class_aps = [&](const std::vector<Detection>& d_in, const std::vector<GroundTruth>& g_in,
                         const std::vector<ClassId>& classes, EvalReport& report) {
        const auto match = match_detections(d_in, g_in, iou_threshold);
        std::vector<double> aps;
        for (const auto c : classes) {
            std::vector<bool> flags;
            std::vector<double> scores;
            for (std::size_t i = 0; i < d_in.size(); ++i) {
                if (d_in[i].label == c) {
                    flags.push_back(match.det_tp[i]);
                    scores.push_back(d_in[i].score);
                }
            }
            const auto n_gt = static_cast<std::size_t>(
                std::count_if(g_in.begin(), g_in.end(), [c](const GroundTruth& g) { return g.label == c; }));
            if (const auto ap = average_precision(flags, scores, n_gt)) {
                report.per_class_ap[c] = *ap;
                aps.push_back(*ap);
            }
        }
        return mean_of(aps);
    };

    EvalReport report;
    report.iou_threshold = iou_threshold;
    if (mode == EvalMode::Zsd) {
        const auto [d_u, g_u] = keep_classes([&](ClassId c) { return split.is_unseen(c); });
        if (g_u.empty()) {
            throw ValidationError("evaluate: no unseen-class ground truth");
        }
        report.map_zsd = class_aps(d_u, g_u, split.unseen, report);
        report.recall100_zsd = recall_at_k(d_u, g_u, k, iou_threshold);
    } else {
        const auto [d_s, g_s] = keep_classes([&](ClassId c) { return split.is_seen(c); });
        const auto [d_u, g_u] = keep_classes([&](ClassId c) { return split.is_unseen(c); });
        report.gzsd_seen_map = class_aps(d_s, g_s, split.seen, report);
        report.gzsd_unseen_map = class_aps(d_u, g_u, split.unseen, report);
        report.gzsd_hm = harmonic_mean(report.gzsd_seen_map, report.gzsd_unseen_map);
    }
    return report;
}

std::vector<GroundTruth> ground_truth_from(const FeatureSet& objects)
{
    std::vector<GroundTruth> out;
    out.reserve(objects.size());
    for (const auto& r : objects.records) {
        out.push_back({r.image_id, r.box, r.label});
    }
    return out;
}

nlohmann::json report_to_json(const EvalReport& report)
{
    nlohmann::json per_class = nlohmann::json::object();
    for (const auto& [c, ap] : report.per_class_ap) {
        per_class[std::to_string(c)] = ap;
    }
    return {
        {"zsd", {{"map", report.map_zsd}, {"recall100", report.recall100_zsd}}},
        {"gzsd", {{"seen", report.gzsd_seen_map}, {"unseen", report.gzsd_unseen_map}, {"hm", report.gzsd_hm}}},
        {"per_class_ap", per_class},
        {"iou_threshold", report.iou_threshold},
    };
}

void save_report(const EvalReport& report, const std::filesystem::path& path)
{
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw ValidationError("cannot write " + path.string());
    }
    out << report_to_json(report).dump(2) << '\n';
}

void save_detections(const std::vector<Detection>& dets, const std::filesystem::path& path)
{
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw ValidationError("cannot write " + path.string());
    }
    out << "image_id,x,y,w,h,label,score\n";
    for (const auto& d : dets) {
        out << d.image_id << ',' << format_real(d.box.x) << ',' << format_real(d.box.y) << ','
            << format_real(d.box.w) << ',' << format_real(d.box.h) << ',' << d.label << ','
            << format_real(d.score) << '\n';
    }
}

std::vector<Detection> load_detections(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw IngestError(path.string(), 0, "cannot open file");
    }
    std::string line;
    std::size_t line_no = 0;
    std::vector<Detection> out;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        if (line_no == 1) {
            if (line != "image_id,x,y,w,h,label,score") {
                throw IngestError(path.string(), 1, "header must be image_id,x,y,w,h,label,score");
            }
            continue;
        }
        std::stringstream ss(line);
        std::string field;
        std::vector<std::string> fields;
        while (std::getline(ss, field, ',')) {
            fields.push_back(field);
        }
        if (fields.size() != 7) {
            throw IngestError(path.string(), line_no, "expected 7 fields");
        }
        try {
            Detection d;
            d.image_id = fields[0];
            d.box = {std::stod(fields[1]), std::stod(fields[2]), std::stod(fields[3]), std::stod(fields[4])};
            d.label = std::stoi(fields[5]);
            d.score = std::stod(fields[6]);
            if (d.box.w <= 0.0 || d.box.h <= 0.0) {
                throw IngestError(path.string(), line_no, "box width and height must be positive");
            }
            out.push_back(std::move(d));
        } catch (const std::logic_error&) {
            throw IngestError(path.string(), line_no, "malformed number");
        }
    }
    return out;
}

} // namespace zsd
