// SPDX-License-Identifier: Apache-2.0
#include "bseg/metrics.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace bseg::metrics {

using nlohmann::json;

ConfusionCounts& ConfusionCounts::operator+=(const ConfusionCounts& o) {
    for (auto [a, b] : {std::pair{&building, &o.building}, std::pair{&background, &o.background}}) {
        a->tp += b->tp;
        a->fp += b->fp;
        a->fn += b->fn;
        a->tn += b->tn;
    }
    return *this;
}

ConfusionCounts operator+(ConfusionCounts a, const ConfusionCounts& b) { return a += b; }

void accumulate(ConfusionCounts& counts, std::span<const std::uint8_t> pred,
                std::span<const std::uint8_t> gt) {
    if (pred.size() != gt.size()) {
        throw std::invalid_argument("accumulate: prediction has " + std::to_string(pred.size()) +
                                    " pixels, ground truth has " + std::to_string(gt.size()));
    }
    std::uint64_t tally[2][2] = {{0, 0}, {0, 0}};  // [pred][gt]
    for (std::size_t i = 0; i < pred.size(); ++i) ++tally[pred[i] != 0][gt[i] != 0];
    counts.building.tp += tally[1][1];
    counts.building.fp += tally[1][0];
    counts.building.fn += tally[0][1];
    counts.building.tn += tally[0][0];
    counts.background.tp += tally[0][0];
    counts.background.fp += tally[0][1];
    counts.background.fn += tally[1][0];
    counts.background.tn += tally[1][1];
}

ConfusionCounts count(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt) {
    ConfusionCounts c;
    accumulate(c, pred, gt);
    return c;
}

std::vector<std::uint8_t> binarize(std::span<const float> probs, double threshold) {
    std::vector<std::uint8_t> out(probs.size());
    for (std::size_t i = 0; i < probs.size(); ++i) out[i] = probs[i] >= threshold ? 1 : 0;
    return out;
}

double iou(const ClassCounts& c) {
    const std::uint64_t uni = c.tp + c.fp + c.fn;
    if (uni == 0) return 1.0;
    return static_cast<double>(c.tp) / static_cast<double>(uni);
}

double miou(const ConfusionCounts& counts) {
    return (iou(counts.building) + iou(counts.background)) / 2.0;
}

std::string to_string(Aggregation a) { return a == Aggregation::micro ? "micro" : "macro"; }

Aggregation aggregation_from_string(const std::string& name) {
    if (name == "micro") return Aggregation::micro;
    if (name == "macro") return Aggregation::macro;
    throw std::invalid_argument("unknown aggregation '" + name + "' (expected micro or macro)");
}

namespace {

bool vacuous(const ClassCounts& c) { return c.tp + c.fp + c.fn == 0; }

json class_json(const ClassCounts& c) {
    return json{{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}, {"tn", c.tn}};
}

ClassCounts class_from_json(const json& j) {
    return {j.at("tp").get<std::uint64_t>(), j.at("fp").get<std::uint64_t>(),
            j.at("fn").get<std::uint64_t>(), j.at("tn").get<std::uint64_t>()};
}

void finish_mean(MetricReport& r) {
    double sum = 0.0;
    int n = 0;
    if (r.building_in_mean) sum += r.iou_building, ++n;
    if (r.background_in_mean) sum += r.iou_background, ++n;
    r.miou = n == 0 ? 1.0 : sum / n;
}

}  // namespace

std::string fingerprint(const std::string& config_hash, const MetricOptions& options) {
    std::ostringstream os;
    os << (config_hash.empty() ? "unconfigured" : config_hash) << ";agg=" << to_string(options.aggregation)
       << ";threshold=" << options.threshold
       << ";vacuous=" << (options.exclude_vacuous ? "exclude" : "one");
    return os.str();
}

MetricReport make_report(const ConfusionCounts& counts, const MetricOptions& options,
                         const std::string& config_hash) {
    MetricReport r;
    r.counts = counts;
    r.options = options;
    r.options.aggregation = Aggregation::micro;
    r.pixels = counts.building.total();
    r.iou_building = iou(counts.building);
    r.iou_background = iou(counts.background);
    if (options.exclude_vacuous) {
        r.building_in_mean = !vacuous(counts.building);
        r.background_in_mean = !vacuous(counts.background);
    }
    finish_mean(r);
    r.fingerprint = fingerprint(config_hash, r.options);
    return r;
}

void MetricAccumulator::add(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt) {
    add_counts(count(pred, gt));
}

void MetricAccumulator::add_probabilities(std::span<const float> probs,
                                          std::span<const std::uint8_t> gt) {
    const auto pred = binarize(probs, options_.threshold);
    add(pred, gt);
}

void MetricAccumulator::add_counts(const ConfusionCounts& counts) {
    totals_ += counts;
    per_image_.push_back(counts);
}

void MetricAccumulator::merge(const MetricAccumulator& other) {
    totals_ += other.totals_;
    per_image_.insert(per_image_.end(), other.per_image_.begin(), other.per_image_.end());
}

MetricReport MetricAccumulator::report(const std::string& config_hash) const {
    if (options_.aggregation == Aggregation::micro) {
        MetricReport r = make_report(totals_, options_, config_hash);
        r.images = per_image_.size();
        return r;
    }
    MetricReport r;
    r.counts = totals_;
    r.options = options_;
    r.pixels = totals_.building.total();
    r.images = per_image_.size();
    auto class_mean = [&](auto member, bool& included) {
        double sum = 0.0;
        std::size_t n = 0;
        for (const auto& c : per_image_) {
            const ClassCounts& cc = c.*member;
            if (options_.exclude_vacuous && vacuous(cc)) continue;
            sum += iou(cc);
            ++n;
        }
        included = n > 0;
        return n == 0 ? 1.0 : sum / static_cast<double>(n);
    };
    r.iou_building = class_mean(&ConfusionCounts::building, r.building_in_mean);
    r.iou_background = class_mean(&ConfusionCounts::background, r.background_in_mean);
    finish_mean(r);
    r.fingerprint = fingerprint(config_hash, options_);
    return r;
}

json MetricReport::to_json() const {
    return json{{"iou", {{"building", iou_building}, {"background", iou_background}}},
                {"miou", miou},
                {"classes_in_mean", {{"building", building_in_mean}, {"background", background_in_mean}}},
                {"counts", {{"building", class_json(counts.building)},
                            {"background", class_json(counts.background)}}},
                {"pixels", pixels},
                {"images", images},
                {"threshold", options.threshold},
                {"aggregation", to_string(options.aggregation)},
                {"exclude_vacuous", options.exclude_vacuous},
                {"fingerprint", fingerprint}};
}

MetricReport MetricReport::from_json(const json& j) {
    MetricReport r;
    r.iou_building = j.at("iou").at("building").get<double>();
    r.iou_background = j.at("iou").at("background").get<double>();
    r.miou = j.at("miou").get<double>();
    if (j.contains("classes_in_mean")) {
        r.building_in_mean = j["classes_in_mean"].value("building", true);
        r.background_in_mean = j["classes_in_mean"].value("background", true);
    }
    r.counts.building = class_from_json(j.at("counts").at("building"));
    r.counts.background = class_from_json(j.at("counts").at("background"));
    r.pixels = j.value("pixels", r.counts.building.total());
    r.images = j.value("images", std::uint64_t{0});
    r.options.threshold = j.value("threshold", 0.5);
    r.options.aggregation = aggregation_from_string(j.value("aggregation", std::string("micro")));
    r.options.exclude_vacuous = j.value("exclude_vacuous", false);
    r.fingerprint = j.value("fingerprint", std::string());
    return r;
}

double implied_background_iou(double building_iou, double miou) {
    return 2.0 * miou - building_iou;
}

std::vector<std::string> check_report(const MetricReport& r, double tolerance) {
    std::vector<std::string> issues;
    auto in_unit = [&](double v, const char* name) {
        if (!(v >= 0.0 && v <= 1.0)) issues.push_back(std::string(name) + " outside [0, 1]");
    };
    in_unit(r.iou_building, "building iou");
    in_unit(r.iou_background, "background iou");
    in_unit(r.miou, "miou");

    double sum = 0.0;
    int n = 0;
    if (r.building_in_mean) sum += r.iou_building, ++n;
    if (r.background_in_mean) sum += r.iou_background, ++n;
    const double mean = n == 0 ? 1.0 : sum / n;
    if (std::abs(r.miou - mean) > tolerance) {
        std::ostringstream os;
        os.precision(17);
        os << "miou " << r.miou << " differs from the class mean " << mean;
        issues.push_back(os.str());
    }

    const ClassCounts& b = r.counts.building;
    const ClassCounts& g = r.counts.background;
    if (b.tp != g.tn || b.tn != g.tp || b.fp != g.fn || b.fn != g.fp) {
        issues.push_back("building and background counts are not mirror images");
    }
    if (b.total() != g.total() || b.total() != r.pixels) {
        issues.push_back("class count totals do not match the pixel total");
    }
    if (r.options.aggregation == Aggregation::micro) {
        if (std::abs(r.iou_building - iou(b)) > tolerance) {
            issues.push_back("building iou does not follow from its counts");
        }
        if (std::abs(r.iou_background - iou(g)) > tolerance) {
            issues.push_back("background iou does not follow from its counts");
        }
    }
    return issues;
}

std::vector<std::string> check_report(const json& report, double tolerance) {
    try {
        return check_report(MetricReport::from_json(report), tolerance);
    } catch (const std::exception& e) {
        return {std::string("malformed report: ") + e.what()};
    }
}

}  // namespace bseg::metrics
