// SPDX-License-Identifier: Apache-2.0
#include "bseg/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "bseg/util/hash.hpp"

namespace bseg::config {

using nlohmann::json;

namespace {

std::string format(const std::string& field, int line, const std::string& message) {
    std::string out = "config error";
    if (line > 0) out += " at line " + std::to_string(line);
    if (!field.empty()) out += " in field '" + field + "'";
    return out + ": " + message;
}

// Typed access to one JSON object with field-path diagnostics.
class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_, 0, "expected an object");
    }

    [[nodiscard]] std::string field(const std::string& key) const {
        return path_.empty() ? key : path_ + "." + key;
    }
    [[nodiscard]] bool has(const std::string& key) const { return j_.contains(key); }
    [[nodiscard]] const json& raw(const std::string& key) const { return j_.at(key); }

    template <typename T>
    T get(const std::string& key, T fallback) const {
        if (!j_.contains(key)) return fallback;
        try {
            return j_.at(key).get<T>();
        } catch (const json::exception& e) {
            throw ConfigError(field(key), 0, "wrong type (" + std::string(j_.at(key).type_name()) + ")");
        }
    }

    void allow(std::initializer_list<const char*> keys) const {
        const std::set<std::string> ok(keys.begin(), keys.end());
        for (const auto& [k, _] : j_.items()) {
            if (!ok.count(k)) throw ConfigError(field(k), 0, "unknown field");
        }
    }

private:
    const json& j_;
    std::string path_;
};

// Runs `f`, turning std::invalid_argument into a ConfigError on `field`.
template <typename F>
auto guarded(const std::string& field, F f) {
    try {
        return f();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(field, 0, e.what());
    }
}

LrSchedule schedule_from_string(const std::string& s) {
    if (s == "constant") return LrSchedule::constant;
    if (s == "cosine") return LrSchedule::cosine;
    throw std::invalid_argument("unknown lr_schedule '" + s + "' (expected constant or cosine)");
}

}  // namespace

ConfigError::ConfigError(std::string field, int line, const std::string& message)
    : std::runtime_error(format(field, line, message)), field_(std::move(field)), line_(line) {}

std::string to_string(LrSchedule s) { return s == LrSchedule::cosine ? "cosine" : "constant"; }

void validate(const TrainConfig& c) {
    if (c.batch_size < 1) throw ConfigError("trainer.batch_size", 0, "must be >= 1");
    if (!(c.learning_rate > 0.0)) throw ConfigError("trainer.learning_rate", 0, "must be > 0");
    if (c.max_epochs < 1) throw ConfigError("trainer.max_epochs", 0, "must be >= 1");
    if (!(c.beta1 >= 0.0 && c.beta1 < 1.0)) throw ConfigError("trainer.beta1", 0, "must lie in [0, 1)");
    if (!(c.beta2 >= 0.0 && c.beta2 < 1.0)) throw ConfigError("trainer.beta2", 0, "must lie in [0, 1)");
    if (!(c.epsilon > 0.0)) throw ConfigError("trainer.epsilon", 0, "must be > 0");
    if (!(c.weight_decay >= 0.0)) throw ConfigError("trainer.weight_decay", 0, "must be >= 0");
    if (c.selection_metric != "val_miou" && c.selection_metric != "val_iou_building") {
        throw ConfigError("trainer.selection_metric", 0, "must be val_miou or val_iou_building");
    }
    if (!(c.threshold >= 0.0 && c.threshold <= 1.0)) {
        throw ConfigError("trainer.threshold", 0, "must lie in [0, 1]");
    }
}

json to_json(const losses::LossConfig& c) {
    return json{{"kind", losses::to_string(c.kind)},
                {"alpha", c.alpha},
                {"beta", c.beta},
                {"gamma", c.gamma},
                {"epsilon", c.epsilon},
                {"weight_background", c.weight_background},
                {"weight_building", c.weight_building},
                {"per_image", c.per_image}};
}

losses::LossConfig loss_from_json(const json& j) {
    const Section s(j, "loss");
    s.allow({"kind", "alpha", "beta", "gamma", "epsilon", "weight_background", "weight_building", "per_image"});
    losses::LossConfig c;
    c.kind = guarded(s.field("kind"), [&] {
        return losses::loss_kind_from_string(s.get<std::string>("kind", losses::to_string(c.kind)));
    });
    c.alpha = s.get("alpha", c.alpha);
    c.beta = s.get("beta", c.beta);
    c.gamma = s.get("gamma", c.gamma);
    c.epsilon = s.get("epsilon", c.epsilon);
    c.weight_background = s.get("weight_background", c.weight_background);
    c.weight_building = s.get("weight_building", c.weight_building);
    c.per_image = s.get("per_image", c.per_image);
    try {
        losses::validate(c);
    } catch (const std::invalid_argument& e) {
        // Messages start with the dotted field name.
        const std::string msg = e.what();
        const auto sp = msg.find(' ');
        throw ConfigError(msg.substr(0, sp), 0, sp == std::string::npos ? msg : msg.substr(sp + 1));
    }
    return c;
}

json to_json(const TrainConfig& c) {
    return json{{"batch_size", c.batch_size},
                {"learning_rate", c.learning_rate},
                {"beta1", c.beta1},
                {"beta2", c.beta2},
                {"epsilon", c.epsilon},
                {"weight_decay", c.weight_decay},
                {"lr_schedule", to_string(c.lr_schedule)},
                {"max_epochs", c.max_epochs},
                {"seed", c.seed},
                {"selection_metric", c.selection_metric},
                {"threshold", c.threshold},
                {"drop_last", c.drop_last}};
}

TrainConfig train_config_from_json(const json& j) {
    const Section s(j, "trainer");
    s.allow({"batch_size", "learning_rate", "beta1", "beta2", "epsilon", "weight_decay", "lr_schedule",
             "max_epochs", "seed", "selection_metric", "threshold", "drop_last"});
    TrainConfig c;
    c.batch_size = s.get("batch_size", c.batch_size);
    c.learning_rate = s.get("learning_rate", c.learning_rate);
    c.beta1 = s.get("beta1", c.beta1);
    c.beta2 = s.get("beta2", c.beta2);
    c.epsilon = s.get("epsilon", c.epsilon);
    c.weight_decay = s.get("weight_decay", c.weight_decay);
    c.lr_schedule = guarded(s.field("lr_schedule"), [&] {
        return schedule_from_string(s.get<std::string>("lr_schedule", "constant"));
    });
    c.max_epochs = s.get("max_epochs", c.max_epochs);
    c.seed = s.get("seed", c.seed);
    c.selection_metric = s.get("selection_metric", c.selection_metric);
    c.threshold = s.get("threshold", c.threshold);
    c.drop_last = s.get("drop_last", c.drop_last);
    validate(c);
    return c;
}

json to_json(const ExperimentConfig& c) {
    json aug = augment::to_json(c.augmentation);
    aug["enabled"] = c.augment;
    return json{{"data", {{"manifest", c.data.manifest.generic_string()}, {"eval_split", c.data.eval_split}}},
                {"model", {{"encoder", models::to_json(c.model.encoder)},
                           {"decoder", models::to_json(c.model.decoder)}}},
                {"loss", to_json(c.loss)},
                {"augmentation", aug},
                {"tta", c.tta ? tta::to_json(*c.tta) : json(nullptr)},
                {"trainer", to_json(c.trainer)}};
}

ExperimentConfig experiment_from_json(const json& j, const std::filesystem::path& base) {
    const Section root(j, "");
    root.allow({"data", "model", "loss", "augmentation", "tta", "trainer"});
    ExperimentConfig c;

    if (!root.has("data")) throw ConfigError("data", 0, "missing section");
    const Section data(root.raw("data"), "data");
    data.allow({"manifest", "eval_split"});
    if (!data.has("manifest")) throw ConfigError("data.manifest", 0, "missing");
    std::filesystem::path manifest = data.get<std::string>("manifest", "");
    if (manifest.is_relative() && !base.empty()) manifest = base / manifest;
    c.data.manifest = manifest.lexically_normal();
    c.data.eval_split = data.get<std::string>("eval_split", "test");
    guarded("data.eval_split", [&] { return data::split_from_string(c.data.eval_split); });

    if (!root.has("model")) throw ConfigError("model", 0, "missing section");
    const Section model(root.raw("model"), "model");
    model.allow({"encoder", "width_multiplier", "decoder"});
    if (!model.has("encoder")) throw ConfigError("model.encoder", 0, "missing");
    c.model.encoder = guarded("model.encoder", [&] {
        const json& e = model.raw("encoder");
        if (e.is_string()) return models::encoder_by_name(e.get<std::string>(), model.get("width_multiplier", 1.0));
        if (model.has("width_multiplier")) {
            throw std::invalid_argument("width_multiplier goes inside an encoder object");
        }
        return models::encoder_from_json(e);
    });
    c.model.decoder = guarded("model.decoder", [&] {
        json d = model.has("decoder") ? model.raw("decoder") : json::object();
        if (d.is_string()) d = json{{"kind", d.get<std::string>()}};
        return models::decoder_from_json(d, c.model.encoder);
    });
    guarded("model", [&] {
        models::validate(c.model);
        return 0;
    });

    if (root.has("loss")) c.loss = loss_from_json(root.raw("loss"));

    if (root.has("augmentation")) {
        json a = root.raw("augmentation");
        if (!a.is_object()) throw ConfigError("augmentation", 0, "expected an object");
        c.augment = Section(a, "augmentation").get("enabled", true);
        a.erase("enabled");
        Section(a, "augmentation").allow({"ops", "apply_probability", "epoch_max", "ramp_floor"});
        c.augmentation = guarded("augmentation", [&] { return augment::policy_from_json(a); });
    }

    if (root.has("tta") && !root.raw("tta").is_null()) {
        const Section t(root.raw("tta"), "tta");
        t.allow({"preset", "flip", "rotation", "scale", "multiply", "merge", "threshold"});
        c.tta = guarded("tta", [&] { return tta::plan_from_json(root.raw("tta")); });
    }

    if (root.has("trainer")) c.trainer = train_config_from_json(root.raw("trainer"));
    return c;
}

int locate_field(const std::string& text, const std::string& dotted_field) {
    std::size_t pos = 0;
    std::size_t start = 0;
    while (start <= dotted_field.size()) {
        const std::size_t dot = dotted_field.find('.', start);
        const std::string key = dotted_field.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        const std::size_t hit = text.find("\"" + key + "\"", pos);
        if (hit == std::string::npos) break;
        pos = hit + key.size() + 2;
        if (dot == std::string::npos) {
            return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(hit), '\n'));
        }
        start = dot + 1;
    }
    return 0;
}

ExperimentConfig parse_experiment(const std::string& text, const std::filesystem::path& base) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        const std::size_t at = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
        const int line = 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(at), '\n'));
        throw ConfigError("", line, "malformed JSON");
    }
    try {
        return experiment_from_json(j, base);
    } catch (const ConfigError& e) {
        const int line = e.field().empty() ? 0 : locate_field(text, e.field());
        const std::string what = e.what();
        const std::string prefix = format(e.field(), 0, "");
        throw ConfigError(e.field(), line, what.substr(prefix.size()));
    }
}

ExperimentConfig load_experiment(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("", 0, "cannot read config file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_experiment(ss.str(), path.parent_path());
}

std::string config_hash(const ExperimentConfig& c) { return util::sha256_hex(to_json(c).dump()); }

}  // namespace bseg::config
