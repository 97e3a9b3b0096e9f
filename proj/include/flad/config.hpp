#pragma once

// Experiment configuration and its strict JSON schema. Unknown keys are
// rejected so that typos surface as errors naming the offending path.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "flad/data.hpp"
#include "flad/detection.hpp"
#include "flad/error.hpp"
#include "flad/federation.hpp"

namespace flad {

struct SyntheticSource {
    std::size_t k = 2;
    std::size_t per_class = 300;
    std::size_t d_in = 16;
    double class_sep = 0.8;
    double std_dev = 0.1;
};

struct MnistSource {
    std::string images_path;
    std::string labels_path;
    std::size_t subset_n = 2000;
};

using DataSource = std::variant<SyntheticSource, MnistSource>;

struct ExperimentConfig {
    DataSource dataset = SyntheticSource{};
    PartitionScheme partition = IidScheme{};
    PoisonSpec poison;
    RoundConfig federation;  // sens, seed and detector options are filled from the sections below
    std::vector<std::size_t> hidden;  // classifier hidden layers; empty = dataset default
    std::size_t pca_rank = 0;          // 0 = autoencoder bottleneck size
    std::size_t reference_m = 256;
    double test_fraction = 0.5;
    std::string output_dir = "out";
    std::uint64_t seed = 0;
};

/// The desk-scale poisoned experiment used throughout the tests and README.
inline ExperimentConfig canonical_config() {
    ExperimentConfig c;
    c.dataset = SyntheticSource{2, 300, 16, 0.8, 0.1};
    c.partition = IidScheme{};
    c.poison.kind = LabelFlip{0};
    c.poison.malicious_clients = {0, 1, 2};
    c.poison.poison_fraction = 1.0;
    c.federation.N = 10;
    c.federation.R = 20;
    c.federation.lr = 0.001;
    c.federation.bs = 64;
    c.federation.local_epochs = 1;
    c.federation.sens = Sensitivity::uniform(2.0);
    c.reference_m = 256;
    c.test_fraction = 0.5;
    c.seed = 0;
    return c;
}

namespace detail {

using json = nlohmann::json;

// Reads typed fields from a JSON object, remembering which keys were used so
// that leftovers can be reported.
class FieldReader {
public:
    FieldReader(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
        if (!obj_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
    }

    std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    bool has(const std::string& key) const { return obj_.contains(key); }

    const json& raw(const std::string& key) {
        seen_.insert(key);
        return obj_.at(key);
    }

    template <typename T>
    void read(const std::string& key, T& out) {
        if (!obj_.contains(key)) return;
        seen_.insert(key);
        const json& v = obj_.at(key);
        try {
            if constexpr (std::is_same_v<T, bool>) {
                if (!v.is_boolean()) throw ConfigError(at(key), "expected a boolean");
                out = v.get<bool>();
            } else if constexpr (std::is_integral_v<T>) {
                if (!v.is_number_integer()) throw ConfigError(at(key), "expected an integer");
                if (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0)
                    throw ConfigError(at(key), "must be non-negative");
                out = v.get<T>();
            } else if constexpr (std::is_floating_point_v<T>) {
                if (!v.is_number()) throw ConfigError(at(key), "expected a number");
                out = v.get<T>();
            } else if constexpr (std::is_same_v<T, std::string>) {
                if (!v.is_string()) throw ConfigError(at(key), "expected a string");
                out = v.get<std::string>();
            } else {
                out = v.get<T>();
            }
        } catch (const json::exception& e) {
            throw ConfigError(at(key), e.what());
        }
    }

    template <typename T>
    void require(const std::string& key, T& out) {
        if (!obj_.contains(key)) throw ConfigError(at(key), "missing required field");
        read(key, out);
    }

    std::string choice(const std::string& key, std::initializer_list<const char*> options, std::string fallback) {
        std::string v = std::move(fallback);
        read(key, v);
        for (const char* o : options)
            if (v == o) return v;
        std::string msg = "unknown value '" + v + "' (expected one of:";
        for (const char* o : options) msg += std::string(" ") + o;
        throw ConfigError(at(key), msg + ")");
    }

    void finish() const {
        for (const auto& [key, _] : obj_.items())
            if (!seen_.count(key)) throw ConfigError(at(key), "unknown field");
    }

private:
    const json& obj_;
    std::string path_;
    std::set<std::string> seen_;
};

// Sensitivity value: a non-negative number, or the string "disabled".
inline double read_sensitivity(FieldReader& r, const std::string& key, double fallback) {
    if (!r.has(key)) return fallback;
    const json& v = r.raw(key);
    if (v.is_string() && v.get<std::string>() == "disabled") return Sensitivity::off;
    if (!v.is_number()) throw ConfigError(r.at(key), "expected a number or \"disabled\"");
    const double x = v.get<double>();
    if (!(x >= 0.0)) throw ConfigError(r.at(key), "must be non-negative");
    return x;
}

}  // namespace detail

inline ExperimentConfig parse_config(const nlohmann::json& root) {
    using detail::FieldReader;
    ExperimentConfig cfg;
    FieldReader top(root, "");

    // dataset
    {
        if (!top.has("dataset")) throw ConfigError("dataset", "missing required field");
        FieldReader r(top.raw("dataset"), "dataset");
        const auto kind = r.choice("kind", {"synthetic", "mnist"}, "synthetic");
        if (kind == "synthetic") {
            SyntheticSource s;
            r.read("k", s.k);
            r.read("per_class", s.per_class);
            r.read("d_in", s.d_in);
            r.read("class_sep", s.class_sep);
            r.read("std", s.std_dev);
            if (s.k < 2) throw ConfigError("dataset.k", "must be >= 2");
            if (s.per_class < 1) throw ConfigError("dataset.per_class", "must be >= 1");
            if (s.d_in < 2) throw ConfigError("dataset.d_in", "must be >= 2");
            if (!(s.std_dev >= 0.0)) throw ConfigError("dataset.std", "must be non-negative");
            cfg.dataset = s;
        } else {
            MnistSource m;
            r.require("images_path", m.images_path);
            r.require("labels_path", m.labels_path);
            r.read("subset_n", m.subset_n);
            cfg.dataset = m;
        }
        r.finish();
    }

    // partition
    if (top.has("partition")) {
        FieldReader r(top.raw("partition"), "partition");
        const auto scheme = r.choice("scheme", {"iid", "dirichlet"}, "iid");
        if (scheme == "dirichlet") {
            DirichletScheme d;
            r.read("alpha", d.alpha);
            if (!(d.alpha > 0.0)) throw ConfigError("partition.alpha", "must be positive");
            cfg.partition = d;
        }
        r.finish();
    }

    // federation (read before poison so client ids can be range-checked)
    {
        if (!top.has("federation")) throw ConfigError("federation", "missing required field");
        FieldReader r(top.raw("federation"), "federation");
        auto& f = cfg.federation;
        r.require("N", f.N);
        r.require("R", f.R);
        r.read("lr", f.lr);
        r.read("bs", f.bs);
        r.read("local_epochs", f.local_epochs);
        f.lr_schedule = r.choice("lr_schedule", {"constant", "inv_sqrt_T"}, "constant") == "constant"
                            ? LrSchedule::constant
                            : LrSchedule::inv_sqrt_T;
        f.optimizer = r.choice("optimizer", {"adam", "sgd"}, "adam") == "adam" ? OptimizerKind::adam : OptimizerKind::sgd;
        r.finish();
        if (f.N < 1) throw ConfigError("federation.N", "must be >= 1");
        if (f.R < 1) throw ConfigError("federation.R", "must be >= 1");
        if (!(f.lr > 0.0)) throw ConfigError("federation.lr", "must be positive");
        if (f.bs < 1) throw ConfigError("federation.bs", "must be >= 1");
    }

    // poison
    if (top.has("poison")) {
        FieldReader r(top.raw("poison"), "poison");
        const auto kind = r.choice("kind", {"none", "label_flip", "feature_noise"}, "none");
        auto& p = cfg.poison;
        if (kind == "label_flip") {
            LabelFlip lf;
            r.read("target_class", lf.target_class);
            p.kind = lf;
        } else if (kind == "feature_noise") {
            FeatureNoise fn;
            r.read("std", fn.std_dev);
            if (!(fn.std_dev >= 0.0)) throw ConfigError("poison.std", "must be non-negative");
            p.kind = fn;
        } else {
            p.kind = NoPoison{};
        }
        std::vector<std::size_t> ids;
        r.read("malicious_clients", ids);
        for (auto id : ids)
            if (id >= cfg.federation.N)
                throw ConfigError("poison.malicious_clients", "client id " + std::to_string(id) + " >= federation.N");
        p.malicious_clients = {ids.begin(), ids.end()};
        r.read("poison_fraction", p.poison_fraction);
        if (!(p.poison_fraction >= 0.0 && p.poison_fraction <= 1.0))
            throw ConfigError("poison.poison_fraction", "must lie in [0,1]");
        r.finish();
    }
    if (const auto* lf = std::get_if<LabelFlip>(&cfg.poison.kind)) {
        const auto* syn = std::get_if<SyntheticSource>(&cfg.dataset);
        const std::size_t k = syn ? syn->k : 10;
        if (lf->target_class >= k) throw ConfigError("poison.target_class", "must be < number of classes");
    }

    // detection
    if (top.has("detection")) {
        FieldReader r(top.raw("detection"), "detection");
        auto& f = cfg.federation;
        const double sf = detail::read_sensitivity(r, "sf", 2.0);
        f.sens.alpha = detail::read_sensitivity(r, "alpha", sf);
        f.sens.beta = detail::read_sensitivity(r, "beta", sf);
        f.detector.combine = r.choice("combine", {"or", "and"}, "or") == "or" ? Combine::either : Combine::both;
        f.detector.ae_mode =
            r.choice("ae_mode", {"server_ref", "per_client"}, "server_ref") == "server_ref" ? AeMode::server_ref
                                                                                           : AeMode::per_client;
        f.detector.grad_score = r.choice("grad_score", {"deviation", "raw_norm"}, "deviation") == "deviation"
                                    ? GradScoreKind::deviation
                                    : GradScoreKind::raw_norm;
        r.read("robust_stats", f.detector.robust_stats);
        r.read("ae_epochs", f.ae_epochs);
        r.read("calibration_chunk", f.calibration_chunk);
        r.read("calibration_fraction", f.calibration_fraction);
        if (!(f.calibration_fraction > 0.0 && f.calibration_fraction < 1.0))
            throw ConfigError("detection.calibration_fraction", "must lie in (0,1)");
        r.read("pca_rank", cfg.pca_rank);
        r.finish();
    }

    if (top.has("model")) {
        FieldReader r(top.raw("model"), "model");
        r.read("hidden", cfg.hidden);
        for (auto h : cfg.hidden)
            if (h == 0) throw ConfigError("model.hidden", "layer sizes must be positive");
        r.finish();
    }

    if (top.has("reference")) {
        FieldReader r(top.raw("reference"), "reference");
        r.read("m", cfg.reference_m);
        if (cfg.reference_m < 2) throw ConfigError("reference.m", "must be >= 2");
        r.finish();
    }

    if (top.has("eval")) {
        FieldReader r(top.raw("eval"), "eval");
        r.read("test_fraction", cfg.test_fraction);
        if (!(cfg.test_fraction > 0.0 && cfg.test_fraction < 1.0))
            throw ConfigError("eval.test_fraction", "must lie in (0,1)");
        r.finish();
    }

    top.read("output_dir", cfg.output_dir);
    top.read("seed", cfg.seed);
    top.finish();
    cfg.federation.seed = cfg.seed;
    return cfg;
}

/// Parses JSON text; syntax errors report the line and column.
inline ExperimentConfig parse_config_text(const std::string& text) {
    nlohmann::json root;
    try {
        root = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        std::size_t line = 1, col = 1;
        for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
            if (text[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        throw ConfigError("line " + std::to_string(line) + ", column " + std::to_string(col), "JSON syntax error");
    }
    return parse_config(root);
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path.string(), "cannot open config file");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

namespace detail {

inline nlohmann::json sensitivity_json(double x) {
    if (std::isinf(x)) return "disabled";
    return x;
}

}  // namespace detail

/// Serialises a config in the schema accepted by parse_config.
inline nlohmann::json to_json(const ExperimentConfig& cfg) {
    nlohmann::json j;
    if (const auto* s = std::get_if<SyntheticSource>(&cfg.dataset)) {
        j["dataset"] = {{"kind", "synthetic"}, {"k", s->k},         {"per_class", s->per_class},
                        {"d_in", s->d_in},     {"class_sep", s->class_sep}, {"std", s->std_dev}};
    } else {
        const auto& m = std::get<MnistSource>(cfg.dataset);
        j["dataset"] = {{"kind", "mnist"},
                        {"images_path", m.images_path},
                        {"labels_path", m.labels_path},
                        {"subset_n", m.subset_n}};
    }
    if (const auto* d = std::get_if<DirichletScheme>(&cfg.partition))
        j["partition"] = {{"scheme", "dirichlet"}, {"alpha", d->alpha}};
    else
        j["partition"] = {{"scheme", "iid"}};

    nlohmann::json p;
    if (const auto* lf = std::get_if<LabelFlip>(&cfg.poison.kind)) {
        p["kind"] = "label_flip";
        p["target_class"] = lf->target_class;
    } else if (const auto* fn = std::get_if<FeatureNoise>(&cfg.poison.kind)) {
        p["kind"] = "feature_noise";
        p["std"] = fn->std_dev;
    } else {
        p["kind"] = "none";
    }
    p["malicious_clients"] = std::vector<std::size_t>(cfg.poison.malicious_clients.begin(), cfg.poison.malicious_clients.end());
    p["poison_fraction"] = cfg.poison.poison_fraction;
    j["poison"] = p;

    const auto& f = cfg.federation;
    j["federation"] = {{"N", f.N},
                       {"R", f.R},
                       {"lr", f.lr},
                       {"bs", f.bs},
                       {"local_epochs", f.local_epochs},
                       {"lr_schedule", f.lr_schedule == LrSchedule::constant ? "constant" : "inv_sqrt_T"},
                       {"optimizer", f.optimizer == OptimizerKind::adam ? "adam" : "sgd"}};
    j["detection"] = {{"alpha", detail::sensitivity_json(f.sens.alpha)},
                      {"beta", detail::sensitivity_json(f.sens.beta)},
                      {"combine", f.detector.combine == Combine::either ? "or" : "and"},
                      {"ae_mode", f.detector.ae_mode == AeMode::server_ref ? "server_ref" : "per_client"},
                      {"grad_score", f.detector.grad_score == GradScoreKind::deviation ? "deviation" : "raw_norm"},
                      {"robust_stats", f.detector.robust_stats},
                      {"ae_epochs", f.ae_epochs},
                      {"calibration_chunk", f.calibration_chunk},
                      {"calibration_fraction", f.calibration_fraction},
                      {"pca_rank", cfg.pca_rank}};
    if (!cfg.hidden.empty()) j["model"] = {{"hidden", cfg.hidden}};
    j["reference"] = {{"m", cfg.reference_m}};
    j["eval"] = {{"test_fraction", cfg.test_fraction}};
    j["output_dir"] = cfg.output_dir;
    j["seed"] = cfg.seed;
    return j;
}

}  // namespace flad
