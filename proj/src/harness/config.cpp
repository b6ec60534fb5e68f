#include "noisy/harness/config.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

namespace noisy::harness {

using nlohmann::json;

namespace {

// Reads known keys from one JSON object and rejects everything else.
class Section {
public:
    Section(const json& doc, std::string path) : doc_(doc), path_(std::move(path)) {
        if (!doc_.is_object()) {
            throw std::invalid_argument("config: '" + path_ + "' must be an object");
        }
    }

    template <typename T>
    void read(const char* key, T& out) {
        seen_.insert(key);
        const auto it = doc_.find(key);
        if (it == doc_.end()) return;
        try {
            out = it->template get<T>();
        } catch (const json::exception&) {
            throw std::invalid_argument("config: '" + path_ + "." + key + "' has the wrong type");
        }
    }

    const json* child(const char* key) {
        seen_.insert(key);
        const auto it = doc_.find(key);
        return it == doc_.end() ? nullptr : &*it;
    }

    void finish() const {
        for (const auto& [key, value] : doc_.items()) {
            if (!seen_.count(key)) {
                throw std::invalid_argument("config: unknown key '" + path_ + "." + key + "'");
            }
        }
    }

private:
    const json& doc_;
    std::string path_;
    std::set<std::string> seen_;
};

OptimizerKind parse_optimizer_kind(const std::string& s) {
    if (s == "sgd") return OptimizerKind::Sgd;
    if (s == "momentum") return OptimizerKind::SgdMomentum;
    if (s == "rmsprop") return OptimizerKind::RmsProp;
    throw std::invalid_argument("config: unknown optimizer '" + s + "' (sgd, momentum, rmsprop)");
}

std::string to_string(OptimizerKind k) {
    switch (k) {
    case OptimizerKind::Sgd: return "sgd";
    case OptimizerKind::SgdMomentum: return "momentum";
    case OptimizerKind::RmsProp: return "rmsprop";
    }
    return "?";
}

void read_schedule(Section& s, AnnealSchedule& out) {
    s.read("c0", out.c0);
    s.read("floor", out.floor);
    s.read("period", out.period);
}

json schedule_json(const AnnealSchedule& s) {
    return {{"c0", s.c0}, {"floor", s.floor}, {"period", s.period}};
}

}  // namespace

std::string to_string(ExperimentId id) {
    switch (id) {
    case ExperimentId::GaussianMixture: return "gaussian-mixture";
    case ExperimentId::DigitsMlp: return "digits-mlp";
    case ExperimentId::UniqueCount: return "unique-count";
    case ExperimentId::AnnealDemo: return "anneal-demo";
    }
    return "?";
}

ExperimentId parse_experiment_id(const std::string& name) {
    if (name == "gaussian-mixture") return ExperimentId::GaussianMixture;
    if (name == "digits-mlp") return ExperimentId::DigitsMlp;
    if (name == "unique-count") return ExperimentId::UniqueCount;
    if (name == "anneal-demo") return ExperimentId::AnnealDemo;
    throw std::invalid_argument("unknown experiment '" + name +
                                "' (gaussian-mixture, digits-mlp, unique-count, anneal-demo)");
}

ExperimentConfig default_config(ExperimentId id) {
    ExperimentConfig cfg;
    cfg.experiment = id;
    cfg.seeds = {1, 2, 3, 4, 5};
    cfg.output_dir = "runs/" + to_string(id);
    switch (id) {
    case ExperimentId::GaussianMixture:
        cfg.model.activation = "hardtanh";
        cfg.model.hidden = {8, 8, 8};
        cfg.noise.mode = NoiseMode::Nah;
        cfg.optimizer = {OptimizerKind::RmsProp, 3e-3, 0.9, 0.9, 1e-6};
        cfg.train.epochs = 200;
        cfg.train.batch_size = 32;
        break;
    case ExperimentId::DigitsMlp:
        cfg.model.activation = "hardtanh";
        cfg.model.hidden = {64};
        cfg.noise.mode = NoiseMode::Nah;
        cfg.noise.c = 30.0;
        cfg.optimizer = {OptimizerKind::RmsProp, 3e-3, 0.9, 0.9, 1e-6};
        cfg.train.epochs = 50;
        cfg.train.batch_size = 32;
        break;
    case ExperimentId::UniqueCount:
        cfg.model.hidden = {};
        cfg.model.recurrent_init_scale = 3.0;
        cfg.noise.mode = NoiseMode::Nan;
        cfg.schedule = AnnealSchedule{30.0, 0.5, 20};
        cfg.optimizer = {OptimizerKind::RmsProp, 1e-2, 0.9, 0.9, 1e-6};
        cfg.train.epochs = 12;
        cfg.train.batch_size = 32;
        break;
    case ExperimentId::AnnealDemo:
        cfg.seeds = {1};
        break;
    }
    return cfg;
}

NoisyActConfig activation_config(const NoiseSettings& noise, HardSatFn base) {
    NoisyActConfig a;
    a.base = base;
    a.mode = noise.mode;
    a.alpha = noise.alpha;
    a.c = noise.c;
    a.sigma_fixed = noise.sigma_fixed;
    a.per_unit_p = noise.per_unit_p;
    return a;
}

ExperimentConfig parse_config(const json& doc) {
    Section root(doc, "config");
    std::string experiment;
    root.read("experiment", experiment);
    if (experiment.empty()) throw std::invalid_argument("config: 'experiment' is required");
    ExperimentConfig cfg = default_config(parse_experiment_id(experiment));

    std::string output_dir;
    root.read("seeds", cfg.seeds);
    root.read("output_dir", output_dir);
    if (!output_dir.empty()) cfg.output_dir = output_dir;
    root.read("workers", cfg.workers);

    if (const json* m = root.child("model")) {
        Section s(*m, "model");
        s.read("activation", cfg.model.activation);
        s.read("hidden", cfg.model.hidden);
        s.read("gates", cfg.model.gates);
        s.read("cell", cfg.model.cell);
        s.read("recurrent_hidden", cfg.model.recurrent_hidden);
        s.read("head_hidden", cfg.model.head_hidden);
        s.read("recurrent_init", cfg.model.recurrent_init);
        s.read("recurrent_init_scale", cfg.model.recurrent_init_scale);
        s.read("forget_bias", cfg.model.forget_bias);
        s.finish();
    }
    if (const json* n = root.child("noise")) {
        Section s(*n, "noise");
        std::string mode;
        s.read("mode", mode);
        if (!mode.empty()) cfg.noise.mode = parse_noise_mode(mode);
        s.read("alpha", cfg.noise.alpha);
        s.read("c", cfg.noise.c);
        s.read("sigma_fixed", cfg.noise.sigma_fixed);
        s.read("per_unit_p", cfg.noise.per_unit_p);
        s.finish();
    }
    if (const json* o = root.child("optimizer")) {
        Section s(*o, "optimizer");
        std::string kind;
        s.read("kind", kind);
        if (!kind.empty()) cfg.optimizer.kind = parse_optimizer_kind(kind);
        s.read("learning_rate", cfg.optimizer.learning_rate);
        s.read("momentum", cfg.optimizer.momentum);
        s.read("decay", cfg.optimizer.decay);
        s.read("epsilon", cfg.optimizer.epsilon);
        s.finish();
    }
    if (const json* a = root.child("schedule")) {
        if (a->is_null()) {
            cfg.schedule.reset();
        } else {
            Section s(*a, "schedule");
            AnnealSchedule sched = cfg.schedule.value_or(AnnealSchedule{});
            bool enabled = true;
            s.read("enabled", enabled);
            read_schedule(s, sched);
            s.finish();
            if (enabled) {
                cfg.schedule = sched;
            } else {
                cfg.schedule.reset();
            }
        }
    }
    if (const json* t = root.child("train")) {
        Section s(*t, "train");
        s.read("epochs", cfg.train.epochs);
        s.read("batch_size", cfg.train.batch_size);
        s.read("clip", cfg.train.clip_threshold);
        s.read("eval_every", cfg.train.eval_every);
        if (const json* cur = s.child("curriculum")) {
            if (!cur->is_array()) throw std::invalid_argument("config: 'train.curriculum' must be a list");
            cfg.train.curriculum.clear();
            for (const auto& phase : *cur) {
                Section p(phase, "train.curriculum[]");
                CurriculumPhase cp{0, 0};
                p.read("max_length", cp.max_length);
                p.read("epochs", cp.epochs);
                p.finish();
                cfg.train.curriculum.push_back(cp);
            }
        }
        s.finish();
    }
    if (const json* d = root.child("data")) {
        Section s(*d, "data");
        s.read("seed", cfg.data.seed);
        s.read("n_per_class", cfg.data.n_per_class);
        s.read("eval_per_class", cfg.data.eval_per_class);
        s.read("dimension", cfg.data.dimension);
        s.read("n_train", cfg.data.n_train);
        s.read("n_eval", cfg.data.n_eval);
        s.read("length", cfg.data.length);
        s.read("value_lo", cfg.data.value_lo);
        s.read("value_hi", cfg.data.value_hi);
        s.read("digits_path", cfg.data.digits_path);
        s.read("eval_fraction", cfg.data.eval_fraction);
        s.finish();
    }
    if (const json* a = root.child("demo")) {
        Section s(*a, "demo");
        s.read("runs", cfg.demo.runs);
        s.read("learning_rate", cfg.demo.learning_rate);
        s.read("steps", cfg.demo.steps);
        s.read("settle_steps", cfg.demo.settle_steps);
        s.read("start_lo", cfg.demo.start_lo);
        s.read("start_hi", cfg.demo.start_hi);
        if (const json* sc = s.child("schedule")) {
            Section ss(*sc, "demo.schedule");
            read_schedule(ss, cfg.demo.schedule);
            ss.finish();
        }
        s.finish();
    }
    root.finish();
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw std::invalid_argument("cannot open config " + path.string());
    json doc;
    try {
        doc = json::parse(is, nullptr, true, /*ignore_comments=*/true);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument("config " + path.string() + ": " + e.what());
    }
    return parse_config(doc);
}

json to_json(const ExperimentConfig& cfg) {
    json curriculum = json::array();
    for (const auto& p : cfg.train.curriculum) {
        curriculum.push_back({{"max_length", p.max_length}, {"epochs", p.epochs}});
    }
    json doc = {
        {"experiment", to_string(cfg.experiment)},
        {"seeds", cfg.seeds},
        {"output_dir", cfg.output_dir.string()},
        {"workers", cfg.workers},
        {"model",
         {{"activation", cfg.model.activation},
          {"hidden", cfg.model.hidden},
          {"gates", cfg.model.gates},
          {"cell", cfg.model.cell},
          {"recurrent_hidden", cfg.model.recurrent_hidden},
          {"head_hidden", cfg.model.head_hidden},
          {"recurrent_init", cfg.model.recurrent_init},
          {"recurrent_init_scale", cfg.model.recurrent_init_scale},
          {"forget_bias", cfg.model.forget_bias}}},
        {"noise",
         {{"mode", std::string(noisy::to_string(cfg.noise.mode))},
          {"alpha", cfg.noise.alpha},
          {"c", cfg.noise.c},
          {"sigma_fixed", cfg.noise.sigma_fixed},
          {"per_unit_p", cfg.noise.per_unit_p}}},
        {"optimizer",
         {{"kind", to_string(cfg.optimizer.kind)},
          {"learning_rate", cfg.optimizer.learning_rate},
          {"momentum", cfg.optimizer.momentum},
          {"decay", cfg.optimizer.decay},
          {"epsilon", cfg.optimizer.epsilon}}},
        {"train",
         {{"epochs", cfg.train.epochs},
          {"batch_size", cfg.train.batch_size},
          {"clip", cfg.train.clip_threshold},
          {"eval_every", cfg.train.eval_every},
          {"curriculum", curriculum}}},
        {"data",
         {{"seed", cfg.data.seed},
          {"n_per_class", cfg.data.n_per_class},
          {"eval_per_class", cfg.data.eval_per_class},
          {"dimension", cfg.data.dimension},
          {"n_train", cfg.data.n_train},
          {"n_eval", cfg.data.n_eval},
          {"length", cfg.data.length},
          {"value_lo", cfg.data.value_lo},
          {"value_hi", cfg.data.value_hi},
          {"digits_path", cfg.data.digits_path},
          {"eval_fraction", cfg.data.eval_fraction}}},
        {"demo",
         {{"runs", cfg.demo.runs},
          {"learning_rate", cfg.demo.learning_rate},
          {"steps", cfg.demo.steps},
          {"settle_steps", cfg.demo.settle_steps},
          {"start_lo", cfg.demo.start_lo},
          {"start_hi", cfg.demo.start_hi},
          {"schedule", schedule_json(cfg.demo.schedule)}}},
    };
    if (cfg.schedule) {
        json s = schedule_json(*cfg.schedule);
        s["enabled"] = true;
        doc["schedule"] = s;
    } else {
        doc["schedule"] = nullptr;
    }
    return doc;
}

void validate(const ExperimentConfig& cfg) {
    const auto fail = [](const std::string& msg) { throw std::invalid_argument("config: " + msg); };
    if (cfg.seeds.empty()) fail("at least one seed is required");
    for (std::size_t i = 0; i < cfg.seeds.size(); ++i) {
        for (std::size_t j = i + 1; j < cfg.seeds.size(); ++j) {
            if (cfg.seeds[i] == cfg.seeds[j]) fail("seeds must be distinct");
        }
    }
    if (cfg.workers == 0) fail("workers must be at least 1");
    validate(activation_config(cfg.noise, HardSatFn::hard_tanh()));
    if (cfg.schedule) {
        if (!(cfg.schedule->c0 > 0.0)) fail("schedule.c0 must be positive");
        if (!(cfg.schedule->floor >= 0.0)) fail("schedule.floor must be nonnegative");
    }

    if (cfg.experiment == ExperimentId::AnnealDemo) {
        if (cfg.demo.runs == 0) fail("demo.runs must be positive");
        if (!(cfg.demo.learning_rate > 0.0)) fail("demo.learning_rate must be positive");
        if (!(cfg.demo.start_lo < cfg.demo.start_hi)) fail("demo.start_lo must be below start_hi");
        return;
    }

    if (!(cfg.optimizer.learning_rate >= 0.0)) fail("optimizer.learning_rate must be nonnegative");
    if (!(cfg.optimizer.decay >= 0.0 && cfg.optimizer.decay < 1.0)) fail("optimizer.decay must lie in [0, 1)");
    if (!(cfg.optimizer.epsilon > 0.0)) fail("optimizer.epsilon must be positive");
    if (cfg.train.batch_size == 0) fail("train.batch_size must be positive");
    if (cfg.train.eval_every == 0) fail("train.eval_every must be positive");
    if (cfg.train.curriculum.empty() && cfg.train.epochs == 0) fail("train.epochs must be positive");
    for (const auto& p : cfg.train.curriculum) {
        if (p.max_length == 0 || p.epochs == 0) fail("curriculum phases need positive max_length and epochs");
    }

    static const std::set<std::string> activations = {"tanh", "sigmoid", "relu", "hardtanh", "hardsigmoid"};
    switch (cfg.experiment) {
    case ExperimentId::GaussianMixture:
        if (cfg.data.n_per_class == 0 || cfg.data.eval_per_class == 0) fail("data sizes must be positive");
        if (cfg.data.dimension < 2) fail("data.dimension must be at least 2");
        [[fallthrough]];
    case ExperimentId::DigitsMlp:
        if (!activations.count(cfg.model.activation)) fail("unknown model.activation '" + cfg.model.activation + "'");
        for (auto h : cfg.model.hidden) {
            if (h == 0) fail("hidden layer sizes must be positive");
        }
        if (cfg.experiment == ExperimentId::DigitsMlp &&
            !(cfg.data.eval_fraction > 0.0 && cfg.data.eval_fraction < 1.0)) {
            fail("data.eval_fraction must lie in (0, 1)");
        }
        break;
    case ExperimentId::UniqueCount:
        if (cfg.model.gates != "hard" && cfg.model.gates != "soft") fail("model.gates must be hard or soft");
        if (cfg.model.cell != "lstm" && cfg.model.cell != "gru") fail("model.cell must be lstm or gru");
        if (cfg.model.recurrent_init != "orthogonal" && cfg.model.recurrent_init != "uniform") {
            fail("model.recurrent_init must be orthogonal or uniform");
        }
        if (cfg.model.recurrent_hidden == 0 || cfg.model.head_hidden == 0) fail("model sizes must be positive");
        if (cfg.data.length == 0) fail("data.length must be positive");
        if (cfg.data.value_hi < cfg.data.value_lo) fail("data value range is empty");
        if (cfg.data.n_train == 0 || cfg.data.n_eval == 0) fail("data sizes must be positive");
        for (const auto& p : cfg.train.curriculum) {
            if (p.max_length > cfg.data.length) fail("curriculum max_length exceeds data.length");
        }
        break;
    case ExperimentId::AnnealDemo:
        break;
    }
}

}  // namespace noisy::harness
