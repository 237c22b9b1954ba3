#include "wstal/harness.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace wstal {

namespace fs = std::filesystem;

namespace {

template <typename T>
void read_opt(const Json &j, const char *key, T &dst) {
    if (j.contains(key)) {
        dst = j.at(key).get<T>();
    }
}

std::int64_t odd_frames(double sec, double fps) {
    if (!(sec > 0.0)) {
        return 1;
    }
    auto n = std::max<std::int64_t>(1, std::llround(sec * fps));
    return n % 2 == 0 ? n + 1 : n;
}

std::vector<std::string> split(const std::string &s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, sep)) {
        out.push_back(cur);
    }
    if (!s.empty() && s.back() == sep) {
        out.emplace_back();
    }
    return out;
}

std::string fmt2(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

} // namespace

BenchmarkPlan plan_runs(const std::vector<DatasetPlanInput> &inputs) {
    BenchmarkPlan plan;
    for (const auto &in : inputs) {
        if (in.seeds < 1 || in.subjects < 1 || in.models < 1) {
            throw Error("plan: counts must be positive for dataset " + in.dataset);
        }
        const std::int64_t runs = in.seeds * in.subjects * in.models;
        plan.rows.push_back({in, runs});
        plan.total += runs;
    }
    return plan;
}

std::vector<DatasetPlanInput> reference_plan_inputs() {
    // 7 weakly supervised + 3 fully supervised models; XRFV2 is 4 LOSO subjects + 1 in-domain split.
    return {
        {"SBHAR", 3, 30, 10},  {"Opportunity", 3, 4, 10}, {"WetLab", 3, 22, 10},
        {"Hang-Time", 3, 24, 10}, {"RWHAR", 3, 15, 10},   {"WEAR", 3, 18, 10},
        {"XRFV2", 3, 5, 10},
    };
}

std::string format_plan(const BenchmarkPlan &plan) {
    std::ostringstream os;
    char buf[128];
    std::snprintf(buf, sizeof buf, "%-14s %7s %9s %7s %10s\n", "Dataset", "#Seeds", "#Subjects",
                  "#Models", "Total runs");
    os << buf;
    for (const auto &r : plan.rows) {
        std::snprintf(buf, sizeof buf, "%-14s %7lld %9lld %7lld %10lld\n", r.input.dataset.c_str(),
                      static_cast<long long>(r.input.seeds), static_cast<long long>(r.input.subjects),
                      static_cast<long long>(r.input.models), static_cast<long long>(r.runs));
        os << buf;
    }
    std::snprintf(buf, sizeof buf, "%-14s %7s %9s %7s %10lld\n", "Total", "", "", "",
                  static_cast<long long>(plan.total));
    os << buf;
    return os.str();
}

std::vector<LosoSplit> loso_splits(std::vector<std::string> subjects) {
    std::sort(subjects.begin(), subjects.end());
    subjects.erase(std::unique(subjects.begin(), subjects.end()), subjects.end());
    if (subjects.size() < 2) {
        throw Error("loso_splits: need at least 2 distinct subjects");
    }
    std::vector<LosoSplit> out;
    for (const auto &test : subjects) {
        LosoSplit s;
        s.test = test;
        for (const auto &other : subjects) {
            if (other != test) {
                s.train.push_back(other);
            }
        }
        out.push_back(std::move(s));
    }
    return out;
}

ModelSpec parse_model_id(const std::string &id) {
    ModelSpec spec;
    spec.id = id;
    std::string pooling = id;
    const std::string suffix = "-rskp";
    if (id.size() > suffix.size() && id.compare(id.size() - suffix.size(), suffix.size(), suffix) == 0) {
        spec.refinement = Refinement::Rskp;
        pooling = id.substr(0, id.size() - suffix.size());
    }
    try {
        spec.pooling = pooling_from_string(pooling);
    } catch (const Error &) {
        throw Error("unknown model id '" + id + "'");
    }
    return spec;
}

std::vector<std::string> registered_models() {
    return {"attention", "max", "linsoft", "attention-rskp", "max-rskp", "linsoft-rskp"};
}

SynthConfig synth_config_from_json(const Json &j, SynthConfig base) {
    read_opt(j, "num_classes", base.num_classes);
    read_opt(j, "fps", base.fps);
    read_opt(j, "duration", base.duration);
    if (j.contains("mean_action_sec")) {
        const Json &m = j.at("mean_action_sec");
        base.mean_action_sec = m.is_array() ? m.get<std::vector<double>>()
                                            : std::vector<double>{m.get<double>()};
    }
    read_opt(j, "mean_gap_sec", base.mean_gap_sec);
    read_opt(j, "min_gap_sec", base.min_gap_sec);
    read_opt(j, "min_action_sec", base.min_action_sec);
    read_opt(j, "feature_dim", base.feature_dim);
    read_opt(j, "separation", base.separation);
    read_opt(j, "noise", base.noise);
    read_opt(j, "seed", base.seed);
    read_opt(j, "fixed_durations", base.fixed_durations);
    read_opt(j, "subject_shift", base.subject_shift);
    read_opt(j, "subjects", base.subjects);
    read_opt(j, "sequences_per_subject", base.sequences_per_subject);
    return base;
}

Json synth_config_to_json(const SynthConfig &cfg) {
    Json j;
    j["num_classes"] = cfg.num_classes;
    j["fps"] = cfg.fps;
    j["duration"] = cfg.duration;
    j["mean_action_sec"] = cfg.mean_action_sec;
    j["mean_gap_sec"] = cfg.mean_gap_sec;
    j["min_gap_sec"] = cfg.min_gap_sec;
    j["min_action_sec"] = cfg.min_action_sec;
    j["feature_dim"] = cfg.feature_dim;
    j["separation"] = cfg.separation;
    j["noise"] = cfg.noise;
    j["seed"] = cfg.seed;
    j["fixed_durations"] = cfg.fixed_durations;
    j["subject_shift"] = cfg.subject_shift;
    j["subjects"] = cfg.subjects;
    j["sequences_per_subject"] = cfg.sequences_per_subject;
    return j;
}

HarnessConfig harness_config_from_json(const Json &j) {
    HarnessConfig cfg;
    read_opt(j, "seeds", cfg.seeds);
    read_opt(j, "thresholds", cfg.thresholds);
    if (j.contains("proposals")) {
        cfg.proposals = proposal_config_from_json(j.at("proposals"));
    }
    if (j.contains("synth")) {
        cfg.synth = synth_config_from_json(j.at("synth"));
    }
    if (j.contains("train")) {
        cfg.train = train_config_from_json(j.at("train"), cfg.train);
    }
    if (j.contains("infer")) {
        const Json &inf = j.at("infer");
        read_opt(inf, "clip_sec", cfg.clip_sec);
        read_opt(inf, "thresh", cfg.thresh);
        read_opt(inf, "smooth_sec", cfg.smooth_sec);
        read_opt(inf, "rskp_alpha", cfg.rskp_alpha);
        read_opt(inf, "rskp_steps", cfg.rskp_steps);
        read_opt(inf, "rskp_radius", cfg.rskp_radius);
        read_opt(inf, "nms_iou_thresh", cfg.nms.iou_thresh);
        read_opt(inf, "nms_class_wise", cfg.nms.class_wise);
    }
    if (j.contains("ward_denominator")) {
        const auto d = j.at("ward_denominator").get<std::string>();
        if (d == "sequence") {
            cfg.ward_denominator = WardDenominator::SequenceDuration;
        } else if (d == "class_gt") {
            cfg.ward_denominator = WardDenominator::ClassGtDuration;
        } else {
            throw Error("ward_denominator must be 'sequence' or 'class_gt'");
        }
    }
    read_opt(j, "workers", cfg.workers);
    if (cfg.thresholds.empty()) {
        throw Error("config: thresholds must not be empty");
    }
    return cfg;
}

Json harness_config_to_json(const HarnessConfig &cfg) {
    Json j;
    j["seeds"] = cfg.seeds;
    j["thresholds"] = cfg.thresholds;
    j["proposals"] = proposal_config_to_json(cfg.proposals);
    j["synth"] = synth_config_to_json(cfg.synth);
    j["train"] = train_config_to_json(cfg.train);
    j["infer"] = {
        {"clip_sec", cfg.clip_sec},       {"thresh", cfg.thresh},
        {"smooth_sec", cfg.smooth_sec},   {"rskp_alpha", cfg.rskp_alpha},
        {"rskp_steps", cfg.rskp_steps},   {"rskp_radius", cfg.rskp_radius},
        {"nms_iou_thresh", cfg.nms.iou_thresh}, {"nms_class_wise", cfg.nms.class_wise},
    };
    j["ward_denominator"] =
        cfg.ward_denominator == WardDenominator::SequenceDuration ? "sequence" : "class_gt";
    j["workers"] = cfg.workers;
    return j;
}

void RunConfig::validate() const {
    if (mode == InferMode::Window && !window_sec) {
        throw Error("run: window mode requires window seconds");
    }
    if (mode == InferMode::Full && window_sec) {
        throw Error("run: window seconds are only valid in window mode");
    }
    if (window_sec && !(*window_sec > 0.0)) {
        throw Error("run: window seconds must be positive");
    }
    parse_model_id(model_id);
}

std::string RunConfig::name() const {
    std::string n = dataset_id + "_" + model_id + "_seed" + std::to_string(seed) + "_" +
                    (held_out_subject.empty() ? std::string("all") : held_out_subject) + "_" +
                    to_string(mode);
    if (window_sec) {
        n += format_double(*window_sec);
    }
    return n;
}

Json eval_report_to_json(const EvalReport &r) {
    Json j;
    Json per_class = Json::object();
    for (const auto &[cls, c] : r.prf.per_class) {
        per_class[std::to_string(cls)] = {{"tp", c.tp},        {"fp", c.fp},
                                          {"fn", c.fn},        {"precision", c.precision},
                                          {"recall", c.recall}, {"f1", c.f1}};
    }
    j["frame"] = {{"precision", r.prf.precision},
                  {"recall", r.prf.recall},
                  {"f1", r.prf.f1},
                  {"per_class", per_class}};
    j["misalignment"] = {{"UR", r.ward.ur}, {"OR", r.ward.or_}, {"DR", r.ward.dr},
                         {"IR", r.ward.ir}, {"FR", r.ward.fr},  {"MR", r.ward.mr}};
    Json ap = Json::object();
    for (const auto &[cls, by_tau] : r.map.ap) {
        Json row = Json::object();
        for (const auto &[tau, v] : by_tau) {
            row[format_double(tau)] = v;
        }
        ap[std::to_string(cls)] = row;
    }
    Json map_at = Json::object();
    for (const auto &[tau, v] : r.map.map_at) {
        map_at[format_double(tau)] = v;
    }
    j["segment"] = {{"ap", ap}, {"map_at", map_at}, {"map", r.map.map}};
    return j;
}

namespace {

void check_held_out(const RunConfig &run, const SynthDataset &data) {
    if (data.streams.empty()) {
        throw Error("run: dataset is empty");
    }
    if (run.held_out_subject.empty()) {
        return;
    }
    const bool known = std::any_of(data.streams.begin(), data.streams.end(), [&](const auto &s) {
        return s.record.subject_id == run.held_out_subject;
    });
    if (!known) {
        throw Error("run: held-out subject '" + run.held_out_subject + "' not in dataset");
    }
}

} // namespace

ToyModel train_run_model(const RunConfig &run, const SynthDataset &data, const HarnessConfig &cfg) {
    run.validate();
    check_held_out(run, data);
    std::vector<TrainSample> samples;
    for (const auto &s : data.streams) {
        if (!run.held_out_subject.empty() && s.record.subject_id == run.held_out_subject) {
            continue;
        }
        const auto clip_frames = std::max<std::int64_t>(2, std::llround(cfg.clip_sec * s.record.fps));
        auto clips = make_clip_samples(s.features, s.record.gt, s.record.fps, s.record.num_classes,
                                       clip_frames);
        std::move(clips.begin(), clips.end(), std::back_inserter(samples));
    }
    if (samples.empty()) {
        throw Error("run: no training clips");
    }
    TrainConfig train = cfg.train;
    train.seed = run.seed;
    train.pooling = parse_model_id(run.model_id).pooling;
    return train_mil(samples, train).model;
}

InferConfig infer_config_for(const RunConfig &run, const HarnessConfig &cfg, double fps) {
    InferConfig inf;
    inf.mode = run.mode;
    inf.fps = fps;
    inf.window_len = run.window_sec ? std::llround(*run.window_sec * fps) : 0;
    inf.thresh = cfg.thresh;
    inf.smooth = static_cast<int>(odd_frames(cfg.smooth_sec, fps));
    inf.refinement = parse_model_id(run.model_id).refinement;
    inf.rskp_alpha = cfg.rskp_alpha;
    inf.rskp_steps = cfg.rskp_steps;
    inf.rskp_radius = cfg.rskp_radius;
    inf.nms = cfg.nms;
    return inf;
}

EvalReport run_pipeline(const RunConfig &run, const SynthDataset &data, const HarnessConfig &cfg,
                        SegmentTable *predictions) {
    const ToyModel model = train_run_model(run, data, cfg);
    std::vector<EvalSequence> evals;
    for (const auto &s : data.streams) {
        if (!run.held_out_subject.empty() && s.record.subject_id != run.held_out_subject) {
            continue;
        }
        EvalSequence e;
        e.fps = s.record.fps;
        e.duration = s.record.duration;
        e.segments.sequence_id = s.record.sequence_id;
        e.segments.gt = s.record.gt;
        e.segments.pred = infer(model, s.features, infer_config_for(run, cfg, s.record.fps));
        if (predictions) {
            (*predictions)[s.record.sequence_id] = e.segments.pred;
        }
        evals.push_back(std::move(e));
    }
    return evaluate(evals, cfg.thresholds, cfg.ward_denominator);
}

std::string aggregate_row(const RunConfig &run, const EvalReport &r) {
    std::ostringstream os;
    os << run.dataset_id << ',' << run.model_id << ',' << run.seed << ','
       << (run.held_out_subject.empty() ? "all" : run.held_out_subject) << ',' << to_string(run.mode);
    for (double v : {100.0 * r.prf.precision, 100.0 * r.prf.recall, 100.0 * r.prf.f1, r.ward.ur,
                     r.ward.or_, r.ward.dr, r.ward.ir, r.ward.fr, r.ward.mr, 100.0 * r.map.map}) {
        os << ',' << format_double(v);
    }
    return os.str();
}

namespace {

std::mutex &aggregate_mutex() {
    static std::mutex m;
    return m;
}

void append_aggregate(const fs::path &csv, const std::string &row) {
    std::lock_guard lock(aggregate_mutex());
    const bool fresh = !fs::exists(csv) || fs::file_size(csv) == 0;
    std::ofstream out(csv, std::ios::app | std::ios::binary);
    if (!out) {
        throw Error("cannot append to " + csv.string());
    }
    if (fresh) {
        out << kAggregateHeader << '\n';
    }
    out << row << '\n';
}

} // namespace

RunOutput run_pipeline(const RunConfig &run, const fs::path &data_dir, const fs::path &out_dir,
                       const HarnessConfig &cfg) {
    const SynthDataset data = read_dataset(data_dir);
    SegmentTable preds;
    RunOutput out;
    out.report = run_pipeline(run, data, cfg, &preds);

    const fs::path dir = out_dir / run.name();
    fs::create_directories(dir);
    Json doc;
    doc["run"] = {{"dataset", run.dataset_id},
                  {"seed", run.seed},
                  {"held_out_subject", run.held_out_subject},
                  {"model", run.model_id},
                  {"mode", to_string(run.mode)},
                  {"window_sec", run.window_sec ? Json(*run.window_sec) : Json(nullptr)}};
    // Worker count is a scheduling detail; leaving it out keeps reports identical across pools.
    doc["config"] = harness_config_to_json(cfg);
    doc["config"].erase("workers");
    doc["report"] = eval_report_to_json(out.report);
    out.report_path = dir / "report.json";
    write_text_file(out.report_path, doc.dump(2) + "\n");
    write_segments_jsonl(dir / "predictions.jsonl", preds);
    append_aggregate(out_dir / "aggregate.csv", aggregate_row(run, out.report));
    return out;
}

std::vector<RunOutput> run_all(const std::vector<RunConfig> &runs, const fs::path &data_dir,
                               const fs::path &out_dir, const HarnessConfig &cfg) {
    std::vector<RunOutput> results(runs.size());
    std::vector<std::string> errors(runs.size());
    const auto workers = static_cast<std::size_t>(std::max(1, cfg.workers));
    std::size_t next = 0;
    std::mutex next_mutex;
    auto worker = [&] {
        while (true) {
            std::size_t i;
            {
                std::lock_guard lock(next_mutex);
                if (next >= runs.size()) {
                    return;
                }
                i = next++;
            }
            try {
                results[i] = run_pipeline(runs[i], data_dir, out_dir, cfg);
            } catch (const std::exception &e) {
                errors[i] = runs[i].name() + ": " + e.what();
            }
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t w = 1; w < std::min(workers, runs.size()); ++w) {
        pool.emplace_back(worker);
    }
    worker();
    for (auto &t : pool) {
        t.join();
    }
    for (const auto &e : errors) {
        if (!e.empty()) {
            throw Error(e);
        }
    }
    return results;
}

std::string report_table(const std::string &aggregate_csv) {
    constexpr int kMetrics = 10;
    static const char *kNames[kMetrics] = {"P", "R", "F1", "UR", "OR", "DR", "IR", "FR", "MR", "mAP"};
    struct Acc {
        std::array<double, kMetrics> sum{};
        int n = 0;
    };
    // (dataset, model) -> mode -> sums
    std::map<std::pair<std::string, std::string>, std::map<std::string, Acc>> groups;

    std::istringstream in(aggregate_csv);
    std::string line;
    bool header = true;
    int rows = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        if (header) {
            header = false;
            if (line.rfind("dataset,", 0) == 0) {
                continue;
            }
        }
        const auto f = split(line, ',');
        if (f.size() != 5 + kMetrics) {
            throw Error("report: malformed aggregate row: " + line);
        }
        Acc &acc = groups[{f[0], f[1]}][f[4]];
        for (int k = 0; k < kMetrics; ++k) {
            acc.sum[static_cast<std::size_t>(k)] += std::stod(f[static_cast<std::size_t>(5 + k)]);
        }
        ++acc.n;
        ++rows;
    }
    if (rows == 0) {
        throw Error("report: no run rows");
    }

    std::ostringstream os;
    char buf[64];
    std::snprintf(buf, sizeof buf, "%-14s %-16s", "Dataset", "Model");
    os << buf;
    for (const char *name : kNames) {
        std::snprintf(buf, sizeof buf, " %13s", name);
        os << buf;
    }
    os << '\n';
    for (const auto &[key, modes] : groups) {
        std::snprintf(buf, sizeof buf, "%-14s %-16s", key.first.c_str(), key.second.c_str());
        os << buf;
        const auto w = modes.find("window");
        const auto f = modes.find("full");
        for (std::size_t k = 0; k < kMetrics; ++k) {
            std::string cell;
            auto mean = [&](const Acc &a) { return fmt2(a.sum[k] / a.n); };
            if (w != modes.end() && f != modes.end()) {
                cell = mean(w->second) + "|" + mean(f->second);
            } else {
                cell = mean(modes.begin()->second);
            }
            std::snprintf(buf, sizeof buf, " %13s", cell.c_str());
            os << buf;
        }
        os << '\n';
    }
    return os.str();
}

} // namespace wstal
