// wstal: command-line front end for the toolkit.

#include "wstal/harness.hpp"
#include "wstal/io.hpp"
#include "wstal/postprocess.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <iostream>
#include <set>

namespace fs = std::filesystem;
using namespace wstal;

namespace {

struct Globals {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
};

HarnessConfig load_config(const Globals &g) {
    return g.config.empty() ? HarnessConfig{} : harness_config_from_json(read_json_file(g.config));
}

// Writes to the --out path, or stdout when it is empty.
void emit(const std::string &path, const std::string &text) {
    if (path.empty()) {
        std::cout << text;
    } else {
        write_text_file(path, text);
    }
}

std::string require_out(const Globals &g, const char *cmd) {
    if (g.out.empty()) {
        throw Error(std::string(cmd) + ": --out is required");
    }
    return g.out;
}

std::vector<std::string> subjects_of(const SynthDataset &data) {
    std::set<std::string> s;
    for (const auto &st : data.streams) {
        s.insert(st.record.subject_id);
    }
    return {s.begin(), s.end()};
}

// ---------------------------------------------------------------------------

void cmd_synth(const Globals &g) {
    HarnessConfig cfg = load_config(g);
    if (g.seed) {
        cfg.synth.seed = *g.seed;
    }
    const auto dir = require_out(g, "synth");
    const auto data = gen_benchmark(cfg.synth);
    write_dataset(dir, data);
    std::size_t segments = 0;
    for (const auto &s : data.streams) {
        segments += s.record.gt.size();
    }
    std::cout << "wrote " << data.streams.size() << " sequences (" << segments << " segments) to "
              << dir << '\n';
}

struct ProposeOpts {
    std::optional<std::int64_t> feature_len;
    std::optional<std::int64_t> count;
};

void cmd_propose(const Globals &g, const ProposeOpts &o) {
    HarnessConfig cfg = load_config(g);
    ProposalConfig pc = cfg.proposals;
    if (g.seed) {
        pc.seed = *g.seed;
    }
    if (o.feature_len) {
        pc.feature_len = *o.feature_len;
    }
    if (o.count) {
        pc.count = *o.count;
    }
    const auto set = generate_proposals(pc);
    std::ostringstream os;
    write_proposals_csv(os, set);
    emit(g.out, os.str());
    std::cerr << set.size() << " proposals, " << set.num_structured << " structured"
              << (set.fallback ? " (fallback)" : "") << '\n';
}

struct TrainOpts {
    std::string data;
    std::string model_id = "attention";
    std::string held_out;
};

void cmd_train(const Globals &g, const TrainOpts &o) {
    const HarnessConfig cfg = load_config(g);
    RunConfig run;
    run.model_id = o.model_id;
    run.held_out_subject = o.held_out;
    run.seed = g.seed.value_or(cfg.seeds.empty() ? run.seed : cfg.seeds.front());
    const auto data = read_dataset(o.data);
    const ToyModel model = train_run_model(run, data, cfg);
    Json j = model_to_json(model);
    j["model_id"] = run.model_id;
    j["seed"] = run.seed;
    j["held_out_subject"] = run.held_out_subject;
    write_text_file(require_out(g, "train"), j.dump(2) + "\n");
}

struct InferOpts {
    std::string data;
    std::string model;
    std::string mode = "full";
    std::optional<double> window_sec;
    std::string subject;
};

void cmd_infer(const Globals &g, const InferOpts &o) {
    const HarnessConfig cfg = load_config(g);
    const Json mj = read_json_file(o.model);
    const ToyModel model = model_from_json(mj);
    RunConfig run;
    run.model_id = mj.value("model_id", std::string("attention"));
    run.mode = infer_mode_from_string(o.mode);
    run.window_sec = o.window_sec;
    run.validate();
    const auto data = read_dataset(o.data);
    SegmentTable preds;
    for (const auto &s : data.streams) {
        if (!o.subject.empty() && s.record.subject_id != o.subject) {
            continue;
        }
        preds[s.record.sequence_id] = infer(model, s.features, infer_config_for(run, cfg, s.record.fps));
    }
    if (!o.subject.empty() && preds.empty()) {
        throw Error("infer: no sequences for subject '" + o.subject + "'");
    }
    std::ostringstream os;
    write_segments_jsonl(os, preds);
    emit(g.out, os.str());
}

struct PostOpts {
    std::string in;
    double iou_thresh = 0.5;
    bool class_wise = true;
    bool merge = false;
};

void cmd_postprocess(const Globals &g, const PostOpts &o) {
    auto table = read_segments_jsonl(o.in);
    const NmsConfig nms{o.iou_thresh, o.class_wise};
    for (auto &[id, segs] : table) {
        segs = temporal_nms(segs, nms);
        if (o.merge) {
            segs = resolve_and_merge(segs);
        }
    }
    std::ostringstream os;
    write_segments_jsonl(os, table);
    emit(g.out, os.str());
}

struct EvalOpts {
    std::string gt;
    std::string pred;
    std::string metadata;
    std::optional<double> fps;
    std::optional<double> duration;
    std::vector<double> thresholds;
    std::string ward = "sequence";
};

void cmd_eval(const Globals &g, const EvalOpts &o) {
    const auto gt = read_segments_jsonl(o.gt);
    const auto pred = read_segments_jsonl(o.pred);
    std::map<std::string, SequenceRecord> meta;
    if (!o.metadata.empty()) {
        for (auto &r : read_metadata_jsonl(o.metadata)) {
            meta[r.sequence_id] = r;
        }
    }
    std::set<std::string> ids;
    for (const auto &[id, _] : gt) ids.insert(id);
    for (const auto &[id, _] : pred) ids.insert(id);
    for (const auto &[id, _] : meta) ids.insert(id);
    if (ids.empty()) {
        throw Error("eval: no sequences in the inputs");
    }

    std::vector<EvalSequence> seqs;
    for (const auto &id : ids) {
        EvalSequence e;
        e.segments.sequence_id = id;
        if (auto it = gt.find(id); it != gt.end()) e.segments.gt = it->second;
        if (auto it = pred.find(id); it != pred.end()) e.segments.pred = it->second;
        if (auto it = meta.find(id); it != meta.end()) {
            e.fps = it->second.fps;
            e.duration = it->second.duration;
        } else if (o.fps && o.duration) {
            e.fps = *o.fps;
            e.duration = *o.duration;
        } else {
            throw Error("eval: no fps/duration for sequence '" + id +
                        "' (pass --metadata, or --fps and --duration)");
        }
        seqs.push_back(std::move(e));
    }
    WardDenominator denom = WardDenominator::SequenceDuration;
    if (o.ward == "class_gt") {
        denom = WardDenominator::ClassGtDuration;
    } else if (o.ward != "sequence") {
        throw Error("eval: --ward must be 'sequence' or 'class_gt'");
    }
    const auto thresholds = o.thresholds.empty() ? kDefaultTiouThresholds : o.thresholds;
    const auto rep = evaluate(seqs, thresholds, denom);
    if (!g.out.empty()) {
        write_text_file(g.out, eval_report_to_json(rep).dump(2) + "\n");
    }
    std::cout << format_report_table(rep);
}

void cmd_plan(const Globals &g, const std::vector<std::string> &specs) {
    std::vector<DatasetPlanInput> inputs;
    for (const auto &spec : specs) {
        DatasetPlanInput in;
        char name[128];
        long long seeds = 0, subjects = 0, models = 0;
        if (std::sscanf(spec.c_str(), "%127[^:]:%lld:%lld:%lld", name, &seeds, &subjects, &models) != 4) {
            throw Error("plan: expected NAME:SEEDS:SUBJECTS:MODELS, got '" + spec + "'");
        }
        in.dataset = name;
        in.seeds = seeds;
        in.subjects = subjects;
        in.models = models;
        inputs.push_back(in);
    }
    if (inputs.empty()) {
        inputs = reference_plan_inputs();
    }
    emit(g.out, format_plan(plan_runs(inputs)));
}

struct RunOpts {
    std::string data;
    std::vector<std::string> models{"attention"};
    std::vector<std::string> held_out;
    bool loso = false;
    std::string mode = "full";
    std::optional<double> window_sec;
    std::string dataset_id = "synthetic";
    std::optional<int> workers;
};

void cmd_run(const Globals &g, const RunOpts &o) {
    HarnessConfig cfg = load_config(g);
    if (o.workers) {
        cfg.workers = *o.workers;
    }
    const auto out = require_out(g, "run");
    std::vector<std::uint64_t> seeds = cfg.seeds;
    if (g.seed) {
        seeds = {*g.seed};
    }
    std::vector<std::string> held = o.held_out;
    if (o.loso) {
        held = subjects_of(read_dataset(o.data));
    }
    if (held.empty()) {
        held.emplace_back(); // in-domain
    }
    std::vector<InferMode> modes;
    if (o.mode == "both") {
        modes = {InferMode::Window, InferMode::Full};
    } else {
        modes = {infer_mode_from_string(o.mode)};
    }

    std::vector<RunConfig> runs;
    for (const auto &model : o.models) {
        for (auto seed : seeds) {
            for (const auto &subject : held) {
                for (auto mode : modes) {
                    RunConfig r;
                    r.dataset_id = o.dataset_id;
                    r.seed = seed;
                    r.held_out_subject = subject;
                    r.model_id = model;
                    r.mode = mode;
                    if (mode == InferMode::Window) {
                        r.window_sec = o.window_sec;
                    }
                    r.validate();
                    runs.push_back(r);
                }
            }
        }
    }
    const auto results = run_all(runs, o.data, out, cfg);
    for (std::size_t i = 0; i < runs.size(); ++i) {
        const auto &r = results[i].report;
        std::printf("%-48s F1 %6.2f  mAP %6.2f\n", runs[i].name().c_str(), 100.0 * r.prf.f1,
                    100.0 * r.map.map);
    }
}

void cmd_report(const Globals &g, std::string aggregate) {
    if (aggregate.empty()) {
        aggregate = (fs::path(require_out(g, "report")) / "aggregate.csv").string();
    }
    std::cout << report_table(read_text_file(aggregate));
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"Weakly supervised temporal action localization toolkit"};
    app.require_subcommand(1);
    app.fallthrough();

    Globals g;
    app.add_option("--config", g.config, "Harness configuration (JSON)")->check(CLI::ExistingFile);
    app.add_option("--seed", g.seed, "Seed override");
    app.add_option("--out", g.out, "Output file or directory");

    auto *synth = app.add_subcommand("synth", "Generate a synthetic benchmark dataset");

    ProposeOpts po;
    auto *propose = app.add_subcommand("propose", "Sample multi-scale temporal proposals (CSV)");
    propose->add_option("--feature-len", po.feature_len, "Feature-axis length T_global");
    propose->add_option("--count", po.count, "Number of proposals N");

    TrainOpts to;
    auto *train = app.add_subcommand("train", "Train a toy MIL model on a dataset");
    train->add_option("--data", to.data, "Dataset directory")->required();
    train->add_option("--model-id", to.model_id, "attention|max|linsoft[-rskp]");
    train->add_option("--held-out", to.held_out, "Subject excluded from training");

    InferOpts io;
    auto *inf = app.add_subcommand("infer", "Localize actions with a trained model (JSON Lines)");
    inf->add_option("--data", io.data, "Dataset directory")->required();
    inf->add_option("--model", io.model, "Model JSON from `train`")->required();
    inf->add_option("--mode", io.mode, "full|window");
    inf->add_option("--window-sec", io.window_sec, "Window length in window mode");
    inf->add_option("--subject", io.subject, "Only sequences of this subject");

    PostOpts pp;
    auto *post = app.add_subcommand("postprocess", "NMS and optional overlap resolution");
    post->add_option("--in", pp.in, "Predictions (JSON Lines)")->required();
    post->add_option("--iou-thresh", pp.iou_thresh, "NMS tIoU threshold");
    post->add_option("--class-wise", pp.class_wise, "Suppress within a class only (true|false)");
    post->add_flag("--merge", pp.merge, "Resolve cross-class overlaps and merge same-class runs");

    EvalOpts eo;
    auto *eval = app.add_subcommand("eval", "Frame, misalignment and segment metrics");
    eval->add_option("--gt", eo.gt, "Ground truth (JSON Lines)")->required();
    eval->add_option("--pred", eo.pred, "Predictions (JSON Lines)")->required();
    eval->add_option("--metadata", eo.metadata, "Sequence metadata (JSON Lines) for fps/duration");
    eval->add_option("--fps", eo.fps, "Frame rate for sequences without metadata");
    eval->add_option("--duration", eo.duration, "Duration for sequences without metadata");
    eval->add_option("--thresholds", eo.thresholds, "tIoU thresholds")->delimiter(',');
    eval->add_option("--ward", eo.ward, "Misalignment denominator: sequence|class_gt");

    std::vector<std::string> plan_specs;
    auto *plan = app.add_subcommand("plan", "Run accounting table");
    plan->add_option("--dataset", plan_specs, "NAME:SEEDS:SUBJECTS:MODELS (repeatable)");

    RunOpts ro;
    auto *run = app.add_subcommand("run", "Train, infer, post-process and evaluate");
    run->add_option("--data", ro.data, "Dataset directory")->required();
    run->add_option("--model-id", ro.models, "Model ids (repeatable)");
    run->add_option("--held-out", ro.held_out, "Held-out subjects (repeatable); none = in-domain");
    run->add_flag("--loso", ro.loso, "Hold out every subject in turn");
    run->add_option("--mode", ro.mode, "full|window|both");
    run->add_option("--window-sec", ro.window_sec, "Window length for window mode");
    run->add_option("--dataset-id", ro.dataset_id, "Dataset name in reports");
    run->add_option("--workers", ro.workers, "Concurrent runs");

    std::string aggregate;
    auto *rep = app.add_subcommand("report", "Summarize an aggregate CSV");
    rep->add_option("--aggregate", aggregate, "Aggregate CSV (default: <out>/aggregate.csv)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        return app.exit(e);
    }

    try {
        if (synth->parsed()) cmd_synth(g);
        else if (propose->parsed()) cmd_propose(g, po);
        else if (train->parsed()) cmd_train(g, to);
        else if (inf->parsed()) cmd_infer(g, io);
        else if (post->parsed()) cmd_postprocess(g, pp);
        else if (eval->parsed()) cmd_eval(g, eo);
        else if (plan->parsed()) cmd_plan(g, plan_specs);
        else if (run->parsed()) cmd_run(g, ro);
        else if (rep->parsed()) cmd_report(g, aggregate);
    } catch (const std::exception &e) {
        std::cerr << "wstal: error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
