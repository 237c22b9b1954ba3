#include "wstal/synth.hpp"

#include "wstal/io.hpp"
#include "wstal/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace wstal {

namespace fs = std::filesystem;

namespace {

std::string subject_name(int k) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "subject_%02d", k + 1);
    return buf;
}

std::string sequence_name(int k, int m) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "subject_%02d_seq_%02d", k + 1, m);
    return buf;
}

constexpr std::uint64_t kShiftStream = 0x7368696674ULL;

} // namespace

double SynthConfig::mean_action(int class_id) const {
    if (mean_action_sec.size() == 1) {
        return mean_action_sec.front();
    }
    return mean_action_sec.at(static_cast<std::size_t>(class_id - 1));
}

void SynthConfig::validate() const {
    if (num_classes < 1) {
        throw Error("synth: num_classes must be >= 1");
    }
    if (!(fps > 0.0) || !(duration > 0.0)) {
        throw Error("synth: fps and duration must be positive");
    }
    if (mean_action_sec.empty() ||
        (mean_action_sec.size() != 1 && static_cast<int>(mean_action_sec.size()) != num_classes)) {
        throw Error("synth: mean_action_sec needs one entry or one per class");
    }
    for (double m : mean_action_sec) {
        if (!(m > 0.0)) {
            throw Error("synth: mean action durations must be positive");
        }
    }
    if (!(mean_gap_sec > 0.0) || min_gap_sec < 0.0 || min_action_sec < 0.0) {
        throw Error("synth: mean_gap_sec must be positive and duration floors non-negative");
    }
    if (feature_dim < num_classes) {
        throw Error("synth: feature_dim must be >= num_classes");
    }
    if (!(separation > 0.0) || noise < 0.0 || subject_shift < 0.0) {
        throw Error("synth: separation must be positive, noise and subject_shift non-negative");
    }
    if (subjects < 1 || sequences_per_subject < 1) {
        throw Error("synth: subjects and sequences_per_subject must be >= 1");
    }
    const double shortest = *std::min_element(mean_action_sec.begin(), mean_action_sec.end());
    if (std::floor(duration * fps + 1e-9) < 2.0 || duration < shortest) {
        throw Error("synth: duration too short to fit one action");
    }
}

Eigen::MatrixXd class_means(const SynthConfig &cfg) {
    Eigen::MatrixXd means = Eigen::MatrixXd::Zero(cfg.num_classes + 1, cfg.feature_dim);
    for (int c = 1; c <= cfg.num_classes; ++c) {
        means(c, c - 1) = cfg.separation;
    }
    return means;
}

SynthStream gen_stream(const SynthConfig &cfg) {
    return gen_stream(cfg, cfg.seed, Eigen::VectorXd::Zero(cfg.feature_dim), "seq_00", "subject_01");
}

SynthStream gen_stream(const SynthConfig &cfg, std::uint64_t seed,
                       const Eigen::VectorXd &subject_offset, const std::string &sequence_id,
                       const std::string &subject_id) {
    cfg.validate();
    if (subject_offset.size() != cfg.feature_dim) {
        throw Error("synth: subject offset dimension mismatch");
    }
    Rng rng(seed);
    const auto frames = frame_count(cfg.duration, cfg.fps);
    // Last frame boundary that still lies within the duration.
    const auto limit =
        std::min(frames, static_cast<std::int64_t>(std::floor(cfg.duration * cfg.fps + 1e-9)));

    auto to_frames = [&](double sec) {
        return std::max<std::int64_t>(1, std::llround(sec * cfg.fps));
    };
    auto draw = [&](double mean) { return cfg.fixed_durations ? mean : rng.exponential(mean); };

    SynthStream out;
    SequenceRecord &rec = out.record;
    rec.sequence_id = sequence_id;
    rec.subject_id = subject_id;
    rec.fps = cfg.fps;
    rec.duration = cfg.duration;
    rec.channels = cfg.feature_dim;
    rec.num_classes = cfg.num_classes;

    std::int64_t cursor = 0;
    std::int64_t first_gap = -1;
    int first_class = 0;
    std::int64_t first_len = 0;
    while (true) {
        const std::int64_t gap = to_frames(std::max(cfg.min_gap_sec, draw(cfg.mean_gap_sec)));
        const int cls = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.num_classes)));
        const std::int64_t len = to_frames(std::max(cfg.min_action_sec, draw(cfg.mean_action(cls))));
        if (first_gap < 0) {
            first_gap = gap;
            first_class = cls;
            first_len = len;
        }
        const std::int64_t start = cursor + gap;
        if (start + len > limit) {
            break;
        }
        rec.gt.push_back({cls, static_cast<double>(start) / cfg.fps,
                          static_cast<double>(start + len) / cfg.fps, std::nullopt});
        cursor = start + len;
    }
    if (rec.gt.empty()) {
        // The first draw did not fit; shrink it into the stream.
        const std::int64_t len = std::min(first_len, limit - 1);
        const std::int64_t start = std::min(first_gap, limit - len);
        rec.gt.push_back({first_class, static_cast<double>(start) / cfg.fps,
                          static_cast<double>(start + len) / cfg.fps, std::nullopt});
    }

    const auto labels = rasterize(rec.gt, cfg.fps, cfg.duration);
    const Eigen::MatrixXd means = class_means(cfg);
    out.features.resize(frames, cfg.feature_dim);
    for (std::int64_t t = 0; t < frames; ++t) {
        const int l = labels.labels[static_cast<std::size_t>(t)];
        for (int d = 0; d < cfg.feature_dim; ++d) {
            const double noise = cfg.noise > 0.0 ? cfg.noise * rng.normal() : 0.0;
            out.features(t, d) = means(l, d) + subject_offset(d) + noise;
        }
    }
    return out;
}

SynthDataset gen_benchmark(const SynthConfig &cfg) {
    cfg.validate();
    SynthDataset data;
    for (int k = 0; k < cfg.subjects; ++k) {
        Eigen::VectorXd offset = Eigen::VectorXd::Zero(cfg.feature_dim);
        if (cfg.subject_shift > 0.0) {
            Rng rng(derive_seed(cfg.seed, {kShiftStream, static_cast<std::uint64_t>(k)}));
            for (int d = 0; d < cfg.feature_dim; ++d) {
                offset(d) = cfg.subject_shift * rng.normal();
            }
        }
        for (int m = 0; m < cfg.sequences_per_subject; ++m) {
            const auto seed = derive_seed(cfg.seed, {static_cast<std::uint64_t>(k),
                                                     static_cast<std::uint64_t>(m)});
            data.streams.push_back(gen_stream(cfg, seed, offset, sequence_name(k, m), subject_name(k)));
        }
    }
    return data;
}

void write_dataset(const fs::path &dir, const SynthDataset &data) {
    fs::create_directories(dir / "features");
    std::vector<SequenceRecord> records;
    SegmentTable gt;
    for (const auto &s : data.streams) {
        records.push_back(s.record);
        gt[s.record.sequence_id] = s.record.gt;
        write_matrix_csv(dir / "features" / (s.record.sequence_id + ".csv"), s.features);
    }
    write_metadata_jsonl(dir / "metadata.jsonl", records);
    write_segments_jsonl(dir / "gt.jsonl", gt);
}

SynthDataset read_dataset(const fs::path &dir) {
    for (const auto &name : {"metadata.jsonl", "gt.jsonl"}) {
        if (!fs::exists(dir / name)) {
            throw Error("missing dataset file " + (dir / name).string());
        }
    }
    const auto records = read_metadata_jsonl(dir / "metadata.jsonl");
    const auto gt = read_segments_jsonl(dir / "gt.jsonl");
    SynthDataset data;
    for (const auto &r : records) {
        SynthStream s;
        s.record = r;
        if (const auto it = gt.find(r.sequence_id); it != gt.end()) {
            s.record.gt = it->second;
        }
        validate(s.record);
        const auto path = dir / "features" / (r.sequence_id + ".csv");
        if (!fs::exists(path)) {
            throw Error("missing dataset file " + path.string());
        }
        s.features = read_matrix_csv(path);
        if (s.features.rows() != r.num_frames()) {
            throw Error(path.string() + ": expected " + std::to_string(r.num_frames()) +
                        " rows, found " + std::to_string(s.features.rows()));
        }
        data.streams.push_back(std::move(s));
    }
    return data;
}

} // namespace wstal
