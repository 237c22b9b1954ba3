#pragma once

#include "wstal/core.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <vector>

namespace wstal {

struct SynthConfig {
    int num_classes = 3;
    double fps = 10.0;
    double duration = 300.0;
    /// Mean action duration in seconds; one entry per class, or a single entry for all.
    std::vector<double> mean_action_sec{8.0};
    double mean_gap_sec = 6.0;
    /// Floors on sampled gap and action durations; keeps events longer than the CAS
    /// smoothing window.
    double min_gap_sec = 1.0;
    double min_action_sec = 1.0;
    int feature_dim = 6;
    double separation = 3.0; ///< distance of each class mean from the null mean
    double noise = 1.0;      ///< per-dimension Gaussian noise sigma
    std::uint64_t seed = 2022;
    /// Use the configured means as exact durations instead of exponential draws.
    bool fixed_durations = false;
    /// Sigma of the per-subject mean offset added to every frame.
    double subject_shift = 0.0;
    int subjects = 5;
    int sequences_per_subject = 2;

    double mean_action(int class_id) const;
    void validate() const;
};

struct SynthStream {
    SequenceRecord record;
    Eigen::MatrixXd features; ///< round(duration * fps) x feature_dim
};

/// Class mean vectors, row c for class c (row 0 is the null class at the origin).
Eigen::MatrixXd class_means(const SynthConfig &cfg);

/// Alternating null gaps and actions with exponential durations snapped to the frame
/// grid, classes uniform over 1..C, and features drawn around the frame's class mean.
SynthStream gen_stream(const SynthConfig &cfg);

/// Same generator with an explicit seed, subject offset and identifiers.
SynthStream gen_stream(const SynthConfig &cfg, std::uint64_t seed,
                       const Eigen::VectorXd &subject_offset, const std::string &sequence_id,
                       const std::string &subject_id);

struct SynthDataset {
    std::vector<SynthStream> streams;
};

/// `subjects` x `sequences_per_subject` streams; each subject gets its own mean offset.
SynthDataset gen_benchmark(const SynthConfig &cfg);

/// Layout: metadata.jsonl, gt.jsonl, features/<sequence_id>.csv.
void write_dataset(const std::filesystem::path &dir, const SynthDataset &data);
SynthDataset read_dataset(const std::filesystem::path &dir);

} // namespace wstal
