#pragma once

#include "wstal/core.hpp"
#include "wstal/proposals.hpp"
#include "wstal/trainer.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace wstal {

using Json = nlohmann::json;

/// Segments grouped by sequence id.
using SegmentTable = std::map<std::string, std::vector<Segment>>;

/// Shortest round-trip decimal text for a double.
std::string format_double(double v);

Json segment_to_json(const std::string &sequence_id, const Segment &s);
Segment segment_from_json(const Json &j);

/// JSON Lines: {"sequence_id", "class_id", "start", "end"[, "score"]} per line.
SegmentTable read_segments_jsonl(const std::filesystem::path &path);
SegmentTable parse_segments_jsonl(std::istream &in, const std::string &origin = "<stream>");
void write_segments_jsonl(std::ostream &out, const SegmentTable &table);
void write_segments_jsonl(const std::filesystem::path &path, const SegmentTable &table);

/// Sequence metadata, one JSON object per line; gt is left empty.
Json record_to_json(const SequenceRecord &r);
SequenceRecord record_from_json(const Json &j);
std::vector<SequenceRecord> read_metadata_jsonl(const std::filesystem::path &path);
void write_metadata_jsonl(const std::filesystem::path &path,
                          const std::vector<SequenceRecord> &records);

/// Numeric CSV without header, one row per line.
Eigen::MatrixXd read_matrix_csv(const std::filesystem::path &path);
void write_matrix_csv(const std::filesystem::path &path, const Eigen::MatrixXd &m);
void write_matrix_csv(std::ostream &out, const Eigen::MatrixXd &m);

/// "feat_start,feat_end" header followed by one box per line.
void write_proposals_csv(std::ostream &out, const ProposalSet &set);

ProposalConfig proposal_config_from_json(const Json &j);
Json proposal_config_to_json(const ProposalConfig &cfg);

TrainConfig train_config_from_json(const Json &j, TrainConfig base = {});
Json train_config_to_json(const TrainConfig &cfg);

Json model_to_json(const ToyModel &m);
ToyModel model_from_json(const Json &j);

Json read_json_file(const std::filesystem::path &path);
void write_text_file(const std::filesystem::path &path, const std::string &text);
std::string read_text_file(const std::filesystem::path &path);

} // namespace wstal
