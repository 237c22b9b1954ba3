#include "wstal/io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace wstal {

namespace fs = std::filesystem;

namespace {

std::ifstream open_in(const fs::path &path) {
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open " + path.string());
    }
    return in;
}

std::ofstream open_out(const fs::path &path) {
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error("cannot write " + path.string());
    }
    return out;
}

template <typename T>
void read_opt(const Json &j, const char *key, T &dst) {
    if (j.contains(key)) {
        dst = j.at(key).get<T>();
    }
}

Json vector_json(const Eigen::VectorXd &v) {
    Json a = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        a.push_back(v(i));
    }
    return a;
}

Eigen::VectorXd vector_from_json(const Json &j) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
    }
    return v;
}

} // namespace

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

Json segment_to_json(const std::string &sequence_id, const Segment &s) {
    Json j;
    j["sequence_id"] = sequence_id;
    j["class_id"] = s.class_id;
    j["start"] = s.start;
    j["end"] = s.end;
    if (s.score) {
        j["score"] = *s.score;
    }
    return j;
}

Segment segment_from_json(const Json &j) {
    Segment s;
    s.class_id = j.at("class_id").get<int>();
    s.start = j.at("start").get<double>();
    s.end = j.at("end").get<double>();
    if (j.contains("score") && !j.at("score").is_null()) {
        s.score = j.at("score").get<double>();
    }
    if (s.class_id < 1) {
        throw Error("segment class_id must be >= 1");
    }
    if (s.start < 0.0 || !(s.end > s.start)) {
        throw Error("segment must satisfy 0 <= start < end");
    }
    return s;
}

SegmentTable parse_segments_jsonl(std::istream &in, const std::string &origin) {
    SegmentTable table;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        try {
            const Json j = Json::parse(line);
            table[j.at("sequence_id").get<std::string>()].push_back(segment_from_json(j));
        } catch (const std::exception &e) {
            throw Error(origin + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return table;
}

SegmentTable read_segments_jsonl(const fs::path &path) {
    auto in = open_in(path);
    return parse_segments_jsonl(in, path.string());
}

void write_segments_jsonl(std::ostream &out, const SegmentTable &table) {
    for (const auto &[id, segs] : table) {
        for (const auto &s : segs) {
            out << segment_to_json(id, s).dump() << '\n';
        }
    }
}

void write_segments_jsonl(const fs::path &path, const SegmentTable &table) {
    auto out = open_out(path);
    write_segments_jsonl(out, table);
}

Json record_to_json(const SequenceRecord &r) {
    Json j;
    j["sequence_id"] = r.sequence_id;
    j["subject_id"] = r.subject_id;
    j["fps"] = r.fps;
    j["duration"] = r.duration;
    j["channels"] = r.channels;
    j["num_classes"] = r.num_classes;
    return j;
}

SequenceRecord record_from_json(const Json &j) {
    SequenceRecord r;
    r.sequence_id = j.at("sequence_id").get<std::string>();
    r.subject_id = j.at("subject_id").get<std::string>();
    r.fps = j.at("fps").get<double>();
    r.duration = j.at("duration").get<double>();
    r.channels = j.at("channels").get<int>();
    r.num_classes = j.at("num_classes").get<int>();
    return r;
}

std::vector<SequenceRecord> read_metadata_jsonl(const fs::path &path) {
    auto in = open_in(path);
    std::vector<SequenceRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        try {
            out.push_back(record_from_json(Json::parse(line)));
        } catch (const std::exception &e) {
            throw Error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

void write_metadata_jsonl(const fs::path &path, const std::vector<SequenceRecord> &records) {
    auto out = open_out(path);
    for (const auto &r : records) {
        out << record_to_json(r).dump() << '\n';
    }
}

Eigen::MatrixXd read_matrix_csv(const fs::path &path) {
    auto in = open_in(path);
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        std::vector<double> row;
        const char *p = line.data();
        const char *end = line.data() + line.size();
        while (p < end) {
            while (p < end && (*p == ' ' || *p == '\t')) {
                ++p;
            }
            double v = 0.0;
            const auto res = std::from_chars(p, end, v);
            if (res.ec != std::errc()) {
                throw Error(path.string() + ":" + std::to_string(lineno) + ": not a number");
            }
            row.push_back(v);
            p = res.ptr;
            while (p < end && (*p == ' ' || *p == '\t' || *p == '\r')) {
                ++p;
            }
            if (p < end && *p == ',') {
                ++p;
            }
        }
        if (!rows.empty() && row.size() != rows.front().size()) {
            throw Error(path.string() + ":" + std::to_string(lineno) + ": ragged row");
        }
        rows.push_back(std::move(row));
    }
    const auto cols = rows.empty() ? 0 : rows.front().size();
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
        }
    }
    return m;
}

void write_matrix_csv(std::ostream &out, const Eigen::MatrixXd &m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            if (c > 0) {
                out << ',';
            }
            out << format_double(m(r, c));
        }
        out << '\n';
    }
}

void write_matrix_csv(const fs::path &path, const Eigen::MatrixXd &m) {
    auto out = open_out(path);
    write_matrix_csv(out, m);
}

void write_proposals_csv(std::ostream &out, const ProposalSet &set) {
    out << "feat_start,feat_end\n";
    for (const auto &b : set.boxes) {
        out << b.start << ',' << b.end << '\n';
    }
}

ProposalConfig proposal_config_from_json(const Json &j) {
    ProposalConfig cfg;
    read_opt(j, "feature_len", cfg.feature_len);
    read_opt(j, "count", cfg.count);
    read_opt(j, "fps", cfg.fps);
    read_opt(j, "window_sec", cfg.window_sec);
    read_opt(j, "min_sec", cfg.min_sec);
    read_opt(j, "max_sec", cfg.max_sec);
    read_opt(j, "sec_resolution", cfg.sec_resolution);
    read_opt(j, "fixed_keep_ratio", cfg.fixed_keep_ratio);
    read_opt(j, "seed", cfg.seed);
    if (j.contains("raw_frames") && !j.at("raw_frames").is_null()) {
        cfg.raw_frames = j.at("raw_frames").get<std::int64_t>();
    }
    return cfg;
}

Json proposal_config_to_json(const ProposalConfig &cfg) {
    Json j;
    j["feature_len"] = cfg.feature_len;
    j["count"] = cfg.count;
    j["fps"] = cfg.fps;
    j["window_sec"] = cfg.window_sec;
    j["min_sec"] = cfg.min_sec;
    j["max_sec"] = cfg.max_sec;
    j["sec_resolution"] = cfg.sec_resolution;
    j["fixed_keep_ratio"] = cfg.fixed_keep_ratio;
    j["seed"] = cfg.seed;
    j["raw_frames"] = cfg.raw_frames ? Json(*cfg.raw_frames) : Json(nullptr);
    return j;
}

TrainConfig train_config_from_json(const Json &j, TrainConfig base) {
    read_opt(j, "learning_rate", base.learning_rate);
    read_opt(j, "weight_decay", base.weight_decay);
    read_opt(j, "epochs", base.epochs);
    read_opt(j, "lr_decay", base.lr_decay);
    read_opt(j, "lr_decay_every", base.lr_decay_every);
    read_opt(j, "seed", base.seed);
    read_opt(j, "freeze_attention", base.freeze_attention);
    read_opt(j, "init_scale", base.init_scale);
    if (j.contains("pooling")) {
        base.pooling = pooling_from_string(j.at("pooling").get<std::string>());
    }
    return base;
}

Json train_config_to_json(const TrainConfig &cfg) {
    Json j;
    j["learning_rate"] = cfg.learning_rate;
    j["weight_decay"] = cfg.weight_decay;
    j["epochs"] = cfg.epochs;
    j["lr_decay"] = cfg.lr_decay;
    j["lr_decay_every"] = cfg.lr_decay_every;
    j["seed"] = cfg.seed;
    j["pooling"] = to_string(cfg.pooling);
    j["freeze_attention"] = cfg.freeze_attention;
    j["init_scale"] = cfg.init_scale;
    return j;
}

Json model_to_json(const ToyModel &m) {
    Json j;
    j["feature_dim"] = m.feature_dim();
    j["num_classes"] = m.num_classes();
    Json w = Json::array();
    for (Eigen::Index d = 0; d < m.w_cls.rows(); ++d) {
        w.push_back(vector_json(m.w_cls.row(d).transpose()));
    }
    j["w_cls"] = std::move(w);
    j["b_cls"] = vector_json(m.b_cls);
    j["w_att"] = vector_json(m.w_att);
    j["b_att"] = m.b_att;
    return j;
}

ToyModel model_from_json(const Json &j) {
    ToyModel m;
    const auto dim = j.at("feature_dim").get<Eigen::Index>();
    const auto classes = j.at("num_classes").get<Eigen::Index>();
    const Json &w = j.at("w_cls");
    if (static_cast<Eigen::Index>(w.size()) != dim) {
        throw Error("model: w_cls row count does not match feature_dim");
    }
    m.w_cls.resize(dim, classes);
    for (Eigen::Index d = 0; d < dim; ++d) {
        const auto row = vector_from_json(w[static_cast<std::size_t>(d)]);
        if (row.size() != classes) {
            throw Error("model: w_cls column count does not match num_classes");
        }
        m.w_cls.row(d) = row.transpose();
    }
    m.b_cls = vector_from_json(j.at("b_cls"));
    m.w_att = vector_from_json(j.at("w_att"));
    m.b_att = j.at("b_att").get<double>();
    if (m.b_cls.size() != classes || m.w_att.size() != dim) {
        throw Error("model: bias or attention shape mismatch");
    }
    return m;
}

Json read_json_file(const fs::path &path) {
    auto in = open_in(path);
    try {
        return Json::parse(in);
    } catch (const std::exception &e) {
        throw Error(path.string() + ": " + e.what());
    }
}

void write_text_file(const fs::path &path, const std::string &text) {
    auto out = open_out(path);
    out << text;
}

std::string read_text_file(const fs::path &path) {
    auto in = open_in(path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace wstal
