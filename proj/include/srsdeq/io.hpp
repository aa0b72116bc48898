#pragma once

// File formats: model and dataset JSON documents, the certification report
// (CSV body under a "# "-prefixed JSON header block) and the loss-trace CSV.

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "srsdeq/deq.hpp"
#include "srsdeq/errors.hpp"
#include "srsdeq/eval.hpp"
#include "srsdeq/linalg.hpp"
#include "srsdeq/training.hpp"

namespace srsdeq {

using json = nlohmann::json;

inline constexpr int kModelFormatVersion = 1;
inline constexpr int kDatasetFormatVersion = 1;
inline constexpr int kReportFormatVersion = 1;

namespace detail {

inline json matrix_to_json(const Matrix& m) {
    json rows = json::array();
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const auto row = m.row(r);
        rows.push_back(std::vector<double>(row.begin(), row.end()));
    }
    return rows;
}

inline Matrix matrix_from_json(const json& j, std::size_t rows, std::size_t cols,
                               const char* name) {
    if (!j.is_array() || j.size() != rows)
        throw FormatError(std::string("field ") + name + ": expected " + std::to_string(rows) +
                          " rows");
    std::vector<double> data;
    data.reserve(rows * cols);
    for (const auto& row : j) {
        if (!row.is_array() || row.size() != cols)
            throw FormatError(std::string("field ") + name + ": expected " + std::to_string(cols) +
                              " columns");
        for (const auto& v : row) data.push_back(v.get<double>());
    }
    return Matrix(rows, cols, std::move(data));
}

inline Vector vector_from_json(const json& j, std::size_t n, const char* name) {
    if (!j.is_array() || j.size() != n)
        throw FormatError(std::string("field ") + name + ": expected " + std::to_string(n) +
                          " entries");
    return Vector(j.get<std::vector<double>>());
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << text;
    out.flush();
    if (!out) throw IoError("write to '" + path + "' failed");
}

inline json parse_json(const std::string& text, const std::string& what) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw FormatError(what + ": " + e.what());
    }
}

/// Shortest text that round-trips the double.
inline std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace detail

inline json model_to_json(const DeqModel& m) {
    json j;
    j["version"] = kModelFormatVersion;
    j["hidden_dim"] = m.hidden_dim;
    j["input_dim"] = m.input_dim;
    j["num_classes"] = m.num_classes;
    j["gamma"] = m.cell.gamma;
    j["sigma_train"] = m.sigma_train;
    j["W"] = detail::matrix_to_json(m.cell.W);
    j["U"] = detail::matrix_to_json(m.cell.U);
    j["b"] = m.cell.b.values();
    j["V"] = detail::matrix_to_json(m.readout.V);
    j["c"] = m.readout.c.values();
    return j;
}

inline DeqModel model_from_json(const json& j) {
    try {
        if (!j.contains("version") || j.at("version").get<int>() != kModelFormatVersion)
            throw FormatError("model: unsupported version " +
                              (j.contains("version") ? j.at("version").dump() : "<missing>"));
        DeqModel m;
        m.hidden_dim = j.at("hidden_dim").get<std::size_t>();
        m.input_dim = j.at("input_dim").get<std::size_t>();
        m.num_classes = j.at("num_classes").get<std::size_t>();
        m.sigma_train = j.at("sigma_train").get<double>();
        m.cell.gamma = j.at("gamma").get<double>();
        m.cell.W = detail::matrix_from_json(j.at("W"), m.hidden_dim, m.hidden_dim, "W");
        m.cell.U = detail::matrix_from_json(j.at("U"), m.hidden_dim, m.input_dim, "U");
        m.cell.b = detail::vector_from_json(j.at("b"), m.hidden_dim, "b");
        m.readout.V = detail::matrix_from_json(j.at("V"), m.num_classes, m.hidden_dim, "V");
        m.readout.c = detail::vector_from_json(j.at("c"), m.num_classes, "c");
        validate_model(m);
        return m;
    } catch (const json::exception& e) {
        throw FormatError(std::string("model: ") + e.what());
    } catch (const DimensionError& e) {
        throw FormatError(std::string("model: ") + e.what());
    } catch (const ArgumentError& e) {
        throw FormatError(std::string("model: ") + e.what());
    }
}

inline void save_model(const std::string& path, const DeqModel& m) {
    detail::write_file(path, model_to_json(m).dump(1) + "\n");
}

inline DeqModel load_model(const std::string& path) {
    return model_from_json(detail::parse_json(detail::read_file(path), "model '" + path + "'"));
}

inline json dataset_to_json(const Dataset& d) {
    json j;
    j["version"] = kDatasetFormatVersion;
    j["dim"] = d.dim();
    j["num_classes"] = d.num_classes;
    json inputs = json::array();
    for (const auto& x : d.inputs) inputs.push_back(x.values());
    j["inputs"] = std::move(inputs);
    j["labels"] = d.labels;
    return j;
}

inline Dataset dataset_from_json(const json& j) {
    try {
        if (!j.contains("version") || j.at("version").get<int>() != kDatasetFormatVersion)
            throw FormatError("dataset: unsupported version");
        Dataset d;
        const auto dim = j.at("dim").get<std::size_t>();
        d.num_classes = j.at("num_classes").get<std::size_t>();
        for (const auto& row : j.at("inputs")) d.inputs.emplace_back(row.get<std::vector<double>>());
        d.labels = j.at("labels").get<std::vector<int>>();
        d.validate();
        if (!d.inputs.empty() && d.dim() != dim) throw FormatError("dataset: dim field mismatch");
        return d;
    } catch (const json::exception& e) {
        throw FormatError(std::string("dataset: ") + e.what());
    } catch (const DimensionError& e) {
        throw FormatError(std::string("dataset: ") + e.what());
    } catch (const ArgumentError& e) {
        throw FormatError(std::string("dataset: ") + e.what());
    }
}

inline void save_dataset(const std::string& path, const Dataset& d) {
    detail::write_file(path, dataset_to_json(d).dump() + "\n");
}

inline Dataset load_dataset(const std::string& path) {
    return dataset_from_json(detail::parse_json(detail::read_file(path), "dataset '" + path + "'"));
}

inline std::string loss_trace_csv(const std::vector<LossRecord>& trace) {
    std::string out = "epoch,step,loss\n";
    for (const auto& r : trace)
        out += std::to_string(r.epoch) + "," + std::to_string(r.step) + "," +
               detail::fmt_double(r.loss) + "\n";
    return out;
}

/// A certification report: the run's full parameter set plus one row per point.
struct Report {
    json header;
    std::vector<ReportRow> rows;
};

inline const std::vector<std::string>& report_columns() {
    static const std::vector<std::string> cols = {
        "point_index", "true_label", "predicted", "radius",    "mode",
        "status",      "p_a_lower",  "counts",    "pm_upper",  "n_a",
        "n_a_effective", "iters_total", "iters_saved", "pm_gap", "wall_time"};
    return cols;
}

inline std::string report_to_string(const Report& rep) {
    std::ostringstream out;
    json header = rep.header;
    header["format_version"] = kReportFormatVersion;
    std::istringstream hs(header.dump(2));
    for (std::string line; std::getline(hs, line);) out << "# " << line << "\n";

    const auto& cols = report_columns();
    for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
    out << "\n";
    auto opt = [](const auto& o) -> std::string {
        if (!o) return "";
        if constexpr (std::is_floating_point_v<std::decay_t<decltype(*o)>>)
            return detail::fmt_double(*o);
        else
            return std::to_string(*o);
    };
    for (const auto& r : rep.rows) {
        std::string status = r.status;
        for (char& ch : status)
            if (ch == ',' || ch == '\n' || ch == '\r') ch = ';';
        std::string counts;
        for (std::size_t i = 0; i < r.counts.size(); ++i)
            counts += (i ? ";" : "") + std::to_string(r.counts[i]);
        out << r.point_index << ',' << r.true_label << ',' << r.predicted << ','
            << detail::fmt_double(r.radius) << ',' << to_string(r.mode) << ',' << status << ','
            << detail::fmt_double(r.p_a_lower) << ',' << counts << ',' << opt(r.pm_upper) << ','
            << opt(r.n_a) << ',' << opt(r.n_a_effective) << ',' << r.iters_total << ','
            << opt(r.iters_saved) << ',' << opt(r.pm_gap) << ','
            << detail::fmt_double(r.wall_time) << "\n";
    }
    return out.str();
}

inline Report report_from_string(const std::string& text, const std::string& what = "report") {
    Report rep;
    std::istringstream in(text);
    std::string header_text;
    std::string line;
    bool saw_columns = false;
    std::size_t line_no = 0;
    auto fail = [&](const std::string& msg) {
        throw FormatError(what + ": line " + std::to_string(line_no) + ": " + msg);
    };
    auto split = [](const std::string& s, char sep) {
        std::vector<std::string> parts;
        std::string cur;
        for (char ch : s) {
            if (ch == sep) {
                parts.push_back(cur);
                cur.clear();
            } else {
                cur += ch;
            }
        }
        parts.push_back(cur);
        return parts;
    };
    try {
        while (std::getline(in, line)) {
            ++line_no;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.rfind("# ", 0) == 0 || line == "#") {
                header_text += line.size() > 2 ? line.substr(2) : "";
                header_text += "\n";
                continue;
            }
            if (line.empty()) continue;
            const auto fields = split(line, ',');
            if (!saw_columns) {
                if (fields != report_columns()) fail("unexpected column header");
                saw_columns = true;
                continue;
            }
            if (fields.size() != report_columns().size()) fail("wrong number of fields");
            ReportRow r;
            r.point_index = std::stoull(fields[0]);
            r.true_label = std::stoi(fields[1]);
            r.predicted = std::stoi(fields[2]);
            r.radius = std::stod(fields[3]);
            r.mode = parse_certify_mode(fields[4]);
            r.status = fields[5];
            r.p_a_lower = std::stod(fields[6]);
            if (!fields[7].empty())
                for (const auto& c : split(fields[7], ';')) r.counts.push_back(std::stoull(c));
            if (!fields[8].empty()) r.pm_upper = std::stod(fields[8]);
            if (!fields[9].empty()) r.n_a = std::stoull(fields[9]);
            if (!fields[10].empty()) r.n_a_effective = std::stoull(fields[10]);
            r.iters_total = std::stoull(fields[11]);
            if (!fields[12].empty()) r.iters_saved = std::stoll(fields[12]);
            if (!fields[13].empty()) r.pm_gap = std::stod(fields[13]);
            r.wall_time = std::stod(fields[14]);
            if (r.radius < 0.0) fail("negative radius");
            if (r.predicted == kAbstain && r.radius != 0.0) fail("abstained row with radius");
            rep.rows.push_back(std::move(r));
        }
    } catch (const std::invalid_argument&) {
        fail("malformed number");
    } catch (const std::out_of_range&) {
        fail("number out of range");
    } catch (const ArgumentError& e) {
        fail(e.what());
    }
    if (!saw_columns) throw FormatError(what + ": missing column header");
    rep.header = detail::parse_json(header_text.empty() ? "{}" : header_text, what + " header");
    if (rep.header.value("format_version", 0) != kReportFormatVersion)
        throw FormatError(what + ": unsupported report format version");
    return rep;
}

inline void save_report(const std::string& path, const Report& rep) {
    detail::write_file(path, report_to_string(rep));
}

inline Report load_report(const std::string& path) {
    return report_from_string(detail::read_file(path), "report '" + path + "'");
}

}  // namespace srsdeq
