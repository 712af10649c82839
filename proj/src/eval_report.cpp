#include "bic/eval_report.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "bic/errors.hpp"
#include "json.hpp"

namespace bic {
namespace {

using nlohmann::json;

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream is(line);
    while (std::getline(is, cell, sep)) out.push_back(cell);
    if (!line.empty() && line.back() == sep) out.emplace_back();
    return out;
}

std::uint64_t parse_u64(const std::string& text, const std::filesystem::path& path) {
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size()) {
        throw FormatError(path.string() + ": expected an integer, got '" + text + "'");
    }
    return v;
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

json step_to_json(const StepReport& s) {
    json grid = json::array();
    for (std::size_t i = 0; i < s.confusion.classes(); ++i) {
        json row = json::array();
        for (std::size_t j = 0; j < s.confusion.classes(); ++j) row.push_back(s.confusion.at(i, j));
        grid.push_back(std::move(row));
    }
    json j = {
        {"step", s.step},
        {"old_classes", s.old_classes},
        {"new_classes", s.new_classes},
        {"classes_seen", s.classes_seen()},
        {"lambda", s.lambda},
        {"accuracy", s.accuracy},
        {"new_class_bias_ratio", s.bias_ratio ? json(*s.bias_ratio) : json(nullptr)},
        {"bias", s.bias ? json{{"alpha", s.bias->alpha}, {"beta", s.bias->beta}} : json(nullptr)},
        {"confusion", std::move(grid)},
        {"exemplars", {{"total", s.exemplars_total()}, {"per_class", s.exemplar_counts}}},
        {"val_per_class", s.val_per_class},
        {"train_samples", s.train_samples},
        {"stage1_loss", s.stage1_loss},
        {"warnings", s.warnings},
    };
    return j;
}

StepReport step_from_json(const json& j) {
    StepReport s;
    s.step = j.at("step").get<std::size_t>();
    s.old_classes = j.at("old_classes").get<std::size_t>();
    s.new_classes = j.at("new_classes").get<std::size_t>();
    s.lambda = j.at("lambda").get<double>();
    s.accuracy = j.at("accuracy").get<double>();
    if (!j.at("new_class_bias_ratio").is_null()) {
        s.bias_ratio = j.at("new_class_bias_ratio").get<double>();
    }
    if (!j.at("bias").is_null()) {
        s.bias = BiasParams{j.at("bias").at("alpha").get<double>(),
                            j.at("bias").at("beta").get<double>(), s.old_classes, s.new_classes};
    }
    const auto& grid = j.at("confusion");
    s.confusion = ConfusionMatrix(grid.size());
    for (std::size_t r = 0; r < grid.size(); ++r) {
        if (grid[r].size() != grid.size()) throw FormatError("confusion matrix is not square");
        for (std::size_t c = 0; c < grid.size(); ++c) s.confusion.add(r, c, grid[r][c].get<std::uint64_t>());
    }
    s.exemplar_counts = j.at("exemplars").at("per_class").get<std::vector<std::size_t>>();
    s.val_per_class = j.at("val_per_class").get<std::size_t>();
    s.train_samples = j.at("train_samples").get<std::size_t>();
    s.stage1_loss = j.at("stage1_loss").get<double>();
    s.warnings = j.at("warnings").get<std::vector<std::string>>();
    return s;
}

}  // namespace

void ConfusionMatrix::add(std::size_t truth, std::size_t predicted, std::uint64_t n) {
    if (truth >= classes_ || predicted >= classes_) {
        throw ArgumentError("confusion index out of range");
    }
    counts_[truth * classes_ + predicted] += n;
}

std::uint64_t ConfusionMatrix::row_sum(std::size_t truth) const {
    std::uint64_t s = 0;
    for (std::size_t j = 0; j < classes_; ++j) s += at(truth, j);
    return s;
}

std::uint64_t ConfusionMatrix::total() const {
    std::uint64_t s = 0;
    for (auto v : counts_) s += v;
    return s;
}

std::uint64_t ConfusionMatrix::trace() const {
    std::uint64_t s = 0;
    for (std::size_t i = 0; i < classes_; ++i) s += at(i, i);
    return s;
}

double ConfusionMatrix::accuracy() const {
    const auto t = total();
    return t == 0 ? 0.0 : static_cast<double>(trace()) / static_cast<double>(t);
}

EvalResult evaluate(const NetworkModel& model, const std::optional<BiasParams>& bias,
                    std::span<const LabeledSample> test, std::size_t old_classes,
                    std::size_t new_classes) {
    const std::size_t classes = old_classes + new_classes;
    if (model.output_dim() != classes) {
        throw ShapeError("evaluate: model has " + std::to_string(model.output_dim()) +
                         " outputs, expected " + std::to_string(classes));
    }
    for (const auto& s : test) {
        if (s.label >= classes) {
            throw DataError("evaluate: test sample " + std::to_string(s.id) + " has unseen class " +
                            std::to_string(s.label));
        }
    }
    EvalResult out{0.0, ConfusionMatrix(classes)};
    if (test.empty()) return out;
    DenseMatrix logits = forward(model, feature_matrix(test));
    if (bias) logits = apply_bias(logits, old_classes, *bias);
    std::size_t correct = 0;
    for (std::size_t r = 0; r < test.size(); ++r) {
        auto row = logits.row(r);
        const auto pred = static_cast<std::size_t>(
            std::max_element(row.begin(), row.end()) - row.begin());
        out.confusion.add(test[r].label, pred);
        if (pred == test[r].label) ++correct;
    }
    out.accuracy = static_cast<double>(correct) / static_cast<double>(test.size());
    return out;
}

double new_class_bias_ratio(const ConfusionMatrix& cm, std::size_t old_classes,
                            std::size_t new_classes) {
    if (old_classes == 0 || new_classes == 0) {
        throw ArgumentError("new_class_bias_ratio needs n >= 1 and m >= 1");
    }
    if (old_classes + new_classes != cm.classes()) {
        throw ShapeError("new_class_bias_ratio: n + m does not match the matrix size");
    }
    std::uint64_t to_new = 0;
    std::uint64_t old_total = 0;
    for (std::size_t i = 0; i < old_classes; ++i) {
        old_total += cm.row_sum(i);
        for (std::size_t j = old_classes; j < cm.classes(); ++j) to_new += cm.at(i, j);
    }
    if (old_total == 0) throw DataError("new_class_bias_ratio: no old-class test samples");
    return static_cast<double>(to_new) / static_cast<double>(old_total);
}

std::size_t StepReport::exemplars_total() const {
    std::size_t n = 0;
    for (auto c : exemplar_counts) n += c;
    return n;
}

std::optional<double> RunReport::degradation() const {
    if (!joint_final_accuracy || steps.empty()) return std::nullopt;
    return *joint_final_accuracy - final_accuracy();
}

std::string format_number(double value, int digits) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value, std::chars_format::general, digits);
    if (ec != std::errc{}) throw Error("format_number failed");
    return std::string(buf, ptr);
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw IoError("cannot open " + tmp.string() + " for writing");
        os << contents;
        if (!os) throw IoError("write failed for " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot replace " + path.string() + ": " + ec.message());
}

std::string summary_json(const RunReport& report) {
    json steps = json::array();
    for (const auto& s : report.steps) steps.push_back(step_to_json(s));
    const auto deg = report.degradation();
    json j = {
        {"variant", report.variant},
        {"seed", report.seed},
        {"config", report.config},
        {"class_order", report.class_order},
        {"steps", std::move(steps)},
        {"final_accuracy", report.final_accuracy()},
        {"joint_final_accuracy",
         report.joint_final_accuracy ? json(*report.joint_final_accuracy) : json(nullptr)},
        {"degradation", deg ? json(*deg) : json(nullptr)},
    };
    return j.dump(2) + "\n";
}

void emit_report(const RunReport& report, const std::filesystem::path& out_dir) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

    auto class_id = [&](std::size_t pos) {
        return pos < report.class_order.size() ? report.class_order[pos] : pos;
    };

    std::string acc = "step,classes_seen,variant,accuracy\n";
    for (const auto& s : report.steps) {
        acc += std::to_string(s.step) + "," + std::to_string(s.classes_seen()) + "," +
               report.variant + "," + format_number(s.accuracy) + "\n";
    }
    write_file_atomic(out_dir / "accuracy.csv", acc);

    for (const auto& s : report.steps) {
        std::string csv = "true\\pred";
        for (std::size_t j = 0; j < s.confusion.classes(); ++j) csv += "," + std::to_string(class_id(j));
        csv += "\n";
        for (std::size_t i = 0; i < s.confusion.classes(); ++i) {
            csv += std::to_string(class_id(i));
            for (std::size_t j = 0; j < s.confusion.classes(); ++j) {
                csv += "," + std::to_string(s.confusion.at(i, j));
            }
            csv += "\n";
        }
        write_file_atomic(out_dir / ("confusion_step" + std::to_string(s.step) + ".csv"), csv);
    }

    write_file_atomic(out_dir / "summary.json", summary_json(report));
}

RunReport read_summary(const std::filesystem::path& path) {
    json j;
    try {
        j = json::parse(read_text(path));
    } catch (const json::parse_error& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    try {
        RunReport r;
        r.variant = j.at("variant").get<std::string>();
        r.seed = j.at("seed").get<std::uint64_t>();
        r.config = j.at("config").get<std::map<std::string, std::string>>();
        r.class_order = j.at("class_order").get<std::vector<ClassId>>();
        for (const auto& s : j.at("steps")) r.steps.push_back(step_from_json(s));
        if (!j.at("joint_final_accuracy").is_null()) {
            r.joint_final_accuracy = j.at("joint_final_accuracy").get<double>();
        }
        return r;
    } catch (const json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

ConfusionCsv read_confusion_csv(const std::filesystem::path& path) {
    std::istringstream is(read_text(path));
    std::string line;
    if (!std::getline(is, line)) throw FormatError(path.string() + ": empty file");
    auto header = split(line, ',');
    ConfusionCsv out;
    for (std::size_t i = 1; i < header.size(); ++i) out.class_ids.push_back(parse_u64(header[i], path));
    const std::size_t n = out.class_ids.size();
    out.matrix = ConfusionMatrix(n);
    std::size_t r = 0;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        auto cells = split(line, ',');
        if (r >= n || cells.size() != n + 1) {
            throw FormatError(path.string() + ": row " + std::to_string(r) + " has wrong shape");
        }
        for (std::size_t c = 0; c < n; ++c) out.matrix.add(r, c, parse_u64(cells[c + 1], path));
        ++r;
    }
    if (r != n) throw FormatError(path.string() + ": expected " + std::to_string(n) + " rows");
    return out;
}

}  // namespace bic
