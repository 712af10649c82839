#include "bic/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "bic/errors.hpp"

namespace bic {
namespace {

const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys = {
        "run.variant",          "run.seed",
        "run.out_dir",          "dataset.kind",
        "dataset.train_images", "dataset.train_labels",
        "dataset.test_images",  "dataset.test_labels",
        "dataset.blobs.classes", "dataset.blobs.train_per_class",
        "dataset.blobs.test_per_class", "dataset.blobs.dim",
        "dataset.blobs.spread", "dataset.blobs.seed",
        "schedule.order",       "schedule.order_seed",
        "schedule.steps",       "schedule.increments",
        "model.hidden",         "train.epochs",
        "train.lr",             "train.lr_decay_at",
        "train.lr_decay_factor", "train.momentum",
        "train.weight_decay",   "train.batch_size",
        "train.temperature",    "bic.split",
        "bic.method",           "bic.epochs",
        "bic.lr",               "bic.box",
        "exemplar.budget",
        "exemplar.selection",
    };
    return keys;
}

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return {};
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::vector<std::string> split_list(const std::string& text, char sep = ',') {
    std::vector<std::string> out;
    std::istringstream is(text);
    std::string item;
    while (std::getline(is, item, sep)) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& value) {
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    if (ec != std::errc{} || ptr != value.data() + value.size() || value.empty()) {
        throw ConfigError(key + ": expected a non-negative integer, got '" + value + "'");
    }
    return v;
}

double to_double(const std::string& key, const std::string& value) {
    std::istringstream is(value);
    is.imbue(std::locale::classic());
    double v = 0.0;
    is >> v;
    if (value.empty() || is.fail() || !is.eof()) {
        throw ConfigError(key + ": expected a number, got '" + value + "'");
    }
    return v;
}

std::string join(const std::vector<std::string>& parts, char sep = ',') {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

template <typename T, typename F>
std::string join_map(const std::vector<T>& values, F f) {
    std::vector<std::string> parts;
    for (const auto& v : values) parts.push_back(f(v));
    return join(parts);
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& value) {
    std::filesystem::path p(value);
    return p.is_absolute() || base.empty() ? p : base / p;
}

std::map<std::string, std::string> parse_overrides(const std::vector<std::string>& extras) {
    std::map<std::string, std::string> kv;
    for (std::size_t i = 0; i < extras.size(); ++i) {
        const std::string& arg = extras[i];
        if (arg.rfind("--", 0) != 0) throw ConfigError("unexpected argument '" + arg + "'");
        std::string key = arg.substr(2);
        std::string value;
        if (auto eq = key.find('='); eq != std::string::npos) {
            value = key.substr(eq + 1);
            key = key.substr(0, eq);
        } else {
            if (i + 1 >= extras.size()) throw ConfigError(key + ": missing value");
            value = extras[++i];
        }
        if (!known_keys().contains(key)) throw ConfigError(key + ": unknown configuration key");
        kv[key] = value;
    }
    return kv;
}

std::filesystem::path output_root(const ExperimentConfig& cfg, const std::string& fallback_leaf) {
    if (!cfg.out_dir.empty()) return cfg.out_dir;
    if (const char* env = std::getenv("BIC_OUT_DIR"); env && *env) {
        return std::filesystem::path(env) / fallback_leaf;
    }
    throw ConfigError("run.out_dir: not set and BIC_OUT_DIR is unset");
}

RunReport run_variant(const ExperimentConfig& base, Variant v,
                      const std::filesystem::path& dir) {
    ExperimentConfig cfg = base;
    cfg.train.variant = v;
    return run_experiment(cfg, dir / "checkpoints");
}

struct Column {
    std::string name;
    RunReport report;
};

void write_grid(const std::filesystem::path& path, const std::vector<Column>& columns) {
    std::string csv = "step,classes_seen";
    for (const auto& c : columns) csv += "," + c.name;
    csv += "\n";
    const std::size_t steps = columns.empty() ? 0 : columns.front().report.steps.size();
    for (std::size_t t = 0; t < steps; ++t) {
        csv += std::to_string(t) + "," +
               std::to_string(columns.front().report.steps[t].classes_seen());
        for (const auto& c : columns) csv += "," + format_number(c.report.steps.at(t).accuracy);
        csv += "\n";
    }
    write_file_atomic(path, csv);
}

/// Runs jobs sequentially or one thread each; rethrows the first failure with its name.
template <typename Job>
std::vector<Column> run_jobs(const std::vector<std::string>& names, bool parallel, Job job) {
    std::vector<Column> columns(names.size());
    std::vector<std::string> errors(names.size());
    auto one = [&](std::size_t i) {
        try {
            columns[i] = Column{names[i], job(i)};
        } catch (const std::exception& e) {
            errors[i] = e.what();
        }
    };
    if (parallel) {
        std::vector<std::thread> workers;
        for (std::size_t i = 0; i < names.size(); ++i) workers.emplace_back(one, i);
        for (auto& w : workers) w.join();
    } else {
        for (std::size_t i = 0; i < names.size(); ++i) {
            one(i);
            if (!errors[i].empty()) break;
        }
    }
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (!errors[i].empty()) throw Error(names[i] + " failed: " + errors[i]);
    }
    return columns;
}

int cmd_run(const std::string& config, const std::vector<std::string>& extras,
            const std::string& variant, const std::string& seed, const std::string& out,
            std::ostream& os) {
    auto overrides = parse_overrides(extras);
    if (!variant.empty()) overrides["run.variant"] = variant;
    if (!seed.empty()) overrides["run.seed"] = seed;
    if (!out.empty()) overrides["run.out_dir"] = out;
    auto cfg = load_experiment_config(config, overrides);
    const auto dir = output_root(cfg, std::string(variant_name(cfg.train.variant)) + "-seed" +
                                          std::to_string(cfg.train.seed));
    auto report = run_experiment(cfg, dir / "checkpoints");
    emit_report(report, dir);
    os << "variant " << report.variant << " seed " << report.seed << " final accuracy "
       << format_number(report.final_accuracy()) << " -> " << dir.string() << "\n";
    return 0;
}

int cmd_ablate(const std::string& config, const std::vector<std::string>& extras,
               const std::string& seed, const std::string& out, const std::string& ratios,
               const std::string& selections, bool parallel, std::ostream& os) {
    auto overrides = parse_overrides(extras);
    if (!seed.empty()) overrides["run.seed"] = seed;
    if (!out.empty()) overrides["run.out_dir"] = out;
    auto cfg = load_experiment_config(config, overrides);
    std::vector<SplitRatio> ratio_list;
    for (const auto& r : split_list(ratios)) ratio_list.push_back(SplitRatio::parse(r));
    std::vector<ExemplarSelection> selection_list;
    for (const auto& s : split_list(selections)) selection_list.push_back(parse_selection(s));
    const auto root = output_root(cfg, "ablate-seed" + std::to_string(cfg.train.seed));

    std::vector<std::string> names;
    for (Variant v : kAllVariants) names.emplace_back(variant_name(v));
    auto columns = run_jobs(names, parallel, [&](std::size_t i) {
        return run_variant(cfg, kAllVariants[i], root / names[i]);
    });
    const double joint = columns.back().report.final_accuracy();
    for (auto& c : columns) {
        c.report.joint_final_accuracy = joint;
        emit_report(c.report, root / c.name);
    }
    write_grid(root / "ablation.csv", columns);

    auto final_of = [&](std::size_t i) { return columns[i].report.final_accuracy(); };
    os << "final accuracy:";
    for (std::size_t i = 0; i < columns.size(); ++i) {
        os << " " << columns[i].name << "=" << format_number(final_of(i));
    }
    os << "\n";
    const bool ordered = final_of(0) <= final_of(1) && final_of(1) <= final_of(2);
    os << "ordering baseline1 <= baseline2 <= bic at final step: "
       << (ordered ? "ok" : "VIOLATED") << "\n";

    if (!ratio_list.empty()) {
        std::vector<std::string> ratio_names;
        for (const auto& r : ratio_list) ratio_names.push_back(r.to_string());
        auto sweep = run_jobs(ratio_names, parallel, [&](std::size_t i) {
            ExperimentConfig c = cfg;
            c.train.split = ratio_list[i];
            std::string leaf = ratio_names[i];
            std::replace(leaf.begin(), leaf.end(), ':', '-');
            auto dir = root / ("ratio_" + leaf);
            auto report = run_variant(c, Variant::bic, dir);
            report.joint_final_accuracy = joint;
            emit_report(report, dir);
            return report;
        });
        write_grid(root / "ratio_sweep.csv", sweep);
        os << "ratio sweep (" << sweep.size() << " ratios x " << sweep.front().report.steps.size()
           << " steps) -> " << (root / "ratio_sweep.csv").string() << "\n";
    }
    if (!selection_list.empty()) {
        std::vector<std::string> sel_names;
        for (auto s : selection_list) sel_names.emplace_back(selection_name(s));
        auto sweep = run_jobs(sel_names, parallel, [&](std::size_t i) {
            ExperimentConfig c = cfg;
            c.train.selection = selection_list[i];
            auto dir = root / ("selection_" + sel_names[i]);
            auto report = run_variant(c, Variant::bic, dir);
            report.joint_final_accuracy = joint;
            emit_report(report, dir);
            return report;
        });
        write_grid(root / "selection_sweep.csv", sweep);
        os << "selection sweep -> " << (root / "selection_sweep.csv").string() << "\n";
    }
    os << "ablation -> " << (root / "ablation.csv").string() << "\n";
    return 0;
}

int cmd_report(const std::vector<std::string>& dirs, std::ostream& os, std::ostream& err) {
    std::vector<Column> columns;
    for (const auto& d : dirs) {
        try {
            columns.push_back({std::filesystem::path(d).filename().string(),
                               read_summary(std::filesystem::path(d) / "summary.json")});
        } catch (const Error& e) {
            err << "error: " << d << ": " << e.what() << "\n";
            return 1;
        }
        if (columns.back().name.empty()) columns.back().name = columns.back().report.variant;
    }
    std::optional<double> joint;
    for (const auto& c : columns) {
        if (c.report.variant == "joint_ub") joint = c.report.final_accuracy();
    }
    const std::size_t steps = columns.front().report.steps.size();
    for (const auto& c : columns) {
        if (c.report.steps.size() != steps) {
            err << "error: " << c.name << " has " << c.report.steps.size()
                << " steps, expected " << steps << "\n";
            return 1;
        }
    }
    os << "step,classes_seen";
    for (const auto& c : columns) os << "," << c.name;
    os << "\n";
    for (std::size_t t = 0; t < steps; ++t) {
        os << t << "," << columns.front().report.steps[t].classes_seen();
        for (const auto& c : columns) os << "," << format_number(c.report.steps[t].accuracy);
        os << "\n";
    }
    os << "degradation,";
    for (const auto& c : columns) {
        auto ub = joint ? joint : c.report.joint_final_accuracy;
        os << "," << (ub ? format_number(*ub - c.report.final_accuracy()) : std::string("n/a"));
    }
    os << "\n";
    return 0;
}

}  // namespace

std::map<std::string, std::string> parse_key_values(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream is(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("line " + std::to_string(line_no) + ": expected key=value");
        }
        const std::string key = trim(line.substr(0, eq));
        if (key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty key");
        kv[key] = trim(line.substr(eq + 1));
    }
    return kv;
}

ExperimentConfig ExperimentConfig::from_key_values(const std::map<std::string, std::string>& kv,
                                                   const std::filesystem::path& base_dir) {
    ExperimentConfig c;
    for (const auto& [key, value] : kv) {
        if (!known_keys().contains(key)) throw ConfigError(key + ": unknown configuration key");
    }
    auto get = [&](const std::string& key) -> const std::string* {
        auto it = kv.find(key);
        return it == kv.end() ? nullptr : &it->second;
    };
    auto u64 = [&](const std::string& key, auto& field) {
        if (auto v = get(key)) field = static_cast<std::remove_reference_t<decltype(field)>>(to_u64(key, *v));
    };
    auto real = [&](const std::string& key, double& field) {
        if (auto v = get(key)) field = to_double(key, *v);
    };

    if (auto v = get("run.variant")) c.train.variant = parse_variant(*v);
    u64("run.seed", c.train.seed);
    if (auto v = get("run.out_dir")) c.out_dir = *v;

    if (auto v = get("dataset.kind")) {
        if (*v == "idx") c.dataset.kind = DatasetSpec::Kind::idx;
        else if (*v == "blobs") c.dataset.kind = DatasetSpec::Kind::blobs;
        else throw ConfigError("dataset.kind: expected idx or blobs, got '" + *v + "'");
    }
    if (auto v = get("dataset.train_images")) c.dataset.train_images = resolve(base_dir, *v);
    if (auto v = get("dataset.train_labels")) c.dataset.train_labels = resolve(base_dir, *v);
    if (auto v = get("dataset.test_images")) c.dataset.test_images = resolve(base_dir, *v);
    if (auto v = get("dataset.test_labels")) c.dataset.test_labels = resolve(base_dir, *v);
    u64("dataset.blobs.classes", c.dataset.blobs.num_classes);
    u64("dataset.blobs.train_per_class", c.dataset.blobs.per_class);
    u64("dataset.blobs.test_per_class", c.dataset.blob_test_per_class);
    u64("dataset.blobs.dim", c.dataset.blobs.dim);
    real("dataset.blobs.spread", c.dataset.blobs.spread);
    u64("dataset.blobs.seed", c.dataset.blobs.seed);

    if (auto v = get("schedule.order")) c.schedule.order = *v;
    u64("schedule.order_seed", c.schedule.order_seed);
    u64("schedule.steps", c.schedule.steps);
    if (auto v = get("schedule.increments")) {
        c.schedule.increments.clear();
        for (const auto& s : split_list(*v)) c.schedule.increments.push_back(to_u64("schedule.increments", s));
    }

    if (auto v = get("model.hidden")) {
        c.train.hidden.clear();
        for (const auto& s : split_list(*v)) c.train.hidden.push_back(to_u64("model.hidden", s));
    }
    u64("train.epochs", c.train.epochs);
    real("train.lr", c.train.base_lr);
    if (auto v = get("train.lr_decay_at")) {
        c.train.lr_decay_at.clear();
        for (const auto& s : split_list(*v)) c.train.lr_decay_at.push_back(to_double("train.lr_decay_at", s));
    }
    real("train.lr_decay_factor", c.train.lr_decay_factor);
    real("train.momentum", c.train.momentum);
    real("train.weight_decay", c.train.weight_decay);
    u64("train.batch_size", c.train.batch_size);
    real("train.temperature", c.train.temperature);

    if (auto v = get("bic.split")) {
        try {
            c.train.split = SplitRatio::parse(*v);
        } catch (const ConfigError& e) {
            throw ConfigError(std::string("bic.split: ") + e.what());
        }
    }
    if (auto v = get("bic.method")) {
        if (*v == "newton") c.train.bias_fit.method = BiasOptimizer::newton;
        else if (*v == "gd") c.train.bias_fit.method = BiasOptimizer::gradient_descent;
        else throw ConfigError("bic.method: expected newton or gd, got '" + *v + "'");
    }
    u64("bic.epochs", c.train.bias_fit.epochs);
    real("bic.lr", c.train.bias_fit.learning_rate);
    if (auto v = get("bic.box")) {
        if (*v == "none") {
            c.train.bias_fit.box.reset();
        } else {
            const auto parts = split_list(*v);
            if (parts.size() != 4) {
                throw ConfigError("bic.box: expected none or alpha_min,alpha_max,beta_min,beta_max");
            }
            BiasBox box{to_double("bic.box", parts[0]), to_double("bic.box", parts[1]),
                        to_double("bic.box", parts[2]), to_double("bic.box", parts[3])};
            if (!box.contains(1.0, 0.0)) throw ConfigError("bic.box: must contain alpha=1, beta=0");
            c.train.bias_fit.box = box;
        }
    }
    u64("exemplar.budget", c.train.exemplar_budget);
    if (auto v = get("exemplar.selection")) c.train.selection = parse_selection(*v);

    c.train.validate();
    if (c.dataset.kind == DatasetSpec::Kind::idx) {
        for (auto [key, path] : {std::pair{"dataset.train_images", &c.dataset.train_images},
                                 std::pair{"dataset.train_labels", &c.dataset.train_labels},
                                 std::pair{"dataset.test_images", &c.dataset.test_images},
                                 std::pair{"dataset.test_labels", &c.dataset.test_labels}}) {
            if (path->empty()) throw ConfigError(std::string(key) + ": required for dataset.kind=idx");
        }
    }
    if (c.schedule.increments.empty() && c.schedule.steps == 0) {
        throw ConfigError("schedule.steps: must be >= 1");
    }
    return c;
}

std::map<std::string, std::string> ExperimentConfig::to_key_values() const {
    std::map<std::string, std::string> kv;
    const auto& t = train;
    kv["run.variant"] = std::string(variant_name(t.variant));
    kv["run.seed"] = std::to_string(t.seed);
    kv["dataset.kind"] = dataset.kind == DatasetSpec::Kind::idx ? "idx" : "blobs";
    if (dataset.kind == DatasetSpec::Kind::idx) {
        kv["dataset.train_images"] = dataset.train_images.string();
        kv["dataset.train_labels"] = dataset.train_labels.string();
        kv["dataset.test_images"] = dataset.test_images.string();
        kv["dataset.test_labels"] = dataset.test_labels.string();
    } else {
        kv["dataset.blobs.classes"] = std::to_string(dataset.blobs.num_classes);
        kv["dataset.blobs.train_per_class"] = std::to_string(dataset.blobs.per_class);
        kv["dataset.blobs.test_per_class"] = std::to_string(dataset.blob_test_per_class);
        kv["dataset.blobs.dim"] = std::to_string(dataset.blobs.dim);
        kv["dataset.blobs.spread"] = format_number(dataset.blobs.spread, 17);
        kv["dataset.blobs.seed"] = std::to_string(dataset.blobs.seed);
    }
    kv["schedule.order"] = schedule.order;
    kv["schedule.order_seed"] = std::to_string(schedule.order_seed);
    if (schedule.increments.empty()) {
        kv["schedule.steps"] = std::to_string(schedule.steps);
    } else {
        kv["schedule.increments"] =
            join_map(schedule.increments, [](std::size_t v) { return std::to_string(v); });
    }
    kv["model.hidden"] = join_map(t.hidden, [](std::size_t v) { return std::to_string(v); });
    kv["train.epochs"] = std::to_string(t.epochs);
    kv["train.lr"] = format_number(t.base_lr, 17);
    kv["train.lr_decay_at"] = join_map(t.lr_decay_at, [](double v) { return format_number(v, 17); });
    kv["train.lr_decay_factor"] = format_number(t.lr_decay_factor, 17);
    kv["train.momentum"] = format_number(t.momentum, 17);
    kv["train.weight_decay"] = format_number(t.weight_decay, 17);
    kv["train.batch_size"] = std::to_string(t.batch_size);
    kv["train.temperature"] = format_number(t.temperature, 17);
    kv["bic.split"] = t.split.to_string();
    kv["bic.method"] = t.bias_fit.method == BiasOptimizer::newton ? "newton" : "gd";
    kv["bic.epochs"] = std::to_string(t.bias_fit.epochs);
    kv["bic.lr"] = format_number(t.bias_fit.learning_rate, 17);
    if (const auto& b = t.bias_fit.box) {
        kv["bic.box"] = format_number(b->alpha_min, 17) + "," + format_number(b->alpha_max, 17) +
                        "," + format_number(b->beta_min, 17) + "," + format_number(b->beta_max, 17);
    } else {
        kv["bic.box"] = "none";
    }
    kv["exemplar.budget"] = std::to_string(t.exemplar_budget);
    kv["exemplar.selection"] = std::string(selection_name(t.selection));
    return kv;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path,
                                        const std::map<std::string, std::string>& overrides) {
    std::ifstream is(path);
    if (!is) throw ConfigError("config: cannot open " + path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    auto kv = parse_key_values(ss.str());
    for (const auto& [k, v] : overrides) kv[k] = v;
    return ExperimentConfig::from_key_values(kv, path.parent_path());
}

Dataset load_dataset(const DatasetSpec& spec) {
    Dataset d;
    if (spec.kind == DatasetSpec::Kind::idx) {
        d.train = load_idx(spec.train_images, spec.train_labels, 0);
        d.test = load_idx(spec.test_images, spec.test_labels, d.train.size());
    } else {
        d.train = make_blobs(spec.blobs, 0, 0);
        BlobSpec test_spec = spec.blobs;
        test_spec.per_class = spec.blob_test_per_class;
        d.test = make_blobs(test_spec, 1, d.train.size());
    }
    if (d.train.empty()) throw DataError("training set is empty");
    d.feature_dim = d.train.front().features.size();
    return d;
}

ClassSchedule build_schedule(const ScheduleSpec& spec, const Dataset& dataset) {
    auto labels = distinct_labels(dataset.train);
    std::vector<ClassId> order;
    if (spec.order == "natural") {
        order = labels;
    } else if (spec.order == "random") {
        order = random_class_order(labels, spec.order_seed);
    } else {
        order = read_class_order(spec.order);
    }
    if (!spec.increments.empty()) return ClassSchedule{order, spec.increments};
    return equal_schedule(order, spec.steps);
}

RunReport run_experiment(const ExperimentConfig& cfg,
                         const std::optional<std::filesystem::path>& checkpoint_dir) {
    const Dataset data = load_dataset(cfg.dataset);
    const ClassSchedule plan = build_schedule(cfg.schedule, data);
    RunOptions options;
    options.checkpoint_dir = checkpoint_dir;
    options.config_echo = cfg.to_key_values();
    return run_experiment(data, plan, cfg.train, options);
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Class-incremental learning with bias correction"};
    app.require_subcommand(1);

    std::string config, variant, seed, out_dir, ratios, selections;
    bool parallel = false;
    std::vector<std::string> dirs;

    auto* run = app.add_subcommand("run", "Run one variant over all increments");
    run->add_option("--config", config, "key=value config file")->required();
    run->add_option("--variant", variant, "baseline1|baseline2|bic|fc_retrain_ub|joint_ub");
    run->add_option("--seed", seed, "seed for every stochastic component");
    run->add_option("--out", out_dir, "output directory");
    run->allow_extras();

    auto* ablate = app.add_subcommand("ablate", "Run all five variants with a shared seed");
    ablate->add_option("--config", config, "key=value config file")->required();
    ablate->add_option("--seed", seed, "seed for every stochastic component");
    ablate->add_option("--out", out_dir, "output root");
    ablate->add_option("--ratios", ratios, "split-ratio sweep for bic, e.g. 9:1,8:2,7:3,6:4");
    ablate->add_option("--selections", selections, "exemplar strategy sweep, e.g. herding,random");
    ablate->add_flag("--parallel", parallel, "run variants as concurrent workers");
    ablate->allow_extras();

    auto* report = app.add_subcommand("report", "Compare finished runs");
    report->add_option("dirs", dirs, "run directories containing summary.json")->required();

    std::vector<std::string> argv_rev(args.rbegin(), args.rend());
    if (!argv_rev.empty()) argv_rev.pop_back();  // program name
    try {
        app.parse(argv_rev);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }

    try {
        if (run->parsed()) return cmd_run(config, run->remaining(), variant, seed, out_dir, out);
        if (ablate->parsed()) {
            return cmd_ablate(config, ablate->remaining(), seed, out_dir, ratios, selections,
                              parallel, out);
        }
        if (report->parsed()) return cmd_report(dirs, out, err);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}

}  // namespace bic
