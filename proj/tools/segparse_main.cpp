// Command-line interface: synthetic data generation, expert parsing,
// training, evaluation, and parse rendering.

#include <cstdio>
#include <filesystem>
#include <numeric>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "segparse/segparse.hpp"

namespace fs = std::filesystem;
using namespace segparse;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitIo = 2;
constexpr int kExitNumeric = 3;

nlohmann::json policy_header(const PolicyNet& net, const TrainConfig& cfg,
                             const std::string& algorithm, long long step) {
    return {{"kind", "policy"},
            {"input", shape_to_json(net.input_shape())},
            {"arch", arch_to_json(net.arch())},
            {"feature_side", cfg.feature_side},
            {"max_depth", cfg.max_depth},
            {"algorithm", algorithm},
            {"step", step},
            {"seed", cfg.seed}};
}

nlohmann::json critic_header(const CriticNet& net, const TrainConfig& cfg,
                             const std::string& algorithm, long long step) {
    return {{"kind", "critic"},
            {"input", shape_to_json(net.input_shape())},
            {"arch", arch_to_json(net.arch())},
            {"feature_side", cfg.feature_side},
            {"max_depth", cfg.max_depth},
            {"algorithm", algorithm},
            {"step", step},
            {"seed", cfg.seed}};
}

int run_generate(const GenConfig& cfg, const std::string& out_dir) {
    Dataset dataset = generate(cfg);
    save(dataset, out_dir, cfg.to_json());
    std::printf("generated %d items (%dx%d, %s) -> %s\n", cfg.count, cfg.side, cfg.side,
                cfg.guillotine_only ? "guillotine" : "rectangles", out_dir.c_str());
    return kExitOk;
}

int run_oracle(const std::string& data_dir, int depth, const std::string& trees_dir,
               const std::string& render_dir, int jobs) {
    const Dataset dataset = load(data_dir);
    if (!trees_dir.empty()) fs::create_directories(trees_dir);
    if (!render_dir.empty()) fs::create_directories(render_dir);
    double mean = 0.0;
    for (const DatasetItem& item : dataset.items) {
        const ParseTree tree = oracle_parse(item.grid, depth);
        const double acc = pixel_accuracy(tree.to_prediction(), item.grid);
        mean += acc;
        if (!trees_dir.empty()) save_tree(tree, trees_dir + "/" + item.id + ".tree.json");
        if (!render_dir.empty()) render(tree, item.grid, render_dir + "/" + item.id + ".png");
        std::printf("%s: accuracy %.6f, %d nodes\n", item.id.c_str(), acc, tree.size());
    }
    (void)jobs;
    std::printf("mean oracle accuracy over %zu items: %.6f\n", dataset.size(),
                mean / static_cast<double>(dataset.size()));
    return kExitOk;
}

int run_train(const std::string& data_dir, const std::string& algorithm_flag,
              const std::string& config_path, int folds, std::int64_t seed_flag,
              const std::string& out_dir, int jobs) {
    TrainSetup setup;
    if (!config_path.empty()) setup = make_train_setup(parse_config_file(config_path));
    const Dataset dataset = load(data_dir);
    if (!algorithm_flag.empty()) setup.baseline.algorithm = parse_algorithm(algorithm_flag);
    if (seed_flag >= 0) setup.train.seed = static_cast<std::uint64_t>(seed_flag);
    setup.train.jobs = jobs;
    const std::string algo_name = algorithm_name(setup.baseline.algorithm);

    fs::create_directories(out_dir);
    std::vector<std::pair<std::vector<int>, std::vector<int>>> splits;
    if (folds >= 2) {
        splits = kfold(dataset.size(), folds, setup.train.seed);
    } else {
        std::vector<int> all(dataset.size());
        std::iota(all.begin(), all.end(), 0);
        splits.push_back({all, {}});
    }

    const PolicyNet net = make_policy_net(dataset, setup.train);
    const CriticNet critic = make_critic_net(dataset, setup.train);
    std::vector<ReportRow> rows;
    for (std::size_t f = 0; f < splits.size(); ++f) {
        const auto& [train_idx, test_idx] = splits[f];
        TrainConfig fold_cfg = setup.train;
        fold_cfg.seed = Rng::derive(setup.train.seed, 0xf01d + f);
        const TrainResult result =
            train_algorithm(dataset, train_idx, fold_cfg, setup.baseline);

        const std::string fold_dir = out_dir + "/fold" + std::to_string(f);
        fs::create_directories(fold_dir);
        save_checkpoint(fold_dir + "/policy.ckpt", result.theta,
                        policy_header(net, fold_cfg, algo_name,
                                      static_cast<long long>(result.log.size())));
        if (!result.omega.empty()) {
            save_checkpoint(fold_dir + "/critic.ckpt", result.omega,
                            critic_header(critic, fold_cfg, algo_name,
                                          static_cast<long long>(result.log.size())));
        }
        write_train_log_csv(fold_dir + "/train_log.csv", result.log);

        ReportRow row;
        row.algorithm = algo_name;
        row.fold = static_cast<int>(f);
        row.train_acc = evaluate(net, result.theta, dataset, train_idx,
                                 setup.train.max_depth, setup.train.feature_side, jobs)
                            .mean;
        if (!test_idx.empty()) {
            row.test_acc = evaluate(net, result.theta, dataset, test_idx,
                                    setup.train.max_depth, setup.train.feature_side, jobs)
                               .mean;
        }
        rows.push_back(row);
        if (std::isnan(row.test_acc)) {
            std::printf("fold %zu (%s): train accuracy %.6f\n", f, algo_name.c_str(),
                        row.train_acc);
        } else {
            std::printf("fold %zu (%s): train accuracy %.6f, test accuracy %.6f\n", f,
                        algo_name.c_str(), row.train_acc, row.test_acc);
        }
    }
    write_report_csv(out_dir + "/report.csv", rows);
    const std::string table = format_report_table(rows);
    std::ofstream table_out(out_dir + "/report.txt", std::ios::binary);
    table_out << table;
    std::fputs(table.c_str(), stdout);
    return kExitOk;
}

int run_eval(const std::string& data_dir, const std::string& checkpoint_path, int depth_flag,
             const std::string& report_path, int jobs) {
    const Dataset dataset = load(data_dir);
    nlohmann::json header;
    const std::vector<double> theta = load_checkpoint(checkpoint_path, &header);
    if (header.value("kind", "") != "policy") {
        throw IoError(checkpoint_path + " is not a policy checkpoint");
    }
    const Shape input = shape_from_json(header.at("input"));
    const NetArch arch = arch_from_json(header.at("arch"));
    const int feature_side = header.at("feature_side").get<int>();
    const int depth = depth_flag > 0 ? depth_flag : header.at("max_depth").get<int>();
    const PolicyNet net(input, arch);
    if (static_cast<int>(theta.size()) != net.param_count()) {
        throw IoError("checkpoint parameter count does not match its descriptor");
    }
    const EvalResult result = evaluate(net, theta, dataset, {}, depth, feature_side, jobs);
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        std::printf("%s: accuracy %.6f\n", dataset.items[i].id.c_str(), result.per_item[i]);
    }
    std::printf("mean accuracy over %zu items: %.6f\n", dataset.size(), result.mean);
    if (!report_path.empty()) {
        ReportRow row;
        row.algorithm = header.value("algorithm", "policy");
        row.fold = 0;
        row.train_acc = result.mean;
        write_report_csv(report_path, {row});
    }
    return kExitOk;
}

int run_render(const std::string& tree_path, const std::string& image_path,
               const std::string& out_path) {
    const ParseTree tree = load_tree(tree_path);
    int w = 0, h = 0;
    std::vector<std::uint8_t> pixels;
    read_gray_png(image_path, w, h, pixels);
    std::vector<int> labels(pixels.size(), -1);
    std::vector<double> channel(pixels.size());
    for (std::size_t i = 0; i < pixels.size(); ++i) channel[i] = pixels[i] / 255.0;
    const LabelGrid grid(w, h, std::move(labels), {std::move(channel)});
    const Region root = tree.node(tree.root()).region;
    if (root.w != w || root.h != h) {
        throw IoError("tree root region does not match the image extents");
    }
    render(tree, grid, out_path);
    std::printf("rendered %d leaves -> %s\n",
                static_cast<int>(tree.leaves().size()), out_path.c_str());
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hierarchical image decomposition by imitation of an "
                 "information-gain expert"};
    app.require_subcommand(1);

    // generate
    auto* gen = app.add_subcommand("generate", "Generate a synthetic dataset");
    GenConfig gen_cfg;
    std::string gen_out;
    bool no_guillotine = false;
    gen->add_option("--n", gen_cfg.count, "Number of items")->capture_default_str();
    gen->add_option("--side", gen_cfg.side, "Grid side length")->capture_default_str();
    gen->add_option("--depth", gen_cfg.max_split_depth, "Max recursive cut depth")
        ->capture_default_str();
    gen->add_flag("--guillotine,!--no-guillotine", gen_cfg.guillotine_only,
                  "Guillotine partitions (default) vs overlapping rectangles");
    gen->add_option("--min-rects", gen_cfg.min_rects, "Min rectangles/leaves")
        ->capture_default_str();
    gen->add_option("--max-rects", gen_cfg.max_rects, "Max rectangles/leaves")
        ->capture_default_str();
    gen->add_option("--noise", gen_cfg.noise, "Intensity noise amplitude")
        ->capture_default_str();
    gen->add_option("--seed", gen_cfg.seed, "Generator seed")->capture_default_str();
    gen->add_option("--out", gen_out, "Output directory")->required();
    (void)no_guillotine;

    // oracle
    auto* ora = app.add_subcommand("oracle", "Parse a dataset with the expert");
    std::string ora_data, ora_trees, ora_render;
    int ora_depth = 7;
    int jobs = 1;
    ora->add_option("--data", ora_data, "Dataset directory")->required();
    ora->add_option("--depth", ora_depth, "Max parse depth")->capture_default_str();
    ora->add_option("--out-trees", ora_trees, "Directory for parse-tree JSON files");
    ora->add_option("--out-render", ora_render, "Directory for rendered parses");

    // train
    auto* tr = app.add_subcommand("train", "Train a parser");
    std::string tr_data, tr_algo, tr_config, tr_out;
    int tr_folds = 0;
    std::int64_t tr_seed = -1;
    tr->add_option("--data", tr_data, "Dataset directory")->required();
    tr->add_option("--algorithm", tr_algo,
                   "bc|dagger|mcpg|dpg|aggrevated|ac-aggrevated|off-mcpg|off-acpg|drag");
    tr->add_option("--config", tr_config, "Key = value training config file");
    tr->add_option("--folds", tr_folds, "Cross-validation folds (0 = train on all)")
        ->capture_default_str();
    tr->add_option("--seed", tr_seed, "Training seed (overrides config)");
    tr->add_option("--out", tr_out, "Output directory")->required();

    // eval
    auto* ev = app.add_subcommand("eval", "Evaluate a policy checkpoint");
    std::string ev_data, ev_ckpt, ev_report;
    int ev_depth = 0;
    ev->add_option("--data", ev_data, "Dataset directory")->required();
    ev->add_option("--checkpoint", ev_ckpt, "Policy checkpoint")->required();
    ev->add_option("--depth", ev_depth, "Max parse depth (0 = from checkpoint)")
        ->capture_default_str();
    ev->add_option("--report", ev_report, "Write a report CSV here");

    // render
    auto* re = app.add_subcommand("render", "Render a stored parse tree");
    std::string re_tree, re_image, re_out;
    re->add_option("--tree", re_tree, "Parse-tree JSON file")->required();
    re->add_option("--image", re_image, "Intensity PNG")->required();
    re->add_option("--out", re_out, "Output PNG")->required();

    for (auto* sub : {gen, ora, tr, ev, re}) {
        sub->add_option("--jobs", jobs, "Worker threads for per-item work");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::fprintf(stderr, "%s\n\n%s", e.what(), app.help().c_str());
        return kExitUsage;
    }

    try {
        if (gen->parsed()) return run_generate(gen_cfg, gen_out);
        if (ora->parsed()) return run_oracle(ora_data, ora_depth, ora_trees, ora_render, jobs);
        if (tr->parsed())
            return run_train(tr_data, tr_algo, tr_config, tr_folds, tr_seed, tr_out, jobs);
        if (ev->parsed()) return run_eval(ev_data, ev_ckpt, ev_depth, ev_report, jobs);
        if (re->parsed()) return run_render(re_tree, re_image, re_out);
    } catch (const IoError& e) {
        std::fprintf(stderr, "io error: %s\n", e.what());
        return kExitIo;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "numeric error: %s\n", e.what());
        return kExitNumeric;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitUsage;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    }
    return kExitUsage;
}
