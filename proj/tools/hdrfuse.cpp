// hdrfuse: multi-exposure HDR fusion toolkit.
//   gen-data    synthesize a bracketed dataset with merged ground truth
//   train       optimize the fusion network on a dataset
//   eval        score predictions against ground truth (mu/PU/linear)
//   merge       fuse one scene with a trained checkpoint
//   grad-check  finite-difference verification of the backward pass

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "hdrfuse/config.hpp"
#include "hdrfuse/data.hpp"
#include "hdrfuse/gradcheck.hpp"
#include "hdrfuse/image_io.hpp"
#include "hdrfuse/loss.hpp"
#include "hdrfuse/metrics.hpp"
#include "hdrfuse/model.hpp"
#include "hdrfuse/train.hpp"

namespace fs = std::filesystem;
using namespace hdrfuse;

namespace {

void declare_model_keys(ConfigResolver& cfg) {
    cfg.declare("embed_dim", "24");
    cfg.declare("num_layers", "2");
    cfg.declare("window", "4");
    cfg.declare("heads", "3");
    cfg.declare("cross_heads", "1");
    cfg.declare("mlp_ratio", "4");
}

ModelConfig model_from(const ConfigResolver& cfg) {
    ModelConfig m;
    m.embed_dim = cfg.get_int("embed_dim");
    m.num_layers = cfg.get_int("num_layers");
    m.window = cfg.get_int("window");
    m.heads = cfg.get_int("heads");
    m.cross_heads = cfg.get_int("cross_heads");
    m.mlp_ratio = cfg.get_int("mlp_ratio");
    m.validate();
    return m;
}

void echo_config(const ConfigResolver& cfg) {
    std::cout << "resolved config:\n";
    for (const auto& [k, v] : cfg.resolved()) std::cout << "  " << k << " = " << v << "\n";
}

std::pair<std::int64_t, std::int64_t> parse_size(const std::string& s) {
    const auto x = s.find('x');
    if (x == std::string::npos) throw std::invalid_argument("--size expects HxW, got '" + s + "'");
    return {std::stoll(s.substr(0, x)), std::stoll(s.substr(x + 1))};
}

std::vector<std::pair<MotionClass, double>> parse_mix(const std::string& s) {
    if (s == "equal")
        return {{MotionClass::Local, 1.0 / 3}, {MotionClass::Ego, 1.0 / 3}, {MotionClass::Full, 1.0 / 3}};
    std::vector<std::pair<MotionClass, double>> mix;
    std::size_t pos = 0;
    while (pos < s.size()) {
        const std::size_t comma = s.find(',', pos);
        const std::string item = s.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
        pos = comma == std::string::npos ? s.size() : comma + 1;
        const std::size_t eq = item.find('=');
        if (eq == std::string::npos) throw std::invalid_argument("--mix expects name=fraction terms, got '" + item + "'");
        mix.emplace_back(parse_motion(trim(item.substr(0, eq))), std::stod(item.substr(eq + 1)));
    }
    return mix;
}

std::vector<TrainSample> load_dataset(const std::string& dir) {
    std::vector<TrainSample> samples;
    for (const auto& scene_dir : list_scene_dirs(dir)) {
        LoadedScene scene = load_bracket(scene_dir);
        samples.push_back(TrainSample{scene.manifest.id, std::move(scene.bracket), std::move(scene.gt)});
    }
    if (samples.empty()) throw std::runtime_error("dataset '" + dir + "' contains no scenes");
    return samples;
}

int run_gen_data(const ConfigResolver& cfg, const std::string& out) {
    echo_config(cfg);
    DatasetParams params;
    params.scenes = cfg.get_int("scenes");
    params.seed = static_cast<std::uint64_t>(cfg.get_int("seed"));
    std::tie(params.height, params.width) = parse_size(cfg.get("size"));
    params.mix = parse_mix(cfg.get("mix"));
    const auto manifests = build_dataset(params, out);

    std::map<std::string, int> motion_counts, light_counts;
    for (const auto& m : manifests) {
        motion_counts[to_string(m.motion)]++;
        light_counts[to_string(m.light)]++;
    }
    std::cout << "wrote " << manifests.size() << " scenes to " << out << "\n";
    for (const auto& [k, v] : motion_counts) std::cout << "  motion " << k << ": " << v << "\n";
    for (const auto& [k, v] : light_counts) std::cout << "  light " << k << ": " << v << "\n";
    return 0;
}

int run_train(const ConfigResolver& cfg, const std::string& data_dir, const std::string& ckpt_out,
              std::string trace_out, const std::string& phi_weights) {
    echo_config(cfg);
    const ModelConfig mcfg = model_from(cfg);
    TrainConfig tcfg;
    tcfg.lr = cfg.get_double("lr");
    tcfg.beta1 = cfg.get_double("beta1");
    tcfg.beta2 = cfg.get_double("beta2");
    tcfg.eps = cfg.get_double("eps");
    tcfg.patch = cfg.get_int("patch");
    tcfg.stride = cfg.get_int("stride");
    tcfg.steps = cfg.get_int("steps");
    tcfg.batch = cfg.get_int("batch");
    tcfg.seed = static_cast<std::uint64_t>(cfg.get_int("seed"));
    tcfg.augment = cfg.get_bool("augment");
    tcfg.ckpt_every = cfg.get_int("ckpt_every");
    tcfg.alpha = cfg.get_double("alpha");
    tcfg.validate();

    PhiConfig pcfg;
    pcfg.seed = static_cast<std::uint64_t>(cfg.get_int("phi_seed"));
    pcfg.stages = static_cast<int>(cfg.get_int("phi_stages"));
    pcfg.base_channels = cfg.get_int("phi_base_channels");
    const FeatureExtractor<float> phi =
        phi_weights.empty() ? make_phi<float>(pcfg) : load_phi<float>(load_checkpoint(phi_weights));

    const std::vector<TrainSample> samples = load_dataset(data_dir);
    auto net = make_network<float>(mcfg, tcfg.seed);

    if (trace_out.empty()) trace_out = ckpt_out + ".trace";
    std::ofstream trace(trace_out, std::ios::trunc);
    if (!trace) throw std::runtime_error("cannot open trace file '" + trace_out + "'");

    auto write_ckpt = [&](Network<float>& n, std::int64_t step) {
        const std::string path = step < 0 ? ckpt_out : ckpt_out + ".step" + std::to_string(step);
        save_checkpoint(to_checkpoint(n), path);
    };
    const TrainResult result = train_loop(samples, net, tcfg, phi, &trace, write_ckpt);

    if (!result.trace.empty())
        std::cout << "trained " << result.trace.size() << " steps; loss " << result.trace.front().loss << " -> "
                  << result.trace.back().loss << "\n";
    if (result.padded_patches > 0)
        std::cout << "warning: " << result.padded_patches << " center-padded patches (images smaller than "
                  << tcfg.patch << ")\n";
    std::cout << "checkpoint: " << ckpt_out << "\ntrace: " << trace_out << "\n";
    return 0;
}

std::vector<std::string> split_domains(const std::string& s) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (pos < s.size()) {
        const std::size_t comma = s.find(',', pos);
        out.push_back(trim(s.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos)));
        pos = comma == std::string::npos ? s.size() : comma + 1;
    }
    return out;
}

int run_eval(const ConfigResolver& cfg, const std::string& data_dir, const std::string& ckpt,
             const std::string& pred_dir, const std::string& report_out, std::string pred_out) {
    echo_config(cfg);
    const std::vector<std::string> domains = split_domains(cfg.get("domains"));

    Network<float> net;
    const bool use_net = !ckpt.empty();
    if (use_net) {
        net = from_checkpoint<float>(load_checkpoint(ckpt));
        if (pred_out.empty()) pred_out = report_out + "_preds";
        fs::create_directories(pred_out);
    }

    std::vector<EvalPair> pairs;
    std::vector<std::string> missing;
    for (const auto& scene_dir : list_scene_dirs(data_dir)) {
        LoadedScene scene = load_bracket(scene_dir);
        Tensor<float> pred;
        if (use_net) {
            pred = predict(net, scene.bracket);
            write_pfm(pred, (fs::path(pred_out) / (scene.manifest.id + ".pfm")).string());
        } else {
            const fs::path direct = fs::path(pred_dir) / (scene.manifest.id + ".pfm");
            const fs::path nested = fs::path(pred_dir) / scene.manifest.id / "gt.pfm";
            if (fs::exists(direct))
                pred = read_pfm(direct.string());
            else if (fs::exists(nested))
                pred = read_pfm(nested.string());
            else {
                missing.push_back(scene.manifest.id);
                continue;
            }
        }
        pairs.push_back(EvalPair{scene.manifest.id, pred.cast<double>(), scene.gt.pixels.cast<double>()});
    }

    const EvalReport report = evaluate(pairs, domains, missing);
    std::ofstream text(report_out + ".txt", std::ios::trunc);
    std::ofstream flat(report_out + ".kv", std::ios::trunc);
    if (!text || !flat) throw std::runtime_error("cannot open report files at '" + report_out + "'");
    write_report_text(report, text);
    write_report_flat(report, flat);
    write_report_text(report, std::cout);
    std::cout << "report: " << report_out << ".txt, " << report_out << ".kv\n";
    if (!missing.empty()) {
        std::cerr << "error: " << missing.size() << " sample(s) had no prediction\n";
        return 1;
    }
    return 0;
}

int run_merge(const std::string& scene_dir, const std::string& ckpt, const std::string& out) {
    LoadedScene scene = load_bracket(scene_dir);
    auto net = from_checkpoint<float>(load_checkpoint(ckpt));
    const Tensor<float> pred = predict(net, scene.bracket);
    write_pfm(pred, out);

    fs::path preview(out);
    preview.replace_extension("");
    preview += "_preview.png";
    write_png8(mu_law(pred), preview.string());
    std::cout << "merged " << scene.manifest.id << " -> " << out << " (preview " << preview.string() << ")\n";
    return 0;
}

int run_grad_check(const ConfigResolver& cfg) {
    echo_config(cfg);
    const ModelConfig mcfg = model_from(cfg);
    const double tol = cfg.get_double("tol");
    const int seeds = static_cast<int>(cfg.get_int("seeds"));
    const auto suite = gradcheck::run_gradient_suite(mcfg, tol, seeds, std::cout);
    std::cout << "max relative error " << suite.max_rel_error << " (" << suite.worst_check << "), tolerance " << tol
              << "\n";
    if (!suite.pass) {
        std::cerr << "gradient check FAILED\n";
        return 1;
    }
    std::cout << "gradient check passed\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"hdrfuse: multi-exposure HDR fusion and deghosting at desk scale"};
    app.require_subcommand(1);
    app.footer("Config precedence: flag > HDRFUSE_<KEY> environment > --config file > default.\n"
               "All paths are taken relative to the current directory.");

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "synthesize a bracketed dataset with merged ground truth");
    std::string gen_out;
    std::map<std::string, std::string> gen_flags;
    gen->add_option("--out", gen_out, "output dataset directory")->required();
    gen->add_option("--scenes", gen_flags["scenes"], "number of scenes");
    gen->add_option("--seed", gen_flags["seed"], "generator seed");
    gen->add_option("--mix", gen_flags["mix"], "motion mix: 'equal' or name=frac[,name=frac...]");
    gen->add_option("--size", gen_flags["size"], "scene size HxW");

    // train
    auto* train = app.add_subcommand("train", "optimize the fusion network on a dataset");
    std::string train_data, train_ckpt, train_trace, train_config, train_phi;
    std::map<std::string, std::string> train_flags;
    train->add_option("--data", train_data, "dataset directory")->required();
    train->add_option("--config", train_config, "flat key = value config file");
    train->add_option("--ckpt-out", train_ckpt, "checkpoint output path")->required();
    train->add_option("--trace-out", train_trace, "loss trace output path (default <ckpt-out>.trace)");
    train->add_option("--phi-weights", train_phi, "perceptual extractor weight file (default: seeded)");
    for (const char* key : {"steps", "seed", "lr", "beta1", "beta2", "eps", "patch", "stride", "batch", "augment",
                            "ckpt_every", "alpha", "embed_dim", "num_layers", "window", "heads", "cross_heads",
                            "mlp_ratio", "phi_seed", "phi_stages", "phi_base_channels"})
        train->add_option(std::string("--") + key, train_flags[key]);

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "evaluate predictions against ground truth");
    std::string eval_data, eval_ckpt, eval_pred_dir, eval_report, eval_pred_out;
    std::map<std::string, std::string> eval_flags;
    eval_cmd->add_option("--data", eval_data, "dataset directory")->required();
    auto* ckpt_opt = eval_cmd->add_option("--ckpt", eval_ckpt, "checkpoint to run");
    auto* pred_opt = eval_cmd->add_option("--pred-dir", eval_pred_dir, "directory of existing <id>.pfm predictions");
    ckpt_opt->excludes(pred_opt);
    eval_cmd->add_option("--domains", eval_flags["domains"], "comma list of mu,pu,linear");
    eval_cmd->add_option("--report-out", eval_report, "report base path")->required();
    eval_cmd->add_option("--pred-out", eval_pred_out, "directory for prediction PFMs");

    // merge
    auto* merge = app.add_subcommand("merge", "fuse one scene with a trained checkpoint");
    std::string merge_scene, merge_ckpt, merge_out;
    merge->add_option("--scene", merge_scene, "scene directory")->required();
    merge->add_option("--ckpt", merge_ckpt, "checkpoint path")->required();
    merge->add_option("--out", merge_out, "output PFM path")->required();

    // grad-check
    auto* grad = app.add_subcommand("grad-check", "finite-difference verification of the backward pass");
    std::string grad_config;
    std::map<std::string, std::string> grad_flags;
    grad->add_option("--config", grad_config, "flat key = value config file");
    grad->add_option("--tol", grad_flags["tol"], "relative error tolerance");
    grad->add_option("--seeds", grad_flags["seeds"], "number of seeds");
    for (const char* key : {"embed_dim", "num_layers", "window", "heads"})
        grad->add_option(std::string("--") + key, grad_flags[key]);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (gen->parsed()) {
            ConfigResolver cfg;
            cfg.declare("scenes", "6");
            cfg.declare("seed", "7");
            cfg.declare("mix", "equal");
            cfg.declare("size", "128x192");
            for (const auto& [k, v] : gen_flags)
                if (!v.empty()) cfg.set_flag(k, v);
            return run_gen_data(cfg, gen_out);
        }
        if (train->parsed()) {
            ConfigResolver cfg;
            declare_model_keys(cfg);
            cfg.declare("lr", "2e-4");
            cfg.declare("beta1", "0.9");
            cfg.declare("beta2", "0.999");
            cfg.declare("eps", "1e-8");
            cfg.declare("patch", "128");
            cfg.declare("stride", "64");
            cfg.declare("steps", "200");
            cfg.declare("batch", "1");
            cfg.declare("seed", "1");
            cfg.declare("augment", "true");
            cfg.declare("ckpt_every", "0");
            cfg.declare("alpha", "0.01");
            cfg.declare("phi_seed", "40463");
            cfg.declare("phi_stages", "3");
            cfg.declare("phi_base_channels", "8");
            if (!train_config.empty()) cfg.load_file(train_config);
            for (const auto& [k, v] : train_flags)
                if (!v.empty()) cfg.set_flag(k, v);
            return run_train(cfg, train_data, train_ckpt, train_trace, train_phi);
        }
        if (eval_cmd->parsed()) {
            if (eval_ckpt.empty() && eval_pred_dir.empty())
                throw std::invalid_argument("eval needs --ckpt or --pred-dir");
            ConfigResolver cfg;
            cfg.declare("domains", "mu,pu,linear");
            for (const auto& [k, v] : eval_flags)
                if (!v.empty()) cfg.set_flag(k, v);
            return run_eval(cfg, eval_data, eval_ckpt, eval_pred_dir, eval_report, eval_pred_out);
        }
        if (merge->parsed()) return run_merge(merge_scene, merge_ckpt, merge_out);
        if (grad->parsed()) {
            ConfigResolver cfg;
            declare_model_keys(cfg);
            cfg.declare("tol", "1e-4");
            cfg.declare("seeds", "3");
            if (!grad_config.empty()) cfg.load_file(grad_config);
            for (const auto& [k, v] : grad_flags)
                if (!v.empty()) cfg.set_flag(k, v);
            return run_grad_check(cfg);
        }
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
