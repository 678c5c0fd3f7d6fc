#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fmpn/checkpoint.hpp"
#include "fmpn/evaluation.hpp"
#include "fmpn/maskgen.hpp"
#include "fmpn/synthdata.hpp"
#include "fmpn/training.hpp"

#include "CLI11.hpp"

namespace fmpn::cli {

namespace detail {

/// Config precedence: built-in defaults < config file < -D overrides
/// < dedicated flags (--seed). The effective result is logged.
inline TrainConfig resolve_config(const std::string& config_path, const std::vector<std::string>& overrides,
                                  bool seed_given, std::uint64_t seed, bool folds_given, int folds) {
    nlohmann::json j = nlohmann::json::object();
    if (!config_path.empty()) {
        std::ifstream in(config_path);
        if (!in) throw IoError("cannot open config: " + config_path);
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("config " + config_path + ": " + e.what());
        }
    }
    for (const auto& spec : overrides) apply_override(j, spec);
    TrainConfig cfg = train_config_from_json(j);
    if (seed_given) cfg.seed = seed;
    if (folds_given) cfg.folds = folds;
    cfg.validate();
    nlohmann::ordered_json effective;
    to_json(effective, cfg);
    std::cout << "[fmpn] effective config: " << effective.dump() << "\n";
    return cfg;
}

inline std::filesystem::path ensure_out_dir(const std::string& out) {
    std::filesystem::path p(out);
    std::error_code ec;
    std::filesystem::create_directories(p, ec);
    if (!std::filesystem::is_directory(p)) throw IoError("cannot create output directory: " + out);
    return p;
}

inline void write_report_artifacts(const EvalReport& report, const std::filesystem::path& out) {
    write_report_json(report, (out / "report.json").string());
    write_confusion_csv(report, (out / "confusion.csv").string());
    write_confusion_png(report, (out / "confusion.png").string());
    std::cout << "[fmpn] mean accuracy (sample-weighted): " << report.mean_accuracy << "\n";
    std::cout << "[fmpn] report written to " << (out / "report.json").string() << "\n";
}

inline MaskBank load_bank_arg(const std::string& bank_dir) {
    if (bank_dir.empty()) throw ConfigError("--bank is required for this command");
    return load_mask_bank(bank_dir);
}

} // namespace detail

/// Entry point shared by the binary and the tests. `args` excludes argv[0].
/// Exit codes: 0 success, 1 validation/usage error, 2 runtime error.
inline int run(const std::vector<std::string>& args) {
    CLI::App app{"Facial-motion-prior network pipeline (masks, training, evaluation)", "fmpn"};
    app.require_subcommand(1);

    std::string config_path, out_dir, manifest_path, bank_dir, class_map_path, checkpoint_path;
    std::string spec_arg = "default";
    std::string variant_arg = "full";
    std::vector<std::string> overrides;
    std::uint64_t seed = 0;
    int folds = 0;

    auto add_common = [&](CLI::App* cmd, bool with_config) {
        if (with_config) {
            cmd->add_option("--config", config_path, "training config JSON");
            cmd->add_option("-D,--set", overrides, "config override key=value (repeatable)");
        }
        cmd->add_option("--seed", seed, "seed override");
        cmd->add_option("--out", out_dir, "output directory")->required();
    };

    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic corpus");
    synth->add_option("--spec", spec_arg, "synth spec JSON path, or 'default'");
    add_common(synth, false);

    CLI::App* gen_masks = app.add_subcommand("gen-masks", "build the pseudo ground-truth mask bank");
    gen_masks->add_option("--manifest", manifest_path, "dataset manifest CSV")->required();
    add_common(gen_masks, false);

    CLI::App* train = app.add_subcommand("train", "two-stage training on the full manifest");
    train->add_option("--manifest", manifest_path)->required();
    train->add_option("--bank", bank_dir, "mask bank directory");
    add_common(train, true);

    CLI::App* eval_cmd = app.add_subcommand("eval", "subject-independent cross-validation");
    eval_cmd->add_option("--manifest", manifest_path)->required();
    eval_cmd->add_option("--bank", bank_dir, "mask bank directory");
    eval_cmd->add_option("--folds", folds, "fold count");
    add_common(eval_cmd, true);

    CLI::App* ablate = app.add_subcommand("ablate", "run an ablation variant");
    ablate->add_option("--manifest", manifest_path)->required();
    ablate->add_option("--bank", bank_dir, "mask bank directory (required for variant=full)");
    ablate->add_option("--variant", variant_arg, "full | no_lG | baseline_cnn")->required();
    ablate->add_option("--folds", folds, "fold count");
    add_common(ablate, true);

    CLI::App* transfer = app.add_subcommand("transfer", "train with a mask bank borrowed from another corpus");
    transfer->add_option("--manifest", manifest_path, "target manifest")->required();
    transfer->add_option("--bank", bank_dir, "source mask bank directory")->required();
    transfer->add_option("--class-map", class_map_path, "JSON object mapping target class -> source class");
    transfer->add_option("--folds", folds, "fold count");
    add_common(transfer, true);

    CLI::App* predict_cmd = app.add_subcommand("predict", "classify manifest samples with a checkpoint");
    predict_cmd->add_option("--manifest", manifest_path)->required();
    predict_cmd->add_option("--checkpoint", checkpoint_path, "model checkpoint")->required();
    add_common(predict_cmd, false);

    std::vector<const char*> argv;
    argv.push_back("fmpn");
    for (const auto& a : args) argv.push_back(a.c_str());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        CLI::App* active = app.get_subcommands().front();
        auto option_given = [&](const std::string& name) {
            const CLI::Option* opt = active->get_option_no_throw(name);
            return opt != nullptr && opt->count() > 0;
        };
        const bool seed_given = option_given("--seed");
        const bool folds_given = option_given("--folds");
        const auto out = detail::ensure_out_dir(out_dir);

        if (synth->parsed()) {
            SynthSpec spec = default_synth_spec();
            if (spec_arg != "default") {
                std::ifstream in(spec_arg);
                if (!in) throw IoError("cannot open synth spec: " + spec_arg);
                nlohmann::json j;
                in >> j;
                spec = synth_spec_from_json(j);
            }
            if (seed_given) spec.seed = seed;
            DatasetManifest manifest = generate(spec, out.string());
            std::cout << "[fmpn] wrote " << manifest.samples.size() << " samples to "
                      << (out / "manifest.csv").string() << "\n";
            return 0;
        }

        if (gen_masks->parsed()) {
            DatasetManifest manifest = load_manifest(manifest_path);
            MaskBank bank = generate_mask_bank(manifest, reference_landmarks(manifest.image_size),
                                               std::filesystem::path(manifest_path).filename().string());
            save_mask_bank(bank, out.string());
            std::cout << "[fmpn] wrote " << bank.masks.size() << " class masks to " << out.string() << "\n";
            return 0;
        }

        TrainConfig cfg = detail::resolve_config(config_path, overrides, seed_given, seed, folds_given, folds);

        if (train->parsed()) {
            DatasetManifest manifest = load_manifest(manifest_path);
            MaskBank bank;
            const bool with_bank = !bank_dir.empty();
            if (with_bank) bank = load_mask_bank(bank_dir);
            PreparedData data = prepare_data(manifest, with_bank ? &bank : nullptr, cfg);
            BackboneDescriptor desc{cfg.backbone, data.crop, manifest.num_classes(), cfg.backbone_options};
            FmpnModel model = init_model(FmgArch{cfg.fmg_base_channels}, desc, manifest.class_names, cfg.seed);
            if (!cfg.pretrained_cn.empty()) load_pretrained_cn(cfg.pretrained_cn, model);

            std::vector<std::size_t> all(manifest.samples.size());
            std::iota(all.begin(), all.end(), std::size_t{0});
            std::vector<Stage1Epoch> s1;
            if (with_bank && cfg.stage1_epochs > 0) s1 = train_stage1(model.fmg, data, all, cfg);
            auto on_epoch = [&](int epoch) {
                if (cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0) {
                    save_checkpoint((out / ("checkpoint_e" + std::to_string(epoch + 1) + ".fmpn")).string(),
                                    model, cfg.seed, epoch + 1);
                }
            };
            std::vector<JointEpoch> s2 = train_joint(model, data, all, cfg, on_epoch);
            write_history_csv((out / "history.csv").string(), s1, s2);
            save_checkpoint((out / "model.fmpn").string(), model, cfg.seed, cfg.stage2_epochs);
            if (!s2.empty()) {
                std::cout << "[fmpn] final train accuracy: " << s2.back().train_acc << "\n";
            }
            std::cout << "[fmpn] wrote " << (out / "history.csv").string() << " and "
                      << (out / "model.fmpn").string() << "\n";
            return 0;
        }

        if (eval_cmd->parsed()) {
            DatasetManifest manifest = load_manifest(manifest_path);
            MaskBank bank = detail::load_bank_arg(bank_dir);
            EvalReport report = cross_validate(manifest, bank, cfg, cfg.folds);
            detail::write_report_artifacts(report, out);
            return 0;
        }

        if (ablate->parsed()) {
            DatasetManifest manifest = load_manifest(manifest_path);
            const PipelineVariant variant = variant_from_name(variant_arg);
            MaskBank bank;
            if (variant == PipelineVariant::Full) bank = detail::load_bank_arg(bank_dir);
            EvalReport report = run_ablation(manifest, bank, cfg, variant);
            detail::write_report_artifacts(report, out);
            return 0;
        }

        if (transfer->parsed()) {
            DatasetManifest manifest = load_manifest(manifest_path);
            MaskBank bank = detail::load_bank_arg(bank_dir);
            std::map<std::string, std::string> class_map;
            if (!class_map_path.empty()) {
                std::ifstream in(class_map_path);
                if (!in) throw IoError("cannot open class map: " + class_map_path);
                nlohmann::json j;
                in >> j;
                class_map = j.get<std::map<std::string, std::string>>();
            }
            EvalReport report = transfer_masks(bank, manifest, cfg, class_map);
            detail::write_report_artifacts(report, out);
            return 0;
        }

        if (predict_cmd->parsed()) {
            DatasetManifest manifest = load_manifest(manifest_path);
            FmpnModel model = load_checkpoint(checkpoint_path);
            TrainConfig pcfg;
            pcfg.crop_size = model.input_size;
            PreparedData data = prepare_data(manifest, nullptr, pcfg);
            std::vector<std::size_t> all(manifest.samples.size());
            std::iota(all.begin(), all.end(), std::size_t{0});
            const std::vector<int> preds = evaluate_indices(model, data, all);
            std::ofstream csv(out / "predictions.csv");
            if (!csv) throw IoError("cannot write predictions.csv");
            csv << "path,true_label,predicted_label,correct\n";
            std::int64_t correct = 0;
            for (std::size_t i = 0; i < all.size(); ++i) {
                const bool ok = preds[i] == manifest.samples[i].label;
                correct += ok ? 1 : 0;
                csv << manifest.samples[i].image_path << ","
                    << manifest.class_names[static_cast<std::size_t>(manifest.samples[i].label)] << ","
                    << model.class_names[static_cast<std::size_t>(preds[i])] << "," << (ok ? 1 : 0) << "\n";
            }
            if (!all.empty()) {
                std::cout << "[fmpn] accuracy: "
                          << static_cast<double>(correct) / static_cast<double>(all.size()) << "\n";
            }
            std::cout << "[fmpn] wrote " << (out / "predictions.csv").string() << "\n";
            return 0;
        }

        return 1;
    } catch (const ParseError& e) {
        std::cerr << "[fmpn] error: " << e.what() << "\n";
        return 1;
    } catch (const ValidationError& e) {
        std::cerr << "[fmpn] error: " << e.what() << "\n";
        return 1;
    } catch (const ConfigError& e) {
        std::cerr << "[fmpn] error: " << e.what() << "\n";
        return 1;
    } catch (const ArgumentError& e) {
        std::cerr << "[fmpn] error: " << e.what() << "\n";
        return 1;
    } catch (const PlanError& e) {
        std::cerr << "[fmpn] error: " << e.what() << "\n";
        return 1;
    } catch (const MappingError& e) {
        std::cerr << "[fmpn] error: " << e.what() << "\n";
        return 1;
    } catch (const CoverageError& e) {
        std::cerr << "[fmpn] error: " << e.what() << "\n";
        return 1;
    } catch (const SingularError& e) {
        std::cerr << "[fmpn] error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "[fmpn] runtime error: " << e.what() << "\n";
        return 2;
    }
}

} // namespace fmpn::cli
