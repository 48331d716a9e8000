#pragma once

// Subcommand implementations for cscf-cli. Each command takes the effective
// options and a logger and returns the process exit status.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cscf/cscf.hpp"
#include "log.hpp"

namespace cscf::cli {

namespace fs = std::filesystem;

struct Options {
    fs::path in;
    fs::path out = "out";
    std::vector<std::string> files;
    std::uint64_t seed = 0;
    std::size_t threads = 1;

    std::size_t patch_size = 128;
    std::size_t patch_count = 16;

    std::size_t atoms = 32;
    std::size_t kernel = 5;
    std::size_t inner_blocks = 1;
    std::size_t outer_iters = 50;
    StageParams params;
    double growth = 1.0;
    fs::path init;
    bool checkpoint = false;

    std::size_t encode_iters = 50;
    double ridge = 1e-6;
    bool calibrate = false;
    fs::path dict;
    fs::path transfer;
    fs::path reference_transfer;
    std::string provider = "identity";
    fs::path provider_file;
    GateConfig gate;
};

inline std::string num(double v) {
    std::ostringstream os;
    os << std::setprecision(10) << v;
    return os.str();
}

// ---------------------------------------------------------------------------
// Input discovery

struct PairFiles {
    std::string stem;
    fs::path vis;
    fs::path ir;
};

struct VisibleFile {
    std::string stem;
    fs::path vis;
    std::optional<fs::path> ir;
};

inline bool ends_with(const std::string &s, const std::string &suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

inline std::vector<fs::path> list_files(const fs::path &dir) {
    if (!fs::is_directory(dir)) throw IoError("input directory does not exist: " + dir.string());
    std::vector<fs::path> out;
    for (const auto &e : fs::directory_iterator(dir))
        if (e.is_regular_file()) out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
}

// Matches <stem>_vis.pgm with <stem>_ir.pgm. Every unmatched file is logged
// as an error; the caller decides whether to continue.
inline std::vector<PairFiles> find_pairs(const fs::path &dir, Logger &log) {
    std::map<std::string, fs::path> vis, ir;
    for (const auto &p : list_files(dir)) {
        const auto name = p.filename().string();
        if (ends_with(name, "_vis.pgm")) vis[name.substr(0, name.size() - 8)] = p;
        else if (ends_with(name, "_ir.pgm")) ir[name.substr(0, name.size() - 7)] = p;
    }
    std::vector<PairFiles> out;
    for (const auto &[stem, path] : vis) {
        const auto it = ir.find(stem);
        if (it == ir.end()) log.error("unmatched visible image (no " + stem + "_ir.pgm): " + path.string());
        else out.push_back({stem, path, it->second});
    }
    for (const auto &[stem, path] : ir)
        if (!vis.contains(stem)) log.error("unmatched infrared image (no " + stem + "_vis.pgm): " + path.string());
    return out;
}

// Every *.pgm that is not an infrared image; a trailing _vis is dropped from
// the stem.
inline std::vector<VisibleFile> find_visible(const fs::path &dir) {
    std::vector<VisibleFile> out;
    for (const auto &p : list_files(dir)) {
        const auto name = p.filename().string();
        if (!ends_with(name, ".pgm") || ends_with(name, "_ir.pgm")) continue;
        VisibleFile f{name.substr(0, name.size() - 4), p, std::nullopt};
        if (ends_with(name, "_vis.pgm")) {
            f.stem = name.substr(0, name.size() - 8);
            const auto ir = dir / (f.stem + "_ir.pgm");
            if (fs::is_regular_file(ir)) f.ir = ir;
        }
        out.push_back(std::move(f));
    }
    return out;
}

inline std::vector<ImagePair> load_pairs(const std::vector<PairFiles> &files) {
    std::vector<ImagePair> out;
    out.reserve(files.size());
    for (const auto &f : files) {
        ImagePair p{read_image(f.vis), read_image(f.ir)};
        if (!p.vis.same_shape(p.ir)) throw DimensionError("pair " + f.stem + ": visible and infrared sizes differ");
        out.push_back(std::move(p));
    }
    return out;
}

inline void require_file(const fs::path &p, const std::string &what) {
    if (p.empty()) throw ArgumentError(what + " path is required");
    if (!fs::is_regular_file(p)) throw IoError(what + " not found: " + p.string());
}

inline std::ofstream open_csv(const fs::path &path, const char *header) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write " + path.string());
    os << header << '\n';
    return os;
}

inline std::size_t effective_threads(std::size_t t) {
    return t == 0 ? std::max(1u, std::thread::hardware_concurrency()) : t;
}

inline SemanticProvider make_provider(const Options &opt) {
    if (opt.provider == "identity") return SemanticProvider::identity();
    if (opt.provider == "calibrated") {
        require_file(opt.provider_file, "FiLM calibration file");
        return SemanticProvider::calibrated(load_film(opt.provider_file));
    }
    if (opt.provider == "file") {
        require_file(opt.provider_file, "semantic provider file");
        return SemanticProvider::load(opt.provider_file);
    }
    throw ArgumentError("unknown provider kind: " + opt.provider + " (expected identity, calibrated or file)");
}

inline StageParams encode_params(const Options &opt) {
    opt.params.validate();
    return opt.params;
}

// ---------------------------------------------------------------------------
// patches

inline int cmd_patches(const Options &opt, Logger &log) {
    if (opt.patch_size == 0) throw ArgumentError("patch size must be positive");
    const auto pairs = find_pairs(opt.in, log);
    if (log.errors() > 0) return log.exit_code();
    fs::create_directories(opt.out);
    std::mt19937_64 rng(opt.seed);
    const auto size = opt.patch_size;
    std::size_t written = 0;
    for (const auto &f : pairs) {
        const auto vis = read_image(f.vis);
        const auto ir = read_image(f.ir);
        if (!vis.same_shape(ir)) {
            log.error("pair " + f.stem + ": visible and infrared sizes differ");
            continue;
        }
        if (vis.height() < size || vis.width() < size) {
            log.warn("skipping " + f.stem + ": smaller than " + std::to_string(size) + "x" + std::to_string(size));
            continue;
        }
        std::uniform_int_distribution<std::size_t> rows(0, vis.height() - size), cols(0, vis.width() - size);
        for (std::size_t n = 0; n < opt.patch_count; ++n) {
            const auto r0 = rows(rng), c0 = cols(rng);
            auto crop = [&](const Image &img) {
                Image out(size, size);
                for (std::size_t r = 0; r < size; ++r)
                    for (std::size_t c = 0; c < size; ++c) out(r, c) = img(r0 + r, c0 + c);
                return out;
            };
            std::ostringstream stem;
            stem << f.stem << "_p" << std::setw(4) << std::setfill('0') << n;
            write_image(crop(vis), opt.out / (stem.str() + "_vis.pgm"));
            write_image(crop(ir), opt.out / (stem.str() + "_ir.pgm"));
            log.debug("patch " + stem.str() + " at (" + std::to_string(r0) + ", " + std::to_string(c0) + ")");
            ++written;
        }
    }
    log.info("wrote " + std::to_string(written) + " patch pairs to " + opt.out.string());
    return log.exit_code();
}

// ---------------------------------------------------------------------------
// learn

inline int cmd_learn(const Options &opt, Logger &log) {
    const auto files = find_pairs(opt.in, log);
    if (log.errors() > 0) return log.exit_code();
    if (files.empty()) throw ArgumentError("no <stem>_vis.pgm/<stem>_ir.pgm pairs in " + opt.in.string());
    const auto pairs = load_pairs(files);

    JsrlConfig cfg;
    cfg.atoms = opt.atoms;
    cfg.kernel = opt.kernel;
    cfg.inner_blocks = opt.inner_blocks;
    cfg.outer_iters = opt.outer_iters;
    cfg.schedule = StageSchedule{opt.params, opt.growth};
    cfg.seed = opt.seed;
    cfg.threads = effective_threads(opt.threads);
    if (!opt.init.empty()) {
        require_file(opt.init, "initial dictionary");
        cfg.init = deserialize_tensor<Dictionary>(opt.init);
        cfg.atoms = cfg.init->atoms();
        cfg.kernel = cfg.init->kernel();
        log.info("initial dictionary " + opt.init.string() + " (K=" + std::to_string(cfg.atoms) +
                 ", k=" + std::to_string(cfg.kernel) + ")");
    }

    fs::create_directories(opt.out);
    const auto ckpt_dir = opt.out / "checkpoints";
    if (opt.checkpoint) fs::create_directories(ckpt_dir);
    auto on_sweep = [&](std::size_t sweep, const Dictionary &d, const Residual &r) {
        log.debug("sweep " + std::to_string(sweep + 1) + " ell_S=" + num(r.ell_s) + " ell_D=" + num(r.ell_d));
        if (opt.checkpoint) {
            std::ostringstream name;
            name << "dictionary_" << std::setw(4) << std::setfill('0') << sweep + 1 << ".cscf";
            serialize_tensor(d, ckpt_dir / name.str());
        }
    };
    const auto result = learn_dictionary(pairs, cfg, on_sweep);

    serialize_tensor(result.dict, opt.out / "dictionary.cscf");
    auto csv = open_csv(opt.out / "residuals.csv", "iteration,ell_S,ell_D");
    for (std::size_t i = 0; i < result.history.size(); ++i)
        csv << i + 1 << ',' << num(result.history[i].ell_s) << ',' << num(result.history[i].ell_d) << '\n';

    const double quality = training_psnr(pairs, result.dict, result.coeffs);
    auto summary = open_csv(opt.out / "learn_summary.csv", "pairs,sweeps,psnr_db,ell_S,ell_D");
    const Residual last = result.history.empty() ? Residual{} : result.history.back();
    summary << pairs.size() << ',' << result.history.size() << ',' << num(quality) << ',' << num(last.ell_s) << ','
            << num(last.ell_d) << '\n';
    log.info("learned " + std::to_string(result.dict.atoms()) + " atoms over " + std::to_string(pairs.size()) +
             " pairs; training PSNR " + num(quality) + " dB");
    return log.exit_code();
}

// ---------------------------------------------------------------------------
// fit-transfer

inline int cmd_fit_transfer(const Options &opt, Logger &log) {
    require_file(opt.dict, "dictionary");
    const auto dict = deserialize_tensor<Dictionary>(opt.dict);
    const auto files = find_pairs(opt.in, log);
    if (log.errors() > 0) return log.exit_code();
    if (files.empty()) throw ArgumentError("no <stem>_vis.pgm/<stem>_ir.pgm pairs in " + opt.in.string());
    const auto pairs = load_pairs(files);
    const auto params = encode_params(opt);
    log.info("ridge = " + num(opt.ridge));

    std::vector<CoeffPair> coeffs(pairs.size());
    parallel_for(pairs.size(), effective_threads(opt.threads), [&](std::size_t i) {
        const SpectrumCache cache(dict, pairs[i].vis.height(), pairs[i].vis.width());
        coeffs[i].vis = encode(pairs[i].vis, cache, params, opt.encode_iters, Modality::visible);
        coeffs[i].ir = encode(pairs[i].ir, cache, params, opt.encode_iters, Modality::infrared);
    });

    const auto op = fit_transfer(coeffs, opt.ridge);
    fs::create_directories(opt.out);
    serialize_tensor(op, opt.out / "transfer.cscf");

    SemanticProvider provider = SemanticProvider::identity();
    if (opt.calibrate) {
        const auto fp = calibrate_film(coeffs, op);
        save_film(fp, opt.out / "film.cscf");
        provider = SemanticProvider::calibrated(fp);
        log.info("wrote FiLM calibration " + (opt.out / "film.cscf").string());
    }

    if (!opt.reference_transfer.empty()) {
        require_file(opt.reference_transfer, "reference transfer");
        const auto ref = deserialize_tensor<TransferOp>(opt.reference_transfer);
        if (ref.atoms() != op.atoms()) throw DimensionError("reference transfer has a different K");
        const double err = (op.mix - ref.mix).norm() / std::max(ref.mix.norm(), 1e-300);
        log.info("mix relative error vs reference = " + num(err));
    }

    auto csv = open_csv(opt.out / "transfer_report.csv", "path,ell_int,ell_reg,ell_grad,ell_inf");
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const SpectrumCache cache(dict, pairs[i].vis.height(), pairs[i].vis.width());
        const auto inf = infer_from_coeffs(coeffs[i].vis, cache, op, provider);
        const auto l = inference_losses(inf.pseudo_ir, pairs[i].ir, inf.s_pseudo_ir, coeffs[i].ir, pairs[i].vis);
        csv << files[i].stem << ',' << num(l.intensity) << ',' << num(l.regularization) << ',' << num(l.gradient)
            << ',' << num(l.total) << '\n';
    }
    log.info("fitted transfer on " + std::to_string(pairs.size()) + " pairs (K=" + std::to_string(op.atoms()) + ")");
    return log.exit_code();
}

// ---------------------------------------------------------------------------
// infer-ir

inline int cmd_infer_ir(const Options &opt, Logger &log) {
    require_file(opt.dict, "dictionary");
    require_file(opt.transfer, "transfer operator");
    const auto dict = deserialize_tensor<Dictionary>(opt.dict);
    const auto op = deserialize_tensor<TransferOp>(opt.transfer);
    const auto provider = make_provider(opt);
    const auto params = encode_params(opt);
    const auto inputs = find_visible(opt.in);
    fs::create_directories(opt.out);
    if (inputs.empty()) log.warn("no visible images in " + opt.in.string());

    struct Row {
        std::string line;
        std::string error;
    };
    std::vector<Row> rows(inputs.size());
    parallel_for(inputs.size(), effective_threads(opt.threads), [&](std::size_t i) {
        const auto &f = inputs[i];
        try {
            const auto vis = read_image(f.vis);
            const auto r = infer_ir(vis, dict, op, provider, params, opt.encode_iters);
            write_image(r.pseudo_ir, opt.out / (f.stem + "_pir.pgm"));
            serialize_tensor(r.pseudo_ir, opt.out / (f.stem + "_pir.cscf"));
            serialize_tensor(r.s_pseudo_ir, opt.out / (f.stem + "_pir_coeffs.cscf"));
            std::ostringstream line;
            line << f.stem << ',' << num(gradient_loss(r.pseudo_ir, vis));
            if (f.ir) {
                const auto ir = read_image(*f.ir);
                const auto s_ir = encode(ir, dict, params, opt.encode_iters, Modality::infrared);
                const auto l = inference_losses(r.pseudo_ir, ir, r.s_pseudo_ir, s_ir, vis);
                line << ',' << num(l.intensity) << ',' << num(l.regularization) << ',' << num(l.total);
            } else {
                line << ",,,";
            }
            rows[i].line = line.str();
        } catch (const std::exception &e) {
            rows[i].error = f.vis.string() + ": " + e.what();
        }
    });
    auto csv = open_csv(opt.out / "infer_report.csv", "path,ell_grad,ell_int,ell_reg,ell_inf");
    for (const auto &r : rows) {
        if (!r.error.empty()) log.error(r.error);
        else csv << r.line << '\n';
    }
    log.info("inferred pseudo-infrared for " + std::to_string(inputs.size()) + " images");
    return log.exit_code();
}

// ---------------------------------------------------------------------------
// fuse

inline int cmd_fuse(const Options &opt, Logger &log) {
    require_file(opt.dict, "dictionary");
    require_file(opt.transfer, "transfer operator");
    const auto dict = deserialize_tensor<Dictionary>(opt.dict);
    const auto op = deserialize_tensor<TransferOp>(opt.transfer);
    const auto provider = make_provider(opt);
    const auto params = encode_params(opt);
    opt.gate.validate();
    const auto inputs = find_visible(opt.in);
    fs::create_directories(opt.out);
    auto csv = open_csv(opt.out / "fusion_report.csv", fusion_report_header);
    if (inputs.empty()) {
        log.warn("no visible images in " + opt.in.string() + "; wrote an empty report");
        return log.exit_code();
    }

    struct Row {
        FusionReport report;
        std::string error;
    };
    std::vector<Row> rows(inputs.size());
    parallel_for(inputs.size(), effective_threads(opt.threads), [&](std::size_t i) {
        const auto &f = inputs[i];
        try {
            const auto r = fuse_pipeline(read_image(f.vis), dict, op, provider, opt.gate, params, opt.encode_iters);
            write_image(r.fused, opt.out / (f.stem + "_fused.pgm"));
            serialize_tensor(r.fused, opt.out / (f.stem + "_fused.cscf"));
            rows[i].report = r.report;
        } catch (const std::exception &e) {
            rows[i].error = f.vis.string() + ": " + e.what();
        }
    });
    csv << std::setprecision(10);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (!rows[i].error.empty()) log.error(rows[i].error);
        else write_fusion_row(csv, inputs[i].stem, rows[i].report);
    }
    log.info("fused " + std::to_string(inputs.size()) + " images into " + opt.out.string());
    return log.exit_code();
}

// ---------------------------------------------------------------------------
// metrics

inline int cmd_metrics(const Options &opt, Logger &log) {
    std::vector<fs::path> paths(opt.files.begin(), opt.files.end());
    if (!opt.in.empty())
        for (const auto &p : list_files(opt.in))
            if (p.extension() == ".pgm") paths.push_back(p);
    fs::create_directories(opt.out);
    auto csv = open_csv(opt.out / "metrics.csv", "path,ag,en,sf,ei");
    for (const auto &p : paths) {
        if (!fs::is_regular_file(p)) {
            log.error("missing file: " + p.string());
            continue;
        }
        try {
            const auto m = evaluate_metrics(read_image(p));
            csv << p.string() << ',' << num(m.ag) << ',' << num(m.en) << ',' << num(m.sf) << ',' << num(m.ei) << '\n';
        } catch (const std::exception &e) {
            log.error(p.string() + ": " + e.what());
        }
    }
    log.info("evaluated " + std::to_string(paths.size()) + " images");
    return log.exit_code();
}

// ---------------------------------------------------------------------------
// pipeline: learn -> fit-transfer -> fuse -> metrics

inline int cmd_pipeline(const Options &opt, Logger &log) {
    Options o = opt;
    log.info("pipeline stage: learn");
    if (cmd_learn(o, log) != 0) return log.exit_code();

    o.dict = opt.out / "dictionary.cscf";
    o.calibrate = opt.calibrate || opt.provider == "calibrated";
    log.info("pipeline stage: fit-transfer");
    if (cmd_fit_transfer(o, log) != 0) return log.exit_code();

    o.transfer = opt.out / "transfer.cscf";
    if (opt.provider == "calibrated") o.provider_file = opt.out / "film.cscf";
    o.out = opt.out / "fused";
    log.info("pipeline stage: fuse");
    if (cmd_fuse(o, log) != 0) return log.exit_code();

    Options m;
    m.in = opt.out / "fused";
    m.out = opt.out;
    log.info("pipeline stage: metrics");
    return cmd_metrics(m, log);
}

} // namespace cscf::cli
