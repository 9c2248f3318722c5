// octnav command line: phantom rendering, projection/slice export, pose
// estimation, closed-loop trials, timing and the HTTP session server.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "octnav/image_io.hpp"
#include "octnav/pipeline.hpp"
#include "octnav/server.hpp"

using namespace octnav;
using nlohmann::json;

namespace {

MetricPoint parse_point(const std::string& s) {
    std::stringstream in(s);
    std::string part;
    std::vector<double> v;
    while (std::getline(in, part, ',')) v.push_back(std::stod(part));
    if (v.size() != 3) throw CLI::ValidationError("--target", "expected X,Y,Z in micrometres");
    return {v[0], v[1], v[2]};
}

void write_sidecar(const std::string& pgm, const json& j) {
    std::ofstream out(pgm + ".json");
    out << j.dump(2) << '\n';
}

PipelineConfig config_or_default(const std::string& path) {
    return path.empty() ? PipelineConfig{} : load_config(path);
}

PhantomScene scene_or_default(const std::string& path) {
    return path.empty() ? default_scene() : load_scene(path);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"octnav: iOCT needle pose estimation and insertion planning on synthetic phantoms"};
    app.require_subcommand(1);

    // phantom
    auto* phantom = app.add_subcommand("phantom", "Synthetic scenes");
    phantom->require_subcommand(1);
    std::string scene_path, out_path;
    std::uint64_t seed_override = 0;
    bool have_seed = false;
    auto* render = phantom->add_subcommand("render", "Render a scene to an .ioct volume");
    render->add_option("--scene", scene_path, "Scene JSON (default scene when omitted)");
    render->add_option("--out", out_path, "Output volume")->required();
    auto* seed_opt = render->add_option("--seed", seed_override, "Override the scene rng_seed");
    auto* example = phantom->add_subcommand("example", "Write the default scene as JSON");
    example->add_option("--out", out_path, "Output JSON")->required();

    // project
    std::string in_path, op_name = "mean";
    auto* project = app.add_subcommand("project", "Axial projection image as 16-bit PGM");
    project->add_option("--in", in_path, "Input volume")->required();
    project->add_option("--op", op_name, "mean | min | max")->check(CLI::IsMember({"mean", "min", "max"}));
    project->add_option("--out", out_path, "Output PGM")->required();

    // slice
    double theta_deg = 0.0, tx = 0.0, ty = 0.0;
    auto* slice = app.add_subcommand("slice", "Vertical virtual B-scan as 16-bit PGM");
    slice->add_option("--in", in_path, "Input volume")->required();
    slice->add_option("--theta-z", theta_deg, "Plane yaw in degrees")->required();
    slice->add_option("--tx", tx, "Plane point x (um)")->required();
    slice->add_option("--ty", ty, "Plane point y (um)")->required();
    slice->add_option("--out", out_path, "Output PGM")->required();

    // estimate
    std::string config_path;
    auto* est = app.add_subcommand("estimate", "Estimate the needle pose of a volume");
    est->add_option("--in", in_path, "Input volume")->required();
    est->add_option("--scene", scene_path, "Scene JSON (required by the oracle segmenter)");
    est->add_option("--config", config_path, "Pipeline config JSON");

    // run
    std::string target_str, log_path;
    std::uint64_t trial_id = 1;
    bool approved = false;
    auto* run = app.add_subcommand("run", "Closed-loop trial: render, estimate, plan, execute");
    run->add_option("--scene", scene_path, "Scene JSON (default scene when omitted)");
    run->add_option("--target", target_str, "Target X,Y,Z in um (volume frame)")->required();
    run->add_option("--config", config_path, "Pipeline config JSON");
    run->add_option("--log", log_path, "Append the trial to this CSV");
    run->add_option("--trial-id", trial_id, "Trial id (also seeds the robot noise)");
    run->add_flag("--yes", approved, "Approve execution; without it only the plan is printed");

    // bench
    std::size_t reps = 20;
    auto* bench = app.add_subcommand("bench", "Time the estimate and plan stages");
    bench->add_option("--in", in_path, "Input volume (rendered from --scene when omitted)");
    bench->add_option("--scene", scene_path, "Scene JSON");
    bench->add_option("--config", config_path, "Pipeline config JSON");
    bench->add_option("--reps", reps, "Repetitions")->check(CLI::PositiveNumber);

    // replay
    auto* replay = app.add_subcommand("replay", "Re-run logged trials and compare errors");
    replay->add_option("--log", log_path, "Trial CSV")->required();
    replay->add_option("--scene", scene_path, "Scene JSON used for the log");
    replay->add_option("--config", config_path, "Config JSON used for the log");

    // serve
    std::string host = "127.0.0.1";
    int port = 8080;
    auto* serve = app.add_subcommand("serve", "HTTP API for the operator console");
    serve->add_option("--scene", scene_path, "Scene JSON");
    serve->add_option("--config", config_path, "Pipeline config JSON");
    serve->add_option("--host", host, "Bind address");
    serve->add_option("--port", port, "Port");
    serve->add_option("--log", log_path, "Append approved trials to this CSV");

    CLI11_PARSE(app, argc, argv);
    have_seed = seed_opt->count() > 0;

    try {
        if (render->parsed()) {
            PhantomScene scene = scene_or_default(scene_path);
            if (have_seed) scene.rng_seed = seed_override;
            save_volume(render_volume(scene), out_path);
            return 0;
        }
        if (example->parsed()) {
            std::ofstream(out_path) << scene_to_json(default_scene()).dump(2) << '\n';
            return 0;
        }
        if (project->parsed()) {
            const IoctVolume vol = load_volume(in_path);
            const auto p = axial_projection(vol, parse_projection_op(op_name), {}, in_path);
            const Rescaled16 r = rescale_to_u16(p.pixels);
            write_pgm(out_path, r.image);
            write_sidecar(out_path, {{"op", op_name},
                                     {"min", r.min},
                                     {"max", r.max},
                                     {"spacing_um", {p.spacing.x, p.spacing.y}}});
            return 0;
        }
        if (slice->parsed()) {
            const IoctVolume vol = load_volume(in_path);
            const double theta = theta_deg * M_PI / 180.0;
            const VirtualBScan s = virtual_bscan(vol, tool_aligned_plane(theta, tx, ty, vol.geometry()));
            const Rescaled16 r = rescale_to_u16(s.image);
            write_pgm(out_path, r.image);
            write_sidecar(out_path, {{"theta_z_rad", theta},
                                     {"tx_um", tx},
                                     {"ty_um", ty},
                                     {"u_min_um", s.geometry.u_min},
                                     {"spacing_um", {s.geometry.u_spacing, s.geometry.z_spacing}},
                                     {"min", r.min},
                                     {"max", r.max}});
            return 0;
        }
        if (est->parsed()) {
            const PipelineConfig cfg = config_or_default(config_path);
            const IoctVolume vol = load_volume(in_path);
            const PhantomScene scene = scene_or_default(scene_path);
            const auto seg = make_segmenter(cfg.segmenter, &scene);
            std::cout << pose_to_json(estimate(vol, cfg, *seg).pose).dump(2) << '\n';
            return 0;
        }
        if (run->parsed()) {
            const PipelineConfig cfg = config_or_default(config_path);
            const PhantomScene scene = scene_or_default(scene_path);
            const MetricPoint target = parse_point(target_str);
            if (!approved) {
                const IoctVolume vol = render_volume(scene);
                const auto seg = make_segmenter(cfg.segmenter, &scene);
                const auto e = estimate(vol, cfg, *seg);
                std::cout << json{{"pose", pose_to_json(e.pose)}, {"plan", plan_to_json(plan(e.pose, target, vol, cfg, *seg))}}
                                 .dump(2)
                          << "\nplan only; pass --yes to execute\n";
                return 0;
            }
            const TrialRecord rec = run_trial(scene, target, cfg, trial_id);
            if (!log_path.empty()) append_trial_csv(log_path, rec);
            std::cout << trial_to_json(rec).dump(2) << '\n';
            return rec.success ? 0 : 1;
        }
        if (bench->parsed()) {
            const PipelineConfig cfg = config_or_default(config_path);
            const PhantomScene scene = scene_or_default(scene_path);
            const IoctVolume vol = in_path.empty() ? render_volume(scene) : load_volume(in_path);
            const auto seg = make_segmenter(cfg.segmenter, &scene);
            const BenchmarkReport r = benchmark(vol, cfg, *seg, reps);
            std::printf("estimate: %.2f +/- %.2f ms (n=%zu)\nplan:     %.2f +/- %.2f ms (n=%zu)\n", r.estimate.mean_ms,
                        r.estimate.sd_ms, r.estimate.samples, r.plan.mean_ms, r.plan.sd_ms, r.plan.samples);
            return 0;
        }
        if (replay->parsed()) {
            const PipelineConfig cfg = config_or_default(config_path);
            const PhantomScene scene = scene_or_default(scene_path);
            int mismatches = 0;
            for (const TrialRow& row : read_trial_csv(log_path)) {
                if (row.scene != scene.id) {
                    std::printf("trial %llu: scene %s does not match %s, skipped\n", (unsigned long long)row.trial_id,
                                row.scene.c_str(), scene.id.c_str());
                    continue;
                }
                PipelineConfig c = cfg;
                c.segmenter = row.segmenter;
                c.sigma_move_um = row.sigma_move;
                const TrialRecord rec = run_trial(scene, row.target, c, row.trial_id);
                const bool same = rec.error_um == row.error_um || (std::isnan(rec.error_um) && std::isnan(row.error_um));
                mismatches += same ? 0 : 1;
                std::printf("trial %llu: logged %.6f um, replayed %.6f um %s\n", (unsigned long long)row.trial_id,
                            row.error_um, rec.error_um, same ? "ok" : "MISMATCH");
            }
            return mismatches == 0 ? 0 : 1;
        }
        if (serve->parsed()) {
            NavigationServer server(scene_or_default(scene_path), config_or_default(config_path),
                                    log_path.empty() ? std::nullopt : std::optional<std::filesystem::path>(log_path));
            if (!server.bind(host, port)) {
                std::cerr << "cannot bind " << host << ':' << port << '\n';
                return 1;
            }
            std::cerr << "serving on http://" << host << ':' << port << '\n';
            return server.listen_after_bind() ? 0 : 1;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
