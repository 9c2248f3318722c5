#include "octnav/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace octnav {

// ---- config -----------------------------------------------------------------

void PipelineConfig::validate() const {
    if (segmenter != "baseline" && segmenter != "oracle") throw std::invalid_argument("config: unknown segmenter " + segmenter);
    if (!(confidence_fraction > 0.0 && confidence_fraction <= 1.0)) {
        throw std::invalid_argument("config: confidence_fraction must be in (0, 1]");
    }
    if (!(huber_delta > 0.0)) throw std::invalid_argument("config: huber_delta must be > 0");
    if (!(media.air >= 1.0 && media.vitreous >= 1.0 && media.tissue >= 1.0)) {
        throw std::invalid_argument("config: refractive indices must be >= 1");
    }
    if (!(sigma_move_um >= 0.0)) throw std::invalid_argument("config: sigma_move_um must be >= 0");
    if (!std::isfinite(fluid_surface_um)) throw std::invalid_argument("config: fluid_surface_um must be finite");
}

nlohmann::json config_to_json(const PipelineConfig& c) {
    return {{"segmenter", c.segmenter},
            {"confidence_fraction", c.confidence_fraction},
            {"huber_delta", c.huber_delta},
            {"n_air", c.media.air},
            {"n_vitreous", c.media.vitreous},
            {"n_tissue", c.media.tissue},
            {"fluid_surface_um", c.fluid_surface_um},
            {"sigma_move_um", c.sigma_move_um},
            {"entry_border", std::string(entry_border_name(c.entry_border))},
            {"reacquire_between", c.reacquire_between},
            {"seed", c.seed}};
}

PipelineConfig config_from_json(const nlohmann::json& j) {
    PipelineConfig c;
    c.segmenter = j.value("segmenter", c.segmenter);
    c.confidence_fraction = j.value("confidence_fraction", c.confidence_fraction);
    c.huber_delta = j.value("huber_delta", c.huber_delta);
    c.media.air = j.value("n_air", c.media.air);
    c.media.vitreous = j.value("n_vitreous", c.media.vitreous);
    c.media.tissue = j.value("n_tissue", c.media.tissue);
    c.fluid_surface_um = j.value("fluid_surface_um", c.fluid_surface_um);
    c.sigma_move_um = j.value("sigma_move_um", c.sigma_move_um);
    if (j.contains("entry_border")) c.entry_border = parse_entry_border(j.at("entry_border").get<std::string>());
    c.reacquire_between = j.value("reacquire_between", c.reacquire_between);
    c.seed = j.value("seed", c.seed);
    c.validate();
    return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config: " + path.string());
    return config_from_json(nlohmann::json::parse(in));
}

// ---- stages -----------------------------------------------------------------

std::string_view stage_name(Stage s) {
    switch (s) {
        case Stage::Projection: return "projection";
        case Stage::SegmentProjection: return "segment_projection";
        case Stage::ConfidenceFilter: return "confidence_filter";
        case Stage::EstimateInplane: return "estimate_inplane";
        case Stage::ToolAlignedPlane: return "tool_aligned_plane";
        case Stage::VirtualBScan: return "virtual_bscan";
        case Stage::SegmentBScan: return "segment_bscan";
        case Stage::EstimateAxial: return "estimate_axial";
        case Stage::ComposePose: return "compose_pose";
        case Stage::Plan: return "plan";
        case Stage::Execute: return "execute";
    }
    return "unknown";
}

PipelineError::PipelineError(Stage stage, const std::string& message)
    : std::runtime_error(std::string(stage_name(stage)) + ": " + message), stage_(stage) {}

namespace {

template <typename F>
auto run_stage(Stage s, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const PipelineError&) {
        throw;
    } catch (const std::exception& e) {
        throw PipelineError(s, e.what());
    }
}

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

}  // namespace

EstimateResult estimate(const IoctVolume& volume, const PipelineConfig& config, const Segmenter& segmenter) {
    EstimateResult r;
    r.projection = run_stage(Stage::Projection, [&] { return axial_projection(volume); });
    r.projection_mask = run_stage(Stage::SegmentProjection, [&] { return segmenter.segment_projection(r.projection); });
    run_stage(Stage::ConfidenceFilter, [&] {
        if (!(config.confidence_fraction > 0.0 && config.confidence_fraction <= 1.0)) {
            throw std::invalid_argument("fraction must be in (0, 1]");
        }
        return 0;
    });
    r.inplane = run_stage(Stage::EstimateInplane, [&] {
        return estimate_inplane(r.projection_mask, config.confidence_fraction, config.entry_border, config.huber_delta);
    });
    const PlaneSpec plane = run_stage(Stage::ToolAlignedPlane, [&] {
        return tool_aligned_plane(r.inplane.theta_z, r.inplane.tx, r.inplane.ty, volume.geometry());
    });
    r.slice = run_stage(Stage::VirtualBScan, [&] { return virtual_bscan(volume, plane, {}, {}, dropped_bscans(volume)); });
    r.slice_masks = run_stage(Stage::SegmentBScan, [&] { return segmenter.segment_bscan(r.slice); });
    r.axial = run_stage(Stage::EstimateAxial, [&] {
        return estimate_axial(r.slice_masks.needle, r.slice.geometry, config.confidence_fraction, config.huber_delta);
    });
    r.pose = run_stage(Stage::ComposePose, [&] {
        return compose_pose(r.inplane.theta_z, r.axial.theta_y, MetricPoint(r.inplane.tx, r.inplane.ty, r.axial.tz));
    });
    return r;
}

InsertionPlan plan(const NeedlePose& pose, const MetricPoint& target, const IoctVolume& volume,
                   const PipelineConfig& config, const Segmenter& segmenter) {
    return run_stage(Stage::Plan, [&] {
        if (!volume.geometry().contains(target)) throw PlanningError("target outside the volume");
        InsertionPlan p = plan_trajectory(pose, target);
        const VirtualBScan slice = virtual_bscan(volume, second_virtual_bscan(target, pose.theta_z, volume.geometry()), {},
                                                 {}, dropped_bscans(volume));
        const BScanMasks masks = segmenter.segment_bscan(slice);
        const LayerBoundaries b = extract_layer_boundaries(masks.ilm, masks.rpe);
        const double col = std::round(slice.geometry.to_pixel(target).x());
        const auto c = b.nearest_valid(std::size_t(std::clamp(col, 0.0, double(b.size() - 1))));
        if (c == std::size_t(-1)) throw PlanningError("no valid layer boundaries in the slice through the target");
        apply_media(p, MediaStack::open_sky(config.fluid_surface_um, b.ilm_um(c), b.rpe_um(c), config.media));
        return p;
    });
}

// ---- execution --------------------------------------------------------------

nlohmann::json trial_to_json(const TrialRecord& r) {
    nlohmann::json j = {{"trial_id", r.trial_id},
                        {"scene", r.scene_id},
                        {"target_um", {r.target.x(), r.target.y(), r.target.z()}},
                        {"final_tip_um", {r.final_tip.x(), r.final_tip.y(), r.final_tip.z()}},
                        {"error_um", std::isfinite(r.error_um) ? nlohmann::json(r.error_um) : nlohmann::json(nullptr)},
                        {"success", r.success},
                        {"failure", r.failure},
                        {"segmenter", r.segmenter},
                        {"sigma_move_um", r.sigma_move_um},
                        {"times_ms",
                         {{"acquire", r.times.acquire_ms},
                          {"estimate", r.times.estimate_ms},
                          {"plan", r.times.plan_ms},
                          {"execute", r.times.execute_ms}}}};
    j["pose"] = r.estimated_pose ? pose_to_json(*r.estimated_pose) : nlohmann::json(nullptr);
    j["plan"] = r.plan ? plan_to_json(*r.plan) : nlohmann::json(nullptr);
    return j;
}

TrialRecord execute(SimulatedRobot& robot, const InsertionPlan& p, const PipelineConfig& config,
                    const PhantomScene& scene, const Segmenter& segmenter) {
    TrialRecord rec;
    rec.scene_id = scene.id;
    rec.target = p.target;
    rec.plan = p;
    rec.segmenter = segmenter.name();
    rec.sigma_move_um = robot.sigma_move();
    const auto t0 = Clock::now();
    run_stage(Stage::Execute, [&] {
        robot = apply_translation(robot, p.robot_A);
        if (config.reacquire_between) {
            const PhantomScene now = scene_with_robot(scene, robot);
            const auto ta = Clock::now();
            const IoctVolume vol = render_volume(now);
            rec.times.acquire_ms += ms_since(ta);
            std::unique_ptr<Segmenter> fresh;
            if (segmenter.name() == "oracle") fresh = std::make_unique<OracleSegmenter>(now);
            const Segmenter& seg = fresh ? *fresh : segmenter;
            const EstimateResult est = estimate(vol, config, seg);
            const InsertionPlan second = plan(est.pose, p.target, vol, config, seg);
            rec.plan = second;
            robot = apply_translation(robot, second.robot_A);
            robot = apply_translation(robot, second.robot_B);
        } else {
            robot = apply_translation(robot, p.robot_B);
        }
        return 0;
    });
    rec.times.execute_ms = ms_since(t0) - rec.times.acquire_ms;
    rec.final_tip = scene.to_optical(robot.tip_in_volume());
    rec.error_um = (rec.final_tip - p.target).norm();
    rec.success = true;
    return rec;
}

std::uint64_t trial_seed(std::uint64_t config_seed, std::uint64_t trial_id) {
    std::seed_seq seq{std::uint32_t(config_seed), std::uint32_t(config_seed >> 32), std::uint32_t(trial_id),
                      std::uint32_t(trial_id >> 32), 0x726f626fu};
    std::mt19937_64 g(seq);
    return g();
}

TrialRecord run_trial(const PhantomScene& scene, const MetricPoint& target, const PipelineConfig& config,
                      std::uint64_t trial_id) {
    TrialRecord rec;
    rec.trial_id = trial_id;
    rec.scene_id = scene.id;
    rec.target = target;
    rec.segmenter = config.segmenter;
    rec.sigma_move_um = config.sigma_move_um;
    rec.error_um = std::numeric_limits<double>::quiet_NaN();
    try {
        config.validate();
        auto t = Clock::now();
        const IoctVolume volume = render_volume(scene);
        rec.times.acquire_ms = ms_since(t);
        const auto seg = make_segmenter(config.segmenter, &scene);

        t = Clock::now();
        const EstimateResult est = estimate(volume, config, *seg);
        rec.times.estimate_ms = ms_since(t);
        rec.estimated_pose = est.pose;

        t = Clock::now();
        const InsertionPlan p = plan(est.pose, target, volume, config, *seg);
        rec.times.plan_ms = ms_since(t);
        rec.plan = p;

        SimulatedRobot robot = robot_for_scene(scene, config.sigma_move_um, trial_seed(config.seed, trial_id));
        TrialRecord done = execute(robot, p, config, scene, *seg);
        rec.plan = done.plan;
        rec.times.execute_ms = done.times.execute_ms;
        rec.times.acquire_ms += done.times.acquire_ms;
        rec.final_tip = done.final_tip;
        rec.error_um = done.error_um;
        rec.success = true;
    } catch (const std::exception& e) {
        rec.success = false;
        rec.failure = e.what();
    }
    return rec;
}

// ---- CSV log ----------------------------------------------------------------

namespace {

constexpr const char* kCsvHeader =
    "trial_id,scene,target_x_um,target_y_um,target_z_um,error_um,t_estimate_ms,t_plan_ms,t_execute_ms,segmenter,"
    "sigma_move";

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + '"';
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out(1);
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                out.back() += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                out.back() += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.emplace_back();
        } else {
            out.back() += c;
        }
    }
    return out;
}

}  // namespace

void append_trial_csv(const std::filesystem::path& path, const TrialRecord& r) {
    const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
    std::ofstream out(path, std::ios::app);
    if (!out) throw std::runtime_error("cannot open trial log: " + path.string());
    if (fresh) out << kCsvHeader << '\n';
    out << std::setprecision(17);
    out << r.trial_id << ',' << csv_field(r.scene_id) << ',' << r.target.x() << ',' << r.target.y() << ','
        << r.target.z() << ',' << r.error_um << ',' << r.times.estimate_ms << ',' << r.times.plan_ms << ','
        << r.times.execute_ms << ',' << csv_field(r.segmenter) << ',' << r.sigma_move_um << '\n';
}

std::vector<TrialRow> read_trial_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open trial log: " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != kCsvHeader) throw std::runtime_error("unexpected trial log header");
    std::vector<TrialRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = split_csv(line);
        if (f.size() != 11) throw std::runtime_error("malformed trial log row: " + line);
        TrialRow r;
        r.trial_id = std::stoull(f[0]);
        r.scene = f[1];
        r.target = {std::stod(f[2]), std::stod(f[3]), std::stod(f[4])};
        r.error_um = std::stod(f[5]);
        r.t_estimate_ms = std::stod(f[6]);
        r.t_plan_ms = std::stod(f[7]);
        r.t_execute_ms = std::stod(f[8]);
        r.segmenter = f[9];
        r.sigma_move = std::stod(f[10]);
        rows.push_back(std::move(r));
    }
    return rows;
}

// ---- benchmark --------------------------------------------------------------

TimingStats timing_stats(const std::vector<double>& v) {
    TimingStats s;
    s.samples = v.size();
    if (v.empty()) return s;
    s.mean_ms = std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
    if (v.size() > 1) {
        double ss = 0.0;
        for (double x : v) ss += (x - s.mean_ms) * (x - s.mean_ms);
        s.sd_ms = std::sqrt(ss / double(v.size() - 1));
    }
    return s;
}

BenchmarkReport benchmark(const IoctVolume& volume, const PipelineConfig& config, const Segmenter& segmenter,
                          std::size_t repetitions, std::optional<MetricPoint> target) {
    if (repetitions < 1) throw std::invalid_argument("benchmark: repetitions must be >= 1");
    std::vector<double> te, tp;
    std::optional<EstimateResult> last;
    for (std::size_t i = 0; i < repetitions; ++i) {
        const auto t = Clock::now();
        last = estimate(volume, config, segmenter);
        te.push_back(ms_since(t));
    }
    MetricPoint v = last->pose.tip + 300.0 * last->pose.direction();
    if (target) {
        v = *target;
    } else {
        // Shorten the advance until the target lies inside the volume.
        for (double a = 300.0; a > 1.0 && !volume.geometry().contains(v); a *= 0.5) {
            v = last->pose.tip + a * last->pose.direction();
        }
    }
    for (std::size_t i = 0; i < repetitions; ++i) {
        const auto t = Clock::now();
        const InsertionPlan p = plan(last->pose, v, volume, config, segmenter);
        tp.push_back(ms_since(t));
        (void)p;
    }
    return {timing_stats(te), timing_stats(tp)};
}

}  // namespace octnav
