#include "octnav/server.hpp"

#include <map>
#include <mutex>
#include <shared_mutex>

#include "httplib.h"
#include "octnav/image_io.hpp"

namespace octnav {

namespace {

using nlohmann::json;

/// Immutable view of the session; replaced as a whole by commands.
struct Snapshot {
    PhantomScene scene;
    std::shared_ptr<const IoctVolume> volume;
    std::shared_ptr<const Segmenter> segmenter;
    std::optional<NeedlePose> pose;
    std::optional<InsertionPlan> plan;
    std::string status = "idle";  // idle | planned | done | failed
};

void send_json(httplib::Response& res, const json& j, int status = 200) {
    res.status = status;
    res.set_content(j.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& msg) {
    send_json(res, {{"error", msg}}, status);
}

double query_number(const httplib::Request& req, const char* key) {
    if (!req.has_param(key)) throw std::invalid_argument(std::string("missing query parameter ") + key);
    const std::string v = req.get_param_value(key);
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size() || !std::isfinite(d)) throw std::invalid_argument(std::string("bad number for ") + key);
    return d;
}

}  // namespace

struct NavigationServer::Impl {
    httplib::Server http;
    PhantomScene initial;
    PipelineConfig config;
    std::optional<std::filesystem::path> log;

    std::mutex command;                 // serializes commands
    mutable std::shared_mutex state_mu;  // guards `state` pointer swaps
    std::shared_ptr<const Snapshot> state;
    std::optional<SimulatedRobot> robot;  // none when the scene has no needle
    std::map<std::uint64_t, json> trials;
    std::uint64_t next_trial = 1;

    Impl(PhantomScene scene, PipelineConfig cfg, std::optional<std::filesystem::path> trial_log)
        : initial(std::move(scene)),
          config(std::move(cfg)),
          log(std::move(trial_log)),
          robot(initial.needle ? std::optional(robot_for_scene(initial, config.sigma_move_um, trial_seed(config.seed, 0)))
                               : std::nullopt) {
        config.validate();
        state = std::make_shared<const Snapshot>(make_snapshot(initial));
        routes();
    }

    Snapshot make_snapshot(const PhantomScene& scene) const {
        Snapshot s;
        s.scene = scene;
        s.volume = std::make_shared<const IoctVolume>(render_volume(scene));
        s.segmenter = make_segmenter(config.segmenter, &scene);
        return s;
    }

    std::shared_ptr<const Snapshot> current() const {
        std::shared_lock lock(state_mu);
        return state;
    }

    void commit(Snapshot s) {
        auto next = std::make_shared<const Snapshot>(std::move(s));
        std::unique_lock lock(state_mu);
        state = std::move(next);
    }

    /// Caller holds `command`.
    NeedlePose ensure_pose() {
        auto s = current();
        if (s->pose) return *s->pose;
        Snapshot next = *s;
        next.pose = estimate(*s->volume, config, *s->segmenter).pose;
        commit(next);
        return *next.pose;
    }

    void routes() {
        http.Get("/volume/meta", [this](const httplib::Request&, httplib::Response& res) {
            const auto s = current();
            const auto& g = s->volume->geometry();
            send_json(res, {{"dims", {g.dims.x, g.dims.y, g.dims.z}},
                            {"spacing_um", {g.spacing.x, g.spacing.y, g.spacing.z}},
                            {"scene", s->scene.id},
                            {"segmenter", config.segmenter},
                            {"status", s->status}});
        });

        http.Get("/projection", [this](const httplib::Request&, httplib::Response& res) {
            const auto s = current();
            const auto p = axial_projection(*s->volume);
            res.set_content(encode_png(rescale_to_u8(p.pixels)), "image/png");
        });

        http.Get("/slice", [this](const httplib::Request& req, httplib::Response& res) {
            const auto s = current();
            try {
                const PlaneSpec plane = tool_aligned_plane(query_number(req, "theta_z"), query_number(req, "tx"),
                                                           query_number(req, "ty"), s->volume->geometry());
                const VirtualBScan slice = virtual_bscan(*s->volume, plane);
                res.set_content(encode_png(rescale_to_u8(slice.image)), "image/png");
            } catch (const std::exception& e) {
                send_error(res, 400, e.what());
            }
        });

        http.Get("/pose", [this](const httplib::Request&, httplib::Response& res) {
            std::lock_guard lock(command);
            try {
                send_json(res, pose_to_json(ensure_pose()));
            } catch (const PipelineError& e) {
                send_json(res, {{"error", e.what()}, {"stage", std::string(stage_name(e.stage()))}}, 422);
            }
        });

        http.Post("/target", [this](const httplib::Request& req, httplib::Response& res) {
            std::lock_guard lock(command);
            MetricPoint v;
            try {
                const json b = json::parse(req.body);
                v = {b.at("x").get<double>(), b.at("y").get<double>(), b.at("z").get<double>()};
            } catch (const std::exception& e) {
                return send_error(res, 400, std::string("expected {x, y, z} in um: ") + e.what());
            }
            try {
                const NeedlePose pose = ensure_pose();
                const auto s = current();
                Snapshot next = *s;
                next.plan = plan(pose, v, *s->volume, config, *s->segmenter);
                next.status = "planned";
                const json out = plan_to_json(*next.plan);
                commit(std::move(next));
                send_json(res, out);
            } catch (const PipelineError& e) {
                send_json(res, {{"error", e.what()}, {"stage", std::string(stage_name(e.stage()))}}, 422);
            }
        });

        http.Post("/approve", [this](const httplib::Request&, httplib::Response& res) {
            std::lock_guard lock(command);
            const auto s = current();
            if (!s->plan || s->status != "planned") return send_error(res, 409, "no plan awaiting approval");
            TrialRecord rec;
            if (!robot) return send_error(res, 409, "scene has no needle to move");
            SimulatedRobot moved = *robot;
            try {
                rec = execute(moved, *s->plan, config, initial, *s->segmenter);
            } catch (const PipelineError& e) {
                Snapshot failed = *s;
                failed.status = "failed";
                commit(std::move(failed));
                return send_json(res, {{"error", e.what()}, {"stage", std::string(stage_name(e.stage()))}}, 422);
            }
            robot = moved;
            rec.trial_id = next_trial++;
            if (s->pose) rec.estimated_pose = *s->pose;
            if (log) append_trial_csv(*log, rec);
            const json out = trial_to_json(rec);
            trials[rec.trial_id] = out;

            Snapshot next;
            try {
                next = make_snapshot(scene_with_robot(initial, *robot));
            } catch (const std::exception&) {
                next = *s;  // needle left the scan region; keep the last image
                next.pose.reset();
            }
            next.status = "done";
            commit(std::move(next));
            send_json(res, out);
        });

        http.Get(R"(/trial/(\d+))", [this](const httplib::Request& req, httplib::Response& res) {
            std::lock_guard lock(command);
            const auto it = trials.find(std::stoull(req.matches[1].str()));
            if (it == trials.end()) return send_error(res, 404, "unknown trial");
            send_json(res, it->second);
        });
    }
};

NavigationServer::NavigationServer(PhantomScene scene, PipelineConfig config,
                                   std::optional<std::filesystem::path> trial_log)
    : impl_(std::make_unique<Impl>(std::move(scene), std::move(config), std::move(trial_log))) {}

NavigationServer::~NavigationServer() { stop(); }

int NavigationServer::bind_to_any_port(const std::string& host) { return impl_->http.bind_to_any_port(host); }
bool NavigationServer::bind(const std::string& host, int port) { return impl_->http.bind_to_port(host, port); }
bool NavigationServer::listen_after_bind() { return impl_->http.listen_after_bind(); }
void NavigationServer::stop() {
    if (impl_) impl_->http.stop();
}
void NavigationServer::wait_until_ready() const { impl_->http.wait_until_ready(); }

}  // namespace octnav
