#include <thread>

#include "doctest.h"
#include "json.hpp"
#include "octnav/server.hpp"
#include "support.hpp"
// after Eigen: resolv.h, pulled in by httplib, defines _res
#include "httplib.h"

using namespace octnav;
using nlohmann::json;

namespace {

bool is_png(const std::string& body) { return body.size() > 8 && body.compare(1, 3, "PNG") == 0; }

struct Session {
    NavigationServer server;
    std::thread thread;
    int port = -1;

    Session(const PhantomScene& scene, PipelineConfig config, std::filesystem::path log)
        : server(scene, std::move(config), log) {
        port = server.bind_to_any_port("127.0.0.1");
        REQUIRE(port > 0);
        thread = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }
    ~Session() {
        server.stop();
        thread.join();
    }
    httplib::Client client() const {
        httplib::Client c("127.0.0.1", port);
        c.set_read_timeout(120, 0);
        return c;
    }
};

}  // namespace

TEST_CASE("navigation session over HTTP") {
    const PhantomScene scene = testing::small_scene();
    PipelineConfig config;
    config.segmenter = "oracle";
    config.sigma_move_um = 0.0;
    const auto log = testing::temp_path("server_trials.csv");
    std::filesystem::remove(log);
    Session session(scene, config, log);
    auto cli = session.client();

    auto meta = cli.Get("/volume/meta");
    REQUIRE(meta);
    CHECK(meta->status == 200);
    const json m = json::parse(meta->body);
    CHECK(m["dims"] == json{200, 40, 800});
    CHECK(m["spacing_um"] == json{2.5, 25.0, 3.0});
    CHECK(m["status"] == "idle");

    auto proj = cli.Get("/projection");
    REQUIRE(proj);
    CHECK(proj->status == 200);
    CHECK(proj->get_header_value("Content-Type") == "image/png");
    CHECK(is_png(proj->body));

    auto slice = cli.Get("/slice?theta_z=0.1&tx=300&ty=500");
    REQUIRE(slice);
    CHECK(slice->status == 200);
    CHECK(is_png(slice->body));
    CHECK(cli.Get("/slice?theta_z=0.1&tx=-300&ty=500")->status == 400);
    CHECK(cli.Get("/slice?theta_z=0.1")->status == 400);

    CHECK(cli.Post("/approve", "", "application/json")->status == 409);
    CHECK(cli.Post("/target", "{\"x\": 1}", "application/json")->status == 400);
    CHECK(cli.Post("/target", "not json", "application/json")->status == 400);

    auto pose = cli.Get("/pose");
    REQUIRE(pose);
    REQUIRE(pose->status == 200);
    const NeedlePose p = pose_from_json(json::parse(pose->body));
    CHECK((p.tip - scene.apparent_needle_pose().tip).norm() <= 25.3);

    const json behind{{"x", p.tip.x()}, {"y", p.tip.y()}, {"z", p.tip.z() - 100.0}};
    auto rejected = cli.Post("/target", behind.dump(), "application/json");
    CHECK(rejected->status == 422);
    CHECK(json::parse(rejected->body)["stage"] == "plan");

    const MetricPoint v = p.tip + 60.0 * p.direction();
    auto planned = cli.Post("/target", json{{"x", v.x()}, {"y", v.y()}, {"z", v.z()}}.dump(), "application/json");
    REQUIRE(planned->status == 200);
    const json pl = json::parse(planned->body);
    CHECK(pl.contains("tA_um"));
    CHECK(json::parse(cli.Get("/volume/meta")->body)["status"] == "planned");

    // Reads keep being served while commands are queued.
    std::vector<std::thread> readers;
    std::atomic<int> ok{0};
    for (int i = 0; i < 4; ++i) {
        readers.emplace_back([&] {
            auto c = session.client();
            if (auto r = c.Get("/volume/meta"); r && r->status == 200) ++ok;
        });
    }
    auto done = cli.Post("/approve", "", "application/json");
    for (auto& t : readers) t.join();
    CHECK(ok == 4);
    REQUIRE(done->status == 200);
    const json trial = json::parse(done->body);
    CHECK(trial["trial_id"] == 1);
    CHECK(trial["error_um"].get<double>() <= 25.3);
    CHECK(cli.Post("/approve", "", "application/json")->status == 409);

    auto again = cli.Get("/trial/1");
    REQUIRE(again->status == 200);
    CHECK(json::parse(again->body) == trial);
    CHECK(cli.Get("/trial/7")->status == 404);

    const auto rows = read_trial_csv(log);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].error_um == trial["error_um"].get<double>());
    std::filesystem::remove(log);
}

TEST_CASE("pose failure is reported with its stage") {
    PhantomScene scene = testing::small_scene();
    scene.needle.reset();
    PipelineConfig config;
    config.segmenter = "oracle";
    Session session(scene, config, {});
    auto cli = session.client();
    auto r = cli.Get("/pose");
    REQUIRE(r);
    CHECK(r->status == 422);
    CHECK(json::parse(r->body)["stage"] == "estimate_inplane");
}
