#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "octnav/phantom.hpp"
#include "octnav/pipeline.hpp"

namespace octnav {

/**
 * HTTP session around one phantom and one simulated robot.
 *
 *   GET  /volume/meta            dims, spacing, session status
 *   GET  /projection             mean projection, PNG
 *   GET  /slice?theta_z&tx&ty    vertical slice (theta_z in radians, tx/ty in um), PNG
 *   GET  /pose                   estimated needle pose
 *   POST /target {x,y,z}         plan preview
 *   POST /approve                execute the previewed plan
 *   GET  /trial/{id}             trial record
 *
 * Commands run one at a time; reads see the last committed session state.
 */
class NavigationServer {
  public:
    NavigationServer(PhantomScene scene, PipelineConfig config, std::optional<std::filesystem::path> trial_log = {});
    ~NavigationServer();
    NavigationServer(const NavigationServer&) = delete;
    NavigationServer& operator=(const NavigationServer&) = delete;

    /// Binds and returns the chosen port, or -1.
    int bind_to_any_port(const std::string& host);
    bool bind(const std::string& host, int port);
    /// Serves until stop(); blocks.
    bool listen_after_bind();
    void stop();
    void wait_until_ready() const;

  private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace octnav
