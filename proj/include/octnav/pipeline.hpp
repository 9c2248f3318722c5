#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "octnav/phantom.hpp"
#include "octnav/pose.hpp"
#include "octnav/projection.hpp"
#include "octnav/segmentation.hpp"
#include "octnav/slicing.hpp"
#include "octnav/trajectory.hpp"

namespace octnav {

struct PipelineConfig {
    std::string segmenter = "baseline";
    double confidence_fraction = kDefaultConfidenceFraction;
    double huber_delta = kHuberDelta;
    MediaIndices media;
    double fluid_surface_um = 0.0;  ///< optical depth of the air/fluid boundary
    double sigma_move_um = 5.0;
    EntryBorder entry_border = EntryBorder::MinusX;
    bool reacquire_between = false;  ///< re-image and re-plan t_B after t_A
    std::uint64_t seed = 0;

    void validate() const;
};

nlohmann::json config_to_json(const PipelineConfig& c);
/// Missing keys keep their defaults.
PipelineConfig config_from_json(const nlohmann::json& j);
PipelineConfig load_config(const std::filesystem::path& path);

enum class Stage {
    Projection,
    SegmentProjection,
    ConfidenceFilter,
    EstimateInplane,
    ToolAlignedPlane,
    VirtualBScan,
    SegmentBScan,
    EstimateAxial,
    ComposePose,
    Plan,
    Execute,
};

std::string_view stage_name(Stage s);

/// Failure of one pipeline stage; what() is prefixed with the stage name.
class PipelineError : public std::runtime_error {
  public:
    PipelineError(Stage stage, const std::string& message);
    Stage stage() const { return stage_; }

  private:
    Stage stage_;
};

struct EstimateResult {
    NeedlePose pose;
    InplaneEstimate inplane;
    AxialEstimate axial;
    AxialProjectionImage projection;
    SoftMask projection_mask;
    VirtualBScan slice;
    BScanMasks slice_masks;
};

/// Projection, segmentation, line fits and slice: the pose of the needle as seen in the volume.
EstimateResult estimate(const IoctVolume& volume, const PipelineConfig& config, const Segmenter& segmenter);

/// Plan to `target` including the media stack read off the slice through the target.
InsertionPlan plan(const NeedlePose& pose, const MetricPoint& target, const IoctVolume& volume,
                   const PipelineConfig& config, const Segmenter& segmenter);

struct StageTimes {
    double acquire_ms = 0.0;  ///< phantom rendering, reported apart from the pipeline stages
    double estimate_ms = 0.0;
    double plan_ms = 0.0;
    double execute_ms = 0.0;
};

struct TrialRecord {
    std::uint64_t trial_id = 0;
    std::string scene_id;
    MetricPoint target = MetricPoint::Zero();
    std::optional<NeedlePose> estimated_pose;
    std::optional<InsertionPlan> plan;
    StageTimes times;
    MetricPoint final_tip = MetricPoint::Zero();  ///< ground truth, as seen in the volume
    double error_um = 0.0;
    bool success = false;
    std::string failure;  ///< stage-attributed message when !success
    std::string segmenter;
    double sigma_move_um = 0.0;
};

nlohmann::json trial_to_json(const TrialRecord& r);

/// Runs t_A then the corrected t_B on the robot. With reacquire_between, the
/// scene is re-rendered after t_A and t_B is re-planned from a fresh estimate.
TrialRecord execute(SimulatedRobot& robot, const InsertionPlan& plan, const PipelineConfig& config,
                    const PhantomScene& scene, const Segmenter& segmenter);

/// Robot noise seed of one trial.
std::uint64_t trial_seed(std::uint64_t config_seed, std::uint64_t trial_id);

/// Render, estimate, plan and execute one closed-loop trial. Failures are
/// recorded in the returned record, not thrown.
TrialRecord run_trial(const PhantomScene& scene, const MetricPoint& target, const PipelineConfig& config,
                      std::uint64_t trial_id);

/// Appends one row, writing the header first when the file is new or empty.
void append_trial_csv(const std::filesystem::path& path, const TrialRecord& record);

struct TrialRow {
    std::uint64_t trial_id = 0;
    std::string scene;
    MetricPoint target = MetricPoint::Zero();
    double error_um = 0.0;
    double t_estimate_ms = 0.0;
    double t_plan_ms = 0.0;
    double t_execute_ms = 0.0;
    std::string segmenter;
    double sigma_move = 0.0;
};

std::vector<TrialRow> read_trial_csv(const std::filesystem::path& path);

struct TimingStats {
    double mean_ms = 0.0;
    double sd_ms = 0.0;
    std::size_t samples = 0;
};

struct BenchmarkReport {
    TimingStats estimate;
    TimingStats plan;
};

TimingStats timing_stats(const std::vector<double>& samples_ms);

/// Times the estimate and plan stages. The plan target defaults to a point
/// 300 um ahead of the estimated tip along the needle axis, closer when that
/// leaves the volume.
BenchmarkReport benchmark(const IoctVolume& volume, const PipelineConfig& config, const Segmenter& segmenter,
                          std::size_t repetitions, std::optional<MetricPoint> target = std::nullopt);

}  // namespace octnav
