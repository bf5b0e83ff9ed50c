#pragma once

#include <string>
#include <vector>

#include "casvid/training.hpp"

namespace casvid {

struct GenerateParams {
    int frames = 8;
    int fps = 4;
    int t_refine = 600;
    int base_steps = 50;
    int refine_steps = 30;
    std::uint64_t seed = 0;
};

// Shape log of every pipeline hop, for conformance checks and run manifests.
struct GenerateTrace {
    std::vector<std::pair<std::string, std::vector<int>>> shapes;
    bool base_bundle_has_text = false;
    bool refine_bundle_has_image = false;

    void note(const std::string& name, const std::vector<int>& shape);
    std::string to_string() const;
};

// Full two-stage pipeline: base generation from pure noise (detail on frame
// 0) -> decode -> pixel resize -> re-encode -> partial noising to t_refine ->
// text-conditioned refinement -> decode.
VideoTensor generate(const VideoTensor& image, const std::string& caption, StageModel& base,
                     StageModel& refine, const GenerateParams& params,
                     GenerateTrace* trace = nullptr);

// Refinement applied to an existing clip (skips the base stage).
VideoTensor refine_only(const VideoTensor& low_res, const std::string& caption,
                        StageModel& refine, int t_refine, int steps, std::uint64_t seed,
                        GenerateTrace* trace = nullptr);

// Stage-checked checkpoint compatibility: both stages must share the codec
// and resolution profile.
void require_compatible(const StageModel& base, const StageModel& refine);

}  // namespace casvid
