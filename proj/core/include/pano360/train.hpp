#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>

#include "pano360/dit_core.hpp"
#include "pano360/hybrid_losses.hpp"
#include "pano360/pano_data.hpp"

namespace pano360 {

// Full run description. Top-level width/height/patch are authoritative and
// are copied onto the model section when the run starts, so the file only
// needs to state them once.
struct RunConfig {
    ModelConfig model;
    int width = 128;
    int height = 64;
    int patch = 4;
    int steps = 2000;  // training items drawn per epoch
    double lr = 2e-4;
    int epochs = 20;
    int batch = 1;
    int grad_accum = 3;
    LossWeights weights;
    MixPolicy mix;
    AuxTarget aux_target = AuxTarget::Residual;
    double guidance_train = 1.0;
    double guidance_infer = 3.0;
    int sample_steps = 28;
    std::uint64_t seed = 0;

    void validate() const;  // width = 2*height, every count >= 1
    ModelConfig resolved_model() const;
};

// Key-value config file with optional [model], [weights] and [mix] sections;
// keys mirror the field names exactly. Unknown keys are errors.
RunConfig read_run_config(const std::string& path);
void write_run_config(std::ostream& os, const RunConfig& cfg);
// Applies one key (section-qualified) to the config; shared by the file
// reader and command-line overrides.
void apply_config_value(RunConfig& cfg, const std::string& section, const std::string& key,
                        const std::string& value);

// Decoupled-weight-decay adaptive optimizer: moment estimates with bias
// correction, decay applied directly to the parameters (not the gradient).
class AdamW {
public:
    explicit AdamW(double lr, double weight_decay = 0.0, double beta1 = 0.9,
                   double beta2 = 0.999, double eps = 1e-8);
    void step(ParamMap& params, const ParamMap& grads);
    long steps_taken() const { return t_; }

private:
    double lr_, wd_, beta1_, beta2_, eps_;
    long t_ = 0;
    ParamMap m_, v_;
};

struct TrainStats {
    long optimizer_steps = 0;
    double first_loss = 0.0;
    double last_loss = 0.0;
};

// Runs the two-branch training loop: panoramic items minimize the combined
// lattice loss, perspective items minimize the masked noise loss. One
// key=value log line per optimizer step. Deterministic under fixed seed.
// A non-finite loss aborts with a state dump on the log stream.
PanoModel run_train(const RunConfig& cfg, std::ostream& log, TrainStats* stats = nullptr);

}  // namespace pano360
