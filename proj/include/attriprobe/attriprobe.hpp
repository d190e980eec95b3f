#pragma once

#include "attriprobe/activation_store.hpp"
#include "attriprobe/bias_text.hpp"
#include "attriprobe/error.hpp"
#include "attriprobe/evaluate.hpp"
#include "attriprobe/layer_report.hpp"
#include "attriprobe/logistic.hpp"
#include "attriprobe/metrics.hpp"
#include "attriprobe/optim.hpp"
#include "attriprobe/pca.hpp"
#include "attriprobe/probe_io.hpp"
#include "attriprobe/probes.hpp"
#include "attriprobe/stats.hpp"
#include "attriprobe/synth.hpp"
#include "attriprobe/training.hpp"

namespace attriprobe {
inline constexpr const char* kVersion = "0.1.0";
}
