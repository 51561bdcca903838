#pragma once

// Model checkpoints as JSON.
//
//   {
//     "format_version": 1,
//     "fingerprint": {"modality_dims": [...], "num_classes": C},
//     "config": {"d_f": "16", ...},            TrainConfig as key/value text
//     "state": {"epoch": e, "seed": s, "fusion": "marl", "graph_mode": "learned",
//               "alpha": a, "tau": t, "theta": th, "beta": b, "gamma": g},
//     "parameters": {"marl.W0": {"rows": r, "cols": c, "data": [...]}, ...},
//     "adam": {"step": n, "lr": ..., "beta1": ..., "beta2": ..., "eps": ...,
//              "slots": {"marl.W0": {"steps": k, "m": {...}, "v": {...}}, ...}}
//   }
//
// Doubles are written in shortest round-trip form, so save followed by load
// reproduces every value bit for bit.

#include <string>

#include "mmgl/config.hpp"
#include "mmgl/data.hpp"
#include "mmgl/trainer.hpp"

namespace mmgl {

inline constexpr int kCheckpointFormatVersion = 1;

struct Checkpoint {
  ModelState state;
  TrainConfig config;
};

std::string checkpoint_to_json(const ModelState& state, const TrainConfig& cfg);
Checkpoint checkpoint_from_json(const std::string& text);

void save_checkpoint(const std::string& path, const ModelState& state, const TrainConfig& cfg);
Checkpoint load_checkpoint(const std::string& path);
/// Throws DataError when the stored fingerprint differs from `expected`.
Checkpoint load_checkpoint(const std::string& path, const DatasetShape& expected);

}  // namespace mmgl
