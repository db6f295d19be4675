#pragma once

#include <iosfwd>

namespace openadapt {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNonFinite = 3;

// Entry point of the `openadapt` tool. Subcommands: gen, train-source, adapt,
// eval, sweep. Files land under --out:
//
//   gen           source_s<seed>.txt, target_s<seed>.txt
//   train-source  source_model_s<seed>.ckpt, source_log_s<seed>.csv
//   adapt         adapted_model_s<seed>.ckpt, scores_s<seed>.csv, adapt_log_s<seed>.csv
//   eval          report[_<tag>]_s<seed>.json, hist_known[_<tag>]_s<seed>.csv,
//                 hist_unknown[_<tag>]_s<seed>.csv
//   sweep         sweep_<axis>.csv
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace openadapt
