#pragma once

namespace semcom::cli {

// Dispatches one subcommand (prepare-data, train-jscc, train-extractor,
// train-unified-space, train-relpred, evaluate, augment, dump-embeddings).
// Returns the process exit code; never throws.
int run(int argc, const char* const* argv);

}  // namespace semcom::cli
