#pragma once

namespace caformer {

// Parses argv and executes one subcommand (train, evaluate, forecast, impute,
// classify, detect, ablate, verify-backdoor, gradcheck, synth).
//
// Exit codes: 0 success, 1 runtime failure (bad data, numeric fault, missing
// artifact), 2 usage or config error (unknown flag/key, invalid value).
int run_command(int argc, char** argv);

} // namespace caformer
