#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "bgw/kernel.hpp"
#include "bgw/model.hpp"
#include "bgw/spectral.hpp"

namespace bgw {

using Json = nlohmann::json;
using OrderedJson = nlohmann::ordered_json;

/// Model description:
///   {"p": 1, "q": 2,
///    "mating": {"kind": "perfect_fidelity", "params": {...},
///               "certificate": {"alpha": [...], "beta": [...]}},
///    "offspring": [{"support": [[[0, 0], "1/2"], [[1, 1], 0.125], ...]}, ...]}
/// custom_table params: {"box": B, "table": [...]} with (B+1)^q cells in
/// row-major order (x_1 most significant), each an integer (p = 1) or a list
/// of p integers.
ModelSpec parse_model(const Json& j, const std::string& name = "");
ModelSpec load_model(const std::filesystem::path& path);
Json read_json(const std::filesystem::path& path);

/// JSON text with the keys in insertion order, floating-point values with 17
/// significant digits and non-finite values as null.
std::string dump_artifact(const OrderedJson& j);
void write_text(const std::filesystem::path& path, const std::string& text);

/// Sparse triplets "i j probability" plus a sidecar listing every state with
/// its absorbed and escaped mass.
void write_kernel(const TruncatedKernel& k, const std::filesystem::path& triplets,
                  const std::filesystem::path& states);
TruncatedKernel read_kernel(const std::filesystem::path& triplets, const std::filesystem::path& states);

std::string spec_digest(const ModelSpec& spec);
std::string format_double(double x);

OrderedJson state_json(std::span<const Count> z);
StateVector state_from_json(const Json& j);
/// "1,2" -> (1,2)
StateVector parse_state(const std::string& text);

}  // namespace bgw
