#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "sysid/dataset.hpp"
#include "sysid/function.hpp"

namespace sysid {

struct LinearSystem
{
    Mat A, B, C, D;
};

struct GeneratedData
{
    Dataset data;
    LinearSystem system;
    Vec x0;
};

/// Largest eigenvalue modulus.
double spectral_radius(const Mat& A);

/// The 6-state, 2-input, 2-output system with block-diagonal A; C reads x1 and x3.
LinearSystem order_reduction_system();

/// x_{k+1} = A x_k + B u_k + xi_k, y_k = C x_k + D u_k + eta_k from x0 = 0 with i.i.d.
/// standard Gaussian inputs and Gaussian noise of standard deviation `noise_std`.
/// Draw order: the whole input sequence, then per step process and measurement noise.
Dataset simulate_linear(const LinearSystem& sys, std::uint64_t seed, int N, double noise_std,
                        const Vec& x0 = {});

GeneratedData gen_order_reduction(std::uint64_t seed, int N = 2000, double noise_std = 0.01);
/// Random 3-state, 10-input, 1-output system; inputs 6..10 scaled by 1e-3.
GeneratedData gen_input_selection(std::uint64_t seed, int N = 10000, double noise_std = 0.01);
/// Random 10-state, 5-input, 5-output system. The returned dataset stacks [y, u]
/// (10 channels) as both its inputs and its outputs.
GeneratedData gen_causal(std::uint64_t seed, int N = 1000, double noise_std = 0.05);

/// Gaussian A rescaled to spectral radius `radius`, Gaussian B, C (std 1), D = 0.
LinearSystem random_stable_system(std::uint64_t seed, int n_x, int n_u, int n_y, double radius = 0.9);

/// CSV with a header row u1..u{n_u},y1..y{n_y}. `boundaries` holds experiment start
/// rows followed by the total row count, e.g. {0, 100, 250}; empty means one experiment.
/// Throws IoError with the line number on malformed input.
Dataset read_csv(std::istream& in, int n_u, int n_y, const std::vector<Eigen::Index>& boundaries = {});
Dataset load_csv(const std::filesystem::path& path, int n_u, int n_y,
                 const std::vector<Eigen::Index>& boundaries = {});
/// Channel counts taken from the header (columns named u* and y*).
Dataset load_csv(const std::filesystem::path& path, const std::vector<Eigen::Index>& boundaries = {});

/// Experiments are written back to back; shortest round-trip decimal formatting.
void write_csv(std::ostream& out, const Dataset& data);
void export_csv(const Dataset& data, const std::filesystem::path& path);

/// Row offsets {0, N_1, N_1 + N_2, ...} of the experiments in an exported file.
std::vector<Eigen::Index> experiment_boundaries(const Dataset& data);

/// Sidecar descriptor path for a data file: same stem, ".json" extension.
std::filesystem::path sidecar_path(const std::filesystem::path& csv);

/// Writes the CSV and its JSON sidecar (descriptor, boundaries, channel counts).
void export_dataset(const Dataset& data, const std::filesystem::path& csv);
/// Reads a CSV, taking boundaries from the sidecar when present.
Dataset import_dataset(const std::filesystem::path& csv);

} // namespace sysid
