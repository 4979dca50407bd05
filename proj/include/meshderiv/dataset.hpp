/**
 * @file dataset.hpp
 * @brief Trajectory datasets and their binary container format.
 *
 * Container layout (little-endian; strings are u32 length + bytes):
 *
 *   magic "MDTRAJ\0\0" (8 bytes), u32 version = 1
 *   string case_id, u8 split (0 train, 1 val, 2 test, 3 unassigned)
 *   u64 n_nodes, u64 n_channels, u64 n_steps (frames), u64 n_edges
 *   f64 dt, u32 n_globals, then n_globals x (string name, f64 value)
 *   n_channels x string channel name
 *   positions: n_nodes x (f64 x, f64 y)
 *   edges:     u8 symmetric flag, n_edges x (u64 i, u64 j)
 *   frames:    n_steps x (f64 t, n_nodes*n_channels f64 row-major)
 */
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "meshderiv/mesh.hpp"

namespace meshderiv {

struct StateField {
    Field values;
    double time = 0.0;
};

/// Ordered named scalars; order defines the conditioning vector layout.
class GlobalParams {
public:
    void set(const std::string& name, double value);
    std::optional<double> get(const std::string& name) const;
    double at(const std::string& name) const;
    const std::vector<std::pair<std::string, double>>& items() const { return items_; }
    std::size_t size() const { return items_.size(); }
    std::vector<double> values() const;
    std::vector<std::string> names() const;

    /// Empty string when valid.
    std::string check() const;

    friend bool operator==(const GlobalParams&, const GlobalParams&) = default;

private:
    std::vector<std::pair<std::string, double>> items_;
};

enum class Split : std::uint8_t { Train = 0, Val = 1, Test = 2, Unassigned = 3 };

const char* split_name(Split s);
Split parse_split(const std::string& s);

struct TrajectoryCase {
    std::string id;
    MeshGraph graph;
    std::vector<std::string> channels;
    std::vector<StateField> frames;
    GlobalParams globals;
    Split split = Split::Unassigned;

    double dt() const;
    std::size_t n_channels() const { return channels.size(); }
};

struct TrajectoryDataset {
    std::vector<TrajectoryCase> cases;

    std::vector<const TrajectoryCase*> by_split(Split s) const;
};

/// All TrajectoryDataset invariants; empty result means valid.
std::vector<std::string> validate_dataset(const TrajectoryDataset& ds);

void write_case(std::ostream& os, const TrajectoryCase& c);
TrajectoryCase read_case(std::istream& is);
void save_case(const std::filesystem::path& path, const TrajectoryCase& c);
TrajectoryCase load_case(const std::filesystem::path& path);

/// Writes `<dir>/<case id>.mdtraj` for every case plus `<dir>/cases.csv`.
void save_dataset(const std::filesystem::path& dir, const TrajectoryDataset& ds);
/// Reads every case listed in `<dir>/cases.csv`, in manifest order.
TrajectoryDataset load_dataset(const std::filesystem::path& dir);

/// Writes `bytes` to `path` via a temporary file and rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);

}  // namespace meshderiv
