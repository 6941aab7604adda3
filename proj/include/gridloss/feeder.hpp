#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace gridloss::model {

// One row of buses.csv. Loads are in kW/kvar while the network is in
// physical units and in p.u. afterwards. v_min/v_max bound the voltage
// magnitude in p.u. in both unit systems.
struct BusRecord {
    int id = 0;
    double p_load = 0.0;
    double q_load = 0.0;
    double v_min = 0.95;
    double v_max = 1.05;
    // Optional per-bus ZIP override (z_p,i_p,p_p,z_q,i_q,p_q columns).
    std::optional<std::array<double, 6>> zip_override;
};

// One row of branches.csv. r/x are in ohm (physical) or p.u.; i_max is the
// ampacity in ampere (physical) or p.u., absent meaning unconstrained.
struct BranchRecord {
    int from_bus = 0;
    int to_bus = 0;
    double r = 0.0;
    double x = 0.0;
    std::optional<double> i_max;
};

struct PerUnitBase {
    double base_kv = 0.0;
    double base_mva = 0.0;

    double impedance_ohm() const { return base_kv * base_kv / base_mva; }
    // Line current base in ampere for a three-phase line-to-line voltage base.
    double current_a() const { return base_mva * 1e6 / (std::sqrt(3.0) * base_kv * 1e3); }
};

// Tree structure rooted at the slack bus, in dense bus-index space
// (0..n_bus-1, in buses.csv order). Filled by validate_radial().
struct Topology {
    std::vector<int> parent;                 // -1 at the slack bus
    std::vector<std::vector<int>> children;
    std::vector<int> order;                  // breadth-first, slack first
    std::vector<int> branch_into;            // incoming branch index, -1 at slack
    bool empty() const { return order.empty(); }
};

class FeederNetwork {
public:
    std::vector<BusRecord> buses;
    std::vector<BranchRecord> branches;
    int slack_bus = 1;   // bus id, not index
    PerUnitBase base;
    bool per_unit = false;
    Topology topology;

    int n_bus() const { return static_cast<int>(buses.size()); }
    int n_branch() const { return static_cast<int>(branches.size()); }

    // Dense index of a bus id; throws ConfigError for unknown ids.
    int index_of(int bus_id) const;
    bool has_bus(int bus_id) const { return index_.count(bus_id) > 0; }
    int id_of(int index) const { return buses.at(index).id; }
    int slack_index() const { return index_of(slack_bus); }

    // Rebuilds the id lookup after buses are (re)populated.
    void reindex();

private:
    std::unordered_map<int, int> index_;
};

// Reads buses.csv + branches.csv + the feeder config JSON
// ({"base_kv": .., "base_mva": .., "slack_bus": ..}) into a validated
// physical-unit network with topology resolved. Schema or cross-reference
// problems throw ConfigError naming file, row and field.
FeederNetwork parse_feeder(const std::string& bus_file,
                           const std::string& branch_file,
                           const std::string& config_file);

// Checks that the branch set is a spanning tree rooted at the slack bus and
// returns parent/children maps plus a breadth-first ordering. Throws
// ConfigError listing the buses on a cycle or unreachable from the slack.
Topology validate_radial(const FeederNetwork& network);

// r,x -> /Z_base; loads -> /base_mva; i_max -> /I_base. Throws ConfigError
// if the network is already per-unit.
FeederNetwork to_per_unit(const FeederNetwork& network);
// Exact inverse of to_per_unit.
FeederNetwork to_physical(const FeederNetwork& network);

// Writes the network back to the three-file on-disk form; parse_feeder on
// the result reproduces the network field by field.
void write_feeder(const FeederNetwork& network,
                  const std::string& bus_file,
                  const std::string& branch_file,
                  const std::string& config_file);

// Stable fingerprint of the network data (ids, loads, impedances, bases);
// used to detect stale placement files.
std::string feeder_fingerprint(const FeederNetwork& network);

}  // namespace gridloss::model
