#include "gridloss/feeder.hpp"

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <deque>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "gridloss/errors.hpp"

namespace gridloss::model {

namespace {

using nlohmann::json;

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
    if (!line.empty() && line.back() == ',') out.push_back("");
    return out;
}

// Minimal CSV table: comment ('#') and blank lines skipped, header
// validated against the required column list, optional columns may follow.
struct CsvTable {
    std::vector<std::string> columns;
    std::vector<std::pair<int, std::vector<std::string>>> rows;  // line number + cells
};

CsvTable read_csv(const std::string& path, const std::vector<std::string>& required) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path + ": cannot open file");
    CsvTable table;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        auto cells = split_csv(t);
        if (table.columns.empty()) {
            table.columns = cells;
            for (size_t i = 0; i < required.size(); ++i) {
                if (i >= cells.size() || cells[i] != required[i])
                    throw ConfigError(path + " row " + std::to_string(lineno) +
                                      ": expected column '" + required[i] + "' at position " +
                                      std::to_string(i + 1) + ", got '" +
                                      (i < cells.size() ? cells[i] : "") + "'");
            }
            continue;
        }
        table.rows.emplace_back(lineno, std::move(cells));
    }
    if (table.columns.empty()) throw ConfigError(path + ": missing header row");
    return table;
}

double parse_number(const std::string& path, int row, const std::string& field,
                    const std::string& cell) {
    try {
        size_t pos = 0;
        double v = std::stod(cell, &pos);
        if (pos != cell.size()) throw std::invalid_argument(cell);
        return v;
    } catch (const std::exception&) {
        throw ConfigError(path + " row " + std::to_string(row) + ": field '" + field +
                          "' is not a number ('" + cell + "')");
    }
}

int parse_int(const std::string& path, int row, const std::string& field,
              const std::string& cell) {
    int v = 0;
    auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (ec != std::errc{} || p != cell.data() + cell.size())
        throw ConfigError(path + " row " + std::to_string(row) + ": field '" + field +
                          "' is not an integer ('" + cell + "')");
    return v;
}

const std::string& cell_at(const std::string& path, int row,
                           const std::vector<std::string>& cells, size_t idx,
                           const std::string& field) {
    if (idx >= cells.size())
        throw ConfigError(path + " row " + std::to_string(row) + ": missing field '" +
                          field + "'");
    return cells[idx];
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

int FeederNetwork::index_of(int bus_id) const {
    auto it = index_.find(bus_id);
    if (it == index_.end())
        throw ConfigError("unknown bus id " + std::to_string(bus_id));
    return it->second;
}

void FeederNetwork::reindex() {
    index_.clear();
    for (int i = 0; i < n_bus(); ++i) {
        auto [it, inserted] = index_.emplace(buses[i].id, i);
        if (!inserted)
            throw ConfigError("duplicate bus id " + std::to_string(buses[i].id));
    }
}

FeederNetwork parse_feeder(const std::string& bus_file,
                           const std::string& branch_file,
                           const std::string& config_file) {
    FeederNetwork net;

    static const std::vector<std::string> bus_cols =
        {"id", "p_load_kw", "q_load_kvar", "v_min_pu", "v_max_pu"};
    static const std::vector<std::string> zip_cols =
        {"z_p", "i_p", "p_p", "z_q", "i_q", "p_q"};
    CsvTable buses = read_csv(bus_file, bus_cols);

    // ZIP override columns are all-or-nothing after the required five.
    bool has_zip = buses.columns.size() > bus_cols.size();
    if (has_zip) {
        for (size_t i = 0; i < zip_cols.size(); ++i) {
            size_t at = bus_cols.size() + i;
            if (at >= buses.columns.size() || buses.columns[at] != zip_cols[i])
                throw ConfigError(bus_file + ": optional ZIP override columns must be exactly " +
                                  "z_p,i_p,p_p,z_q,i_q,p_q");
        }
    }

    for (const auto& [row, cells] : buses.rows) {
        BusRecord b;
        b.id = parse_int(bus_file, row, "id", cell_at(bus_file, row, cells, 0, "id"));
        b.p_load = parse_number(bus_file, row, "p_load_kw", cell_at(bus_file, row, cells, 1, "p_load_kw"));
        b.q_load = parse_number(bus_file, row, "q_load_kvar", cell_at(bus_file, row, cells, 2, "q_load_kvar"));
        b.v_min = parse_number(bus_file, row, "v_min_pu", cell_at(bus_file, row, cells, 3, "v_min_pu"));
        b.v_max = parse_number(bus_file, row, "v_max_pu", cell_at(bus_file, row, cells, 4, "v_max_pu"));
        if (b.p_load < 0)
            throw ConfigError(bus_file + " row " + std::to_string(row) + ": p_load_kw must be >= 0");
        if (!(0 < b.v_min && b.v_min < b.v_max))
            throw ConfigError(bus_file + " row " + std::to_string(row) +
                              ": need 0 < v_min_pu < v_max_pu");
        if (has_zip) {
            // a bus opts in by filling all six cells; leaving the whole group
            // empty keeps the study-wide mix for that bus
            int filled = 0;
            for (size_t i = 0; i < 6; ++i)
                if (!cell_at(bus_file, row, cells, 5 + i, zip_cols[i]).empty()) ++filled;
            if (filled == 6) {
                std::array<double, 6> z{};
                for (size_t i = 0; i < 6; ++i)
                    z[i] = parse_number(bus_file, row, zip_cols[i],
                                        cell_at(bus_file, row, cells, 5 + i, zip_cols[i]));
                b.zip_override = z;
            } else if (filled != 0) {
                throw ConfigError(bus_file + " row " + std::to_string(row) +
                                  ": ZIP override needs all six values or none");
            }
        }
        net.buses.push_back(b);
    }
    if (net.buses.empty()) throw ConfigError(bus_file + ": no bus rows");
    net.reindex();

    static const std::vector<std::string> branch_cols = {"from", "to", "r_ohm", "x_ohm", "i_max_a"};
    CsvTable branches = read_csv(branch_file, branch_cols);
    for (const auto& [row, cells] : branches.rows) {
        BranchRecord br;
        br.from_bus = parse_int(branch_file, row, "from", cell_at(branch_file, row, cells, 0, "from"));
        br.to_bus = parse_int(branch_file, row, "to", cell_at(branch_file, row, cells, 1, "to"));
        br.r = parse_number(branch_file, row, "r_ohm", cell_at(branch_file, row, cells, 2, "r_ohm"));
        br.x = parse_number(branch_file, row, "x_ohm", cell_at(branch_file, row, cells, 3, "x_ohm"));
        if (cells.size() > 4 && !cells[4].empty())
            br.i_max = parse_number(branch_file, row, "i_max_a", cells[4]);
        if (br.from_bus == br.to_bus)
            throw ConfigError(branch_file + " row " + std::to_string(row) +
                              ": from and to are both bus " + std::to_string(br.from_bus));
        if (br.r < 0 || br.x < 0)
            throw ConfigError(branch_file + " row " + std::to_string(row) + ": negative impedance");
        if (br.r == 0 && br.x == 0)
            throw ConfigError(branch_file + " row " + std::to_string(row) + ": r and x are both zero");
        if (br.i_max && *br.i_max <= 0)
            throw ConfigError(branch_file + " row " + std::to_string(row) + ": i_max_a must be > 0");
        for (int endpoint : {br.from_bus, br.to_bus})
            if (!net.has_bus(endpoint))
                throw ConfigError(branch_file + " row " + std::to_string(row) +
                                  ": branch endpoint " + std::to_string(endpoint) +
                                  " is not a bus id");
        net.branches.push_back(br);
    }

    std::ifstream cfg(config_file);
    if (!cfg) throw ConfigError(config_file + ": cannot open file");
    json j;
    try {
        j = json::parse(cfg);
    } catch (const json::exception& e) {
        throw ConfigError(config_file + ": " + e.what());
    }
    for (const char* key : {"base_kv", "base_mva"}) {
        if (!j.contains(key) || !j[key].is_number() || j[key].get<double>() <= 0)
            throw ConfigError(config_file + ": '" + key + "' must be a positive number");
    }
    net.base.base_kv = j["base_kv"].get<double>();
    net.base.base_mva = j["base_mva"].get<double>();
    net.slack_bus = 1;
    if (j.contains("slack_bus")) {
        if (!j["slack_bus"].is_number_integer())
            throw ConfigError(config_file + ": 'slack_bus' must be an integer");
        net.slack_bus = j["slack_bus"].get<int>();
    }
    if (!net.has_bus(net.slack_bus))
        throw ConfigError(config_file + ": slack bus " + std::to_string(net.slack_bus) +
                          " is not a bus id");

    net.topology = validate_radial(net);
    return net;
}

Topology validate_radial(const FeederNetwork& network) {
    int n = network.n_bus();
    if (network.n_branch() != n - 1)
        throw ConfigError("not a tree: " + std::to_string(n) + " buses need " +
                          std::to_string(n - 1) + " branches, got " +
                          std::to_string(network.n_branch()));

    // Undirected adjacency; branch orientation in the file does not matter.
    std::vector<std::vector<std::pair<int, int>>> adj(n);  // (neighbor, branch index)
    for (int e = 0; e < network.n_branch(); ++e) {
        int u = network.index_of(network.branches[e].from_bus);
        int v = network.index_of(network.branches[e].to_bus);
        adj[u].emplace_back(v, e);
        adj[v].emplace_back(u, e);
    }

    Topology topo;
    topo.parent.assign(n, -1);
    topo.children.assign(n, {});
    topo.branch_into.assign(n, -1);
    std::vector<char> seen(n, 0);

    int root = network.slack_index();
    std::deque<int> queue{root};
    seen[root] = 1;
    topo.order.push_back(root);
    while (!queue.empty()) {
        int u = queue.front();
        queue.pop_front();
        for (auto [v, e] : adj[u]) {
            if (e == topo.branch_into[u]) continue;  // the edge we arrived through
            if (seen[v]) {
                // Walk both parent chains up to the meeting point to name the cycle.
                std::vector<int> cycle{network.id_of(u), network.id_of(v)};
                std::vector<char> on_u_path(n, 0);
                for (int w = u; w != -1; w = topo.parent[w]) on_u_path[w] = 1;
                int w = v;
                while (!on_u_path[w]) {
                    w = topo.parent[w];
                    cycle.push_back(network.id_of(w));
                }
                for (int t = topo.parent[u]; t != -1 && t != w; t = topo.parent[t])
                    cycle.push_back(network.id_of(t));
                std::sort(cycle.begin(), cycle.end());
                cycle.erase(std::unique(cycle.begin(), cycle.end()), cycle.end());
                std::string msg = "cycle detected through buses {";
                for (size_t i = 0; i < cycle.size(); ++i)
                    msg += (i ? "," : "") + std::to_string(cycle[i]);
                throw ConfigError(msg + "}");
            }
            seen[v] = 1;
            topo.parent[v] = u;
            topo.branch_into[v] = e;
            topo.children[u].push_back(v);
            topo.order.push_back(v);
            queue.push_back(v);
        }
    }

    if (static_cast<int>(topo.order.size()) != n) {
        std::string msg = "disconnected buses {";
        bool first = true;
        for (int i = 0; i < n; ++i)
            if (!seen[i]) {
                msg += (first ? "" : ",") + std::to_string(network.id_of(i));
                first = false;
            }
        throw ConfigError(msg + "} unreachable from slack bus " +
                          std::to_string(network.slack_bus));
    }
    return topo;
}

FeederNetwork to_per_unit(const FeederNetwork& network) {
    if (network.per_unit)
        throw ConfigError("network is already in per-unit");
    FeederNetwork out = network;
    double z_base = network.base.impedance_ohm();
    double i_base = network.base.current_a();
    double s_base_kw = network.base.base_mva * 1e3;
    for (auto& b : out.buses) {
        b.p_load /= s_base_kw;
        b.q_load /= s_base_kw;
    }
    for (auto& br : out.branches) {
        br.r /= z_base;
        br.x /= z_base;
        if (br.i_max) br.i_max = *br.i_max / i_base;
    }
    out.per_unit = true;
    out.reindex();
    return out;
}

FeederNetwork to_physical(const FeederNetwork& network) {
    if (!network.per_unit)
        throw ConfigError("network is already in physical units");
    FeederNetwork out = network;
    double z_base = network.base.impedance_ohm();
    double i_base = network.base.current_a();
    double s_base_kw = network.base.base_mva * 1e3;
    for (auto& b : out.buses) {
        b.p_load *= s_base_kw;
        b.q_load *= s_base_kw;
    }
    for (auto& br : out.branches) {
        br.r *= z_base;
        br.x *= z_base;
        if (br.i_max) br.i_max = *br.i_max * i_base;
    }
    out.per_unit = false;
    out.reindex();
    return out;
}

void write_feeder(const FeederNetwork& network,
                  const std::string& bus_file,
                  const std::string& branch_file,
                  const std::string& config_file) {
    bool has_zip = std::any_of(network.buses.begin(), network.buses.end(),
                               [](const BusRecord& b) { return b.zip_override.has_value(); });
    std::ofstream bf(bus_file);
    if (!bf) throw ConfigError(bus_file + ": cannot open for writing");
    bf << "id,p_load_kw,q_load_kvar,v_min_pu,v_max_pu";
    if (has_zip) bf << ",z_p,i_p,p_p,z_q,i_q,p_q";
    bf << "\n";
    for (const auto& b : network.buses) {
        bf << b.id << ',' << fmt(b.p_load) << ',' << fmt(b.q_load) << ',' << fmt(b.v_min)
           << ',' << fmt(b.v_max);
        if (has_zip) {
            if (b.zip_override)
                for (double v : *b.zip_override) bf << ',' << fmt(v);
            else
                bf << ",,,,,,";  // this bus keeps the study-wide mix
        }
        bf << "\n";
    }

    std::ofstream rf(branch_file);
    if (!rf) throw ConfigError(branch_file + ": cannot open for writing");
    rf << "from,to,r_ohm,x_ohm,i_max_a\n";
    for (const auto& br : network.branches) {
        rf << br.from_bus << ',' << br.to_bus << ',' << fmt(br.r) << ',' << fmt(br.x) << ',';
        if (br.i_max) rf << fmt(*br.i_max);
        rf << "\n";
    }

    json j;
    j["base_kv"] = network.base.base_kv;
    j["base_mva"] = network.base.base_mva;
    j["slack_bus"] = network.slack_bus;
    std::ofstream cf(config_file);
    if (!cf) throw ConfigError(config_file + ": cannot open for writing");
    cf << j.dump(2) << "\n";
}

std::string feeder_fingerprint(const FeederNetwork& network) {
    std::string blob;
    blob += fmt(network.base.base_kv) + "|" + fmt(network.base.base_mva) + "|" +
            std::to_string(network.slack_bus) + "|";
    for (const auto& b : network.buses)
        blob += std::to_string(b.id) + "," + fmt(b.p_load) + "," + fmt(b.q_load) + "," +
                fmt(b.v_min) + "," + fmt(b.v_max) + ";";
    for (const auto& br : network.branches)
        blob += std::to_string(br.from_bus) + "," + std::to_string(br.to_bus) + "," +
                fmt(br.r) + "," + fmt(br.x) + ";";
    // FNV-1a, 64 bit
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : blob) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace gridloss::model
