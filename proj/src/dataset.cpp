/**
 * @file dataset.cpp
 * @brief Dataset validation and the binary case container.
 */

#include "meshderiv/dataset.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "meshderiv/errors.hpp"

namespace meshderiv {

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");

void GlobalParams::set(const std::string& name, double value) {
    for (auto& kv : items_) {
        if (kv.first == name) {
            kv.second = value;
            return;
        }
    }
    items_.emplace_back(name, value);
}

std::optional<double> GlobalParams::get(const std::string& name) const {
    for (const auto& kv : items_) {
        if (kv.first == name) return kv.second;
    }
    return std::nullopt;
}

double GlobalParams::at(const std::string& name) const {
    auto v = get(name);
    if (!v) throw InvalidArgument("missing global parameter '" + name + "'");
    return *v;
}

std::vector<double> GlobalParams::values() const {
    std::vector<double> out;
    for (const auto& kv : items_) out.push_back(kv.second);
    return out;
}

std::vector<std::string> GlobalParams::names() const {
    std::vector<std::string> out;
    for (const auto& kv : items_) out.push_back(kv.first);
    return out;
}

std::string GlobalParams::check() const {
    for (const auto& [k, v] : items_) {
        if (!std::isfinite(v)) return "global '" + k + "' is not finite";
    }
    if (auto dt = get("dt"); dt && !(*dt > 0.0)) return "dt must be positive";
    return {};
}

const char* split_name(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
        case Split::Unassigned: return "none";
    }
    return "none";
}

Split parse_split(const std::string& s) {
    if (s == "train") return Split::Train;
    if (s == "val") return Split::Val;
    if (s == "test") return Split::Test;
    if (s == "none") return Split::Unassigned;
    throw InvalidArgument("unknown split label '" + s + "'");
}

double TrajectoryCase::dt() const { return globals.at("dt"); }

std::vector<const TrajectoryCase*> TrajectoryDataset::by_split(Split s) const {
    std::vector<const TrajectoryCase*> out;
    for (const auto& c : cases) {
        if (c.split == s) out.push_back(&c);
    }
    return out;
}

std::vector<std::string> validate_dataset(const TrajectoryDataset& ds) {
    std::vector<std::string> v;
    for (std::size_t ci = 0; ci < ds.cases.size(); ++ci) {
        const TrajectoryCase& c = ds.cases[ci];
        const std::string tag = "case " + std::to_string(ci) + " (" + c.id + ")";
        try {
            c.graph.mesh.validate();
            c.graph.edges.validate(c.graph.mesh.n_nodes());
        } catch (const Error& e) {
            v.push_back(tag + ": " + e.what());
            continue;
        }
        if (auto msg = c.globals.check(); !msg.empty()) v.push_back(tag + ": " + msg);
        const auto dt = c.globals.get("dt");
        if (!dt) v.push_back(tag + ": missing dt global");
        if (c.frames.empty()) {
            v.push_back(tag + ": no frames");
            continue;
        }
        if (c.channels.empty()) v.push_back(tag + ": no channels");

        const auto n = static_cast<Eigen::Index>(c.graph.mesh.n_nodes());
        const auto nc = static_cast<Eigen::Index>(c.channels.size());
        for (std::size_t k = 0; k < c.frames.size(); ++k) {
            const Field& f = c.frames[k].values;
            if (f.rows() != n || f.cols() != nc) {
                v.push_back(tag + ": frame " + std::to_string(k) + " shape " + std::to_string(f.rows()) + "x" +
                            std::to_string(f.cols()) + " does not match mesh " + std::to_string(n) + "x" +
                            std::to_string(nc));
                break;
            }
            if (!f.allFinite()) {
                v.push_back(tag + ": frame " + std::to_string(k) + " has non-finite values");
                break;
            }
        }
        for (std::size_t k = 1; k < c.frames.size(); ++k) {
            const double t0 = c.frames[k - 1].time;
            const double t1 = c.frames[k].time;
            if (!(t1 > t0)) {
                v.push_back(tag + ": timestamp " + std::to_string(k) + " is not increasing");
                break;
            }
            if (dt && *dt > 0.0 && std::abs((t1 - t0) - *dt) > 1e-9 * std::max(1.0, std::abs(t1)) + 1e-6 * *dt) {
                v.push_back(tag + ": timestamp spacing at " + std::to_string(k) + " differs from dt");
                break;
            }
        }
    }
    return v;
}

namespace {

constexpr char kMagic[8] = {'M', 'D', 'T', 'R', 'A', 'J', '\0', '\0'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

void put_str(std::ostream& os, const std::string& s) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

template <class T>
T get(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw IoError("container truncated");
    return v;
}

std::string get_str(std::istream& is) {
    const auto n = get<std::uint32_t>(is);
    if (n > (1u << 20)) throw IoError("container string too long");
    std::string s(n, '\0');
    is.read(s.data(), n);
    if (!is) throw IoError("container truncated");
    return s;
}

}  // namespace

void write_case(std::ostream& os, const TrajectoryCase& c) {
    const std::size_t n = c.graph.mesh.n_nodes();
    const std::size_t nc = c.channels.size();
    os.write(kMagic, sizeof(kMagic));
    put<std::uint32_t>(os, kVersion);
    put_str(os, c.id);
    put<std::uint8_t>(os, static_cast<std::uint8_t>(c.split));
    put<std::uint64_t>(os, n);
    put<std::uint64_t>(os, nc);
    put<std::uint64_t>(os, c.frames.size());
    put<std::uint64_t>(os, c.graph.edges.size());
    put<double>(os, c.globals.get("dt").value_or(0.0));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(c.globals.size()));
    for (const auto& [k, v] : c.globals.items()) {
        put_str(os, k);
        put<double>(os, v);
    }
    for (const auto& ch : c.channels) put_str(os, ch);
    for (const Vec2& p : c.graph.mesh.positions) {
        put<double>(os, p.x);
        put<double>(os, p.y);
    }
    put<std::uint8_t>(os, c.graph.edges.symmetric ? 1 : 0);
    for (const auto& [i, j] : c.graph.edges.edges) {
        put<std::uint64_t>(os, i);
        put<std::uint64_t>(os, j);
    }
    for (const StateField& f : c.frames) {
        if (static_cast<std::size_t>(f.values.rows()) != n || static_cast<std::size_t>(f.values.cols()) != nc) {
            throw InvalidArgument("frame shape does not match case " + c.id);
        }
        put<double>(os, f.time);
        os.write(reinterpret_cast<const char*>(f.values.data()),
                 static_cast<std::streamsize>(n * nc * sizeof(double)));
    }
    if (!os) throw IoError("failed writing case " + c.id);
}

TrajectoryCase read_case(std::istream& is) {
    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw IoError("not a trajectory container");
    const auto version = get<std::uint32_t>(is);
    if (version != kVersion) throw IoError("unsupported container version " + std::to_string(version));
    TrajectoryCase c;
    c.id = get_str(is);
    const auto split = get<std::uint8_t>(is);
    if (split > 3) throw IoError("bad split label");
    c.split = static_cast<Split>(split);
    const auto n = get<std::uint64_t>(is);
    const auto nc = get<std::uint64_t>(is);
    const auto nf = get<std::uint64_t>(is);
    const auto ne = get<std::uint64_t>(is);
    if (n > (1u << 26) || nc > 4096 || nf > (1u << 24) || ne > (1u << 30)) throw IoError("implausible header");
    (void)get<double>(is);  // dt duplicate of the "dt" global
    const auto ng = get<std::uint32_t>(is);
    for (std::uint32_t g = 0; g < ng; ++g) {
        std::string k = get_str(is);
        c.globals.set(k, get<double>(is));
    }
    for (std::uint64_t ch = 0; ch < nc; ++ch) c.channels.push_back(get_str(is));
    c.graph.mesh.positions.resize(n);
    for (auto& p : c.graph.mesh.positions) {
        p.x = get<double>(is);
        p.y = get<double>(is);
    }
    c.graph.edges.symmetric = get<std::uint8_t>(is) != 0;
    c.graph.edges.edges.resize(ne);
    for (auto& e : c.graph.edges.edges) {
        e.first = static_cast<std::uint32_t>(get<std::uint64_t>(is));
        e.second = static_cast<std::uint32_t>(get<std::uint64_t>(is));
    }
    c.frames.resize(nf);
    for (auto& f : c.frames) {
        f.time = get<double>(is);
        f.values.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(nc));
        is.read(reinterpret_cast<char*>(f.values.data()), static_cast<std::streamsize>(n * nc * sizeof(double)));
        if (!is) throw IoError("container truncated in frames");
    }
    return c;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw IoError("cannot open " + tmp.string() + " for writing");
        os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!os) throw IoError("failed writing " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot rename " + tmp.string() + ": " + ec.message());
}

void save_case(const std::filesystem::path& path, const TrajectoryCase& c) {
    std::ostringstream os(std::ios::binary);
    write_case(os, c);
    write_file_atomic(path, os.str());
}

TrajectoryCase load_case(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    return read_case(is);
}

void save_dataset(const std::filesystem::path& dir, const TrajectoryDataset& ds) {
    std::ostringstream csv;
    csv.precision(17);
    csv << "case_id";
    if (!ds.cases.empty()) {
        for (const auto& name : ds.cases.front().globals.names()) csv << ',' << name;
    }
    csv << ",split\n";
    for (const auto& c : ds.cases) {
        save_case(dir / (c.id + ".mdtraj"), c);
        csv << c.id;
        for (const auto& name : ds.cases.front().globals.names()) csv << ',' << c.globals.get(name).value_or(NAN);
        csv << ',' << split_name(c.split) << '\n';
    }
    write_file_atomic(dir / "cases.csv", csv.str());
}

TrajectoryDataset load_dataset(const std::filesystem::path& dir) {
    std::ifstream is(dir / "cases.csv");
    if (!is) throw IoError("cannot open " + (dir / "cases.csv").string());
    TrajectoryDataset ds;
    std::string line;
    std::getline(is, line);  // header
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const std::string id = line.substr(0, line.find(','));
        ds.cases.push_back(load_case(dir / (id + ".mdtraj")));
    }
    return ds;
}

}  // namespace meshderiv
