#pragma once

// CSV layouts read by the plotting scripts and by `compare`.
//   stats:     t,mean,variance,ci_low,ci_high
//   trial:     t,z
//   field:     "# {json}" header line, then k1,k2,re,im (upper half lattice)
//   physical:  x,y,omega
//   slice:     p,q,u0,u1
//   re:        t,uhat,zbar,re

#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "qss/ensemble.hpp"
#include "qss/errors.hpp"
#include "qss/kolmogorov.hpp"
#include "qss/spectral.hpp"

namespace qss {

namespace fs = std::filesystem;

class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

inline std::ofstream open_csv(const fs::path& path) {
    if (path.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
        if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
    }
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.precision(std::numeric_limits<double>::max_digits10);
    return out;
}

inline void close_csv(std::ofstream& out, const fs::path& path) {
    out.close();
    if (!out) throw IoError("write failed for " + path.string());
}

inline void write_stats_csv(const fs::path& path, const EnsembleStats& s) {
    auto out = open_csv(path);
    out << "t,mean,variance,ci_low,ci_high\n";
    for (std::size_t k = 0; k < s.times.size(); ++k)
        out << s.times[k] << ',' << s.mean[k] << ',' << s.variance[k] << ',' << s.ci_low[k] << ',' << s.ci_high[k]
            << '\n';
    close_csv(out, path);
}

inline void write_trial_csv(const fs::path& path, const std::vector<double>& t, const std::vector<double>& z) {
    auto out = open_csv(path);
    out << "t,z\n";
    for (std::size_t k = 0; k < t.size(); ++k) out << t[k] << ',' << z[k] << '\n';
    close_csv(out, path);
}

inline void write_field_csv(const fs::path& path, const SpectralField& f, nlohmann::json meta = nlohmann::json::object()) {
    meta["delta"] = f.delta();
    meta["kmax"] = f.kmax();
    auto out = open_csv(path);
    out << "# " << meta.dump() << '\n' << "k1,k2,re,im\n";
    const auto& lat = f.lattice();
    for (std::size_t i = 0; i < lat.size(); ++i) {
        const auto k = lat.at(i);
        const auto a = f.half()[i];
        out << k.k1 << ',' << k.k2 << ',' << a.real() << ',' << a.imag() << '\n';
    }
    close_csv(out, path);
}

inline void write_physical_csv(const fs::path& path, const PhysicalGrid& g) {
    auto out = open_csv(path);
    out << "x,y,omega\n";
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) out << g.x(i) << ',' << g.y(j) << ',' << g(i, j) << '\n';
    close_csv(out, path);
}

inline void write_slice_csv(const fs::path& path, const PQGrid& g, const GridField& u0, const GridField& u1) {
    auto out = open_csv(path);
    out << "p,q,u0,u1\n";
    for (int j = 0; j < g.b.n; ++j)
        for (int i = 0; i < g.a.n; ++i) out << g.a.x(i) << ',' << g.b.x(j) << ',' << u0(i, j) << ',' << u1(i, j) << '\n';
    close_csv(out, path);
}

inline void write_re_csv(const fs::path& path, const std::vector<double>& t, const std::vector<double>& uhat,
                         const std::vector<double>& zbar, const std::vector<double>& re) {
    auto out = open_csv(path);
    out << "t,uhat,zbar,re\n";
    for (std::size_t k = 0; k < t.size(); ++k) out << t[k] << ',' << uhat[k] << ',' << zbar[k] << ',' << re[k] << '\n';
    close_csv(out, path);
}

/// Numeric CSV with a header row; '#' lines are skipped.
struct CsvTable {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> data;  // one vector per column

    const std::vector<double>& column(const std::string& name) const {
        for (std::size_t c = 0; c < columns.size(); ++c)
            if (columns[c] == name) return data[c];
        throw ConfigError("CSV has no column '" + name + "'");
    }
};

inline CsvTable read_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    CsvTable t;
    std::string line;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (t.columns.empty()) {
            t.columns = cells;
            t.data.assign(cells.size(), {});
            continue;
        }
        if (cells.size() != t.columns.size())
            throw ConfigError(path.string() + ":" + std::to_string(row) + ": expected " +
                              std::to_string(t.columns.size()) + " fields");
        for (std::size_t c = 0; c < cells.size(); ++c) {
            try {
                std::size_t used = 0;
                t.data[c].push_back(std::stod(cells[c], &used));
            } catch (const std::exception&) {
                // "nan" is accepted by stod; anything else is malformed.
                throw ConfigError(path.string() + ":" + std::to_string(row) + ": bad number '" + cells[c] + "'");
            }
        }
    }
    if (t.columns.empty()) throw ConfigError(path.string() + ": empty CSV");
    return t;
}

}  // namespace qss
