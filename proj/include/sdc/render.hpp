#pragma once

// Figure rendering from the experiment CSV outputs. Inputs are recognized by
// filename; anything with a recognized name but the wrong columns raises
// SchemaMismatch naming the offending file and column.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "sdc/errors.hpp"
#include "sdc/svg.hpp"

namespace sdc::render {

namespace fs = std::filesystem;

struct Csv {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    int column(const std::string& name, const std::string& file) const {
        auto it = std::find(columns.begin(), columns.end(), name);
        if (it == columns.end())
            throw SchemaMismatch("render: " + file + " is missing column '" + name + "'");
        return static_cast<int>(it - columns.begin());
    }
};

inline Csv read_csv(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw SchemaMismatch("render: cannot open " + path.string());
    Csv csv;
    std::string line;
    bool have_header = false;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (!line.empty() && line.back() == ',') cells.push_back("");
        if (!have_header) {
            csv.columns = cells;
            have_header = true;
        } else {
            cells.resize(csv.columns.size());
            csv.rows.push_back(cells);
        }
    }
    return csv;
}

inline double cell_double(const std::string& s) {
    if (s.empty()) return std::numeric_limits<double>::quiet_NaN();
    return std::stod(s);
}

// ---------------------------------------------------------------------------
// individual figures
// ---------------------------------------------------------------------------

inline void render_mcf_summary(const fs::path& in, const fs::path& out) {
    Csv csv = read_csv(in);
    int cn = csv.column("N", in.filename().string());
    int cm = csv.column("median_mcf_hz", in.filename().string());
    int cf = csv.column("feasible_fraction", in.filename().string());

    svg::Series mcf, frac;
    mcf.label = "median MCF [Hz]";
    frac.label = "feasible fraction";
    frac.secondary_axis = true;
    frac.dashed = true;
    for (const auto& row : csv.rows) {
        double n = cell_double(row[cn]);
        double m = cell_double(row[cm]);
        double f = cell_double(row[cf]);
        if (std::isfinite(m)) {
            mcf.x.push_back(n);
            mcf.y.push_back(m);
        }
        frac.x.push_back(n);
        frac.y.push_back(f);
    }

    svg::LinePlot plot;
    plot.title = "Minimum control frequency vs. training set size";
    plot.x_label = "N";
    plot.y_label = "MCF [Hz]";
    plot.y2_label = "feasible fraction";
    plot.series = {mcf, frac};
    std::ofstream os(out);
    plot.render(os);
}

struct TrajFile {
    int n_points = 0;
    double xi = 0.0;
    int trial = 0;
    fs::path path;
};

inline bool parse_traj_name(const fs::path& p, TrajFile& out) {
    // traj_N<number>_xi<number>_trial<number>.csv
    std::string name = p.filename().string();
    if (name.rfind("traj_N", 0) != 0 || p.extension() != ".csv") return false;
    int n, trial;
    double xi;
    if (std::sscanf(name.c_str(), "traj_N%d_xi%lf_trial%d.csv", &n, &xi, &trial) != 3)
        return false;
    out = TrajFile{n, xi, trial, p};
    return true;
}

// trajectories on a shared time grid: per (N, xi) band of the x-position mean
// +- one standard deviation across trials, legend ordered by xi
inline void render_trajectories(const std::vector<TrajFile>& files, int n_points,
                                const fs::path& out) {
    std::map<double, std::vector<fs::path>> by_xi;
    for (const auto& f : files)
        if (f.n_points == n_points) by_xi[f.xi].push_back(f.path);

    const int grid = 160;
    svg::LinePlot plot;
    plot.title = "Closed-loop x position, N = " + std::to_string(n_points);
    plot.x_label = "t [s]";
    plot.y_label = "x [m]";

    int color = 0;
    for (const auto& [xi, paths] : by_xi) {
        std::vector<std::vector<double>> resampled;
        double horizon = 0.0;
        for (const auto& p : paths) {
            Csv csv = read_csv(p);
            int ct = csv.column("t", p.filename().string());
            int cx = csv.column("x_1", p.filename().string());
            std::vector<double> t, x;
            for (const auto& row : csv.rows) {
                t.push_back(cell_double(row[ct]));
                x.push_back(cell_double(row[cx]));
            }
            if (t.size() < 2) continue;
            horizon = std::max(horizon, t.back());
            std::vector<double> r(grid);
            std::size_t k = 0;
            for (int g = 0; g < grid; ++g) {
                double tt = t.back() * g / (grid - 1);
                while (k + 1 < t.size() && t[k + 1] < tt) ++k;
                double w = (t[k + 1] > t[k]) ? (tt - t[k]) / (t[k + 1] - t[k]) : 0.0;
                w = std::clamp(w, 0.0, 1.0);
                r[g] = x[k] + w * (x[std::min(k + 1, x.size() - 1)] - x[k]);
            }
            resampled.push_back(std::move(r));
        }
        if (resampled.empty()) continue;

        svg::Series mean_series;
        mean_series.label = "xi = " + svg::fmt(xi);
        svg::Band band;
        band.series_index = color;
        for (int g = 0; g < grid; ++g) {
            double tt = horizon * g / (grid - 1);
            double mean = 0.0;
            for (const auto& r : resampled) mean += r[g];
            mean /= resampled.size();
            double var = 0.0;
            for (const auto& r : resampled) var += (r[g] - mean) * (r[g] - mean);
            double sd = resampled.size() > 1 ? std::sqrt(var / (resampled.size() - 1)) : 0.0;
            mean_series.x.push_back(tt);
            mean_series.y.push_back(mean);
            band.x.push_back(tt);
            band.lo.push_back(mean - sd);
            band.hi.push_back(mean + sd);
        }
        plot.series.push_back(std::move(mean_series));
        plot.bands.push_back(std::move(band));
        ++color;
    }
    if (plot.series.empty()) return;
    std::ofstream os(out);
    plot.render(os);
}

// cells below 50% feasibility stay white, matching the tradeoff figure
inline void render_cost_heatmap(const fs::path& in, const fs::path& out) {
    Csv csv = read_csv(in);
    std::string file = in.filename().string();
    int cn = csv.column("N", file);
    int cf = csv.column("f_c_hz", file);
    int cff = csv.column("feasible_fraction", file);
    int cc = csv.column("mean_cost", file);

    std::vector<double> ns, fs_;
    for (const auto& row : csv.rows) {
        double n = cell_double(row[cn]);
        double f = cell_double(row[cf]);
        if (std::find(ns.begin(), ns.end(), n) == ns.end()) ns.push_back(n);
        if (std::find(fs_.begin(), fs_.end(), f) == fs_.end()) fs_.push_back(f);
    }
    std::sort(ns.begin(), ns.end());
    std::sort(fs_.begin(), fs_.end());

    svg::Heatmap map;
    map.title = "Mean closed-loop cost";
    map.x_label = "f_c [Hz]";
    map.y_label = "N";
    map.x = fs_;
    map.y = ns;
    map.values.assign(ns.size(),
                      std::vector<double>(fs_.size(), std::numeric_limits<double>::quiet_NaN()));
    std::vector<double> finite;
    for (const auto& row : csv.rows) {
        double n = cell_double(row[cn]);
        double f = cell_double(row[cf]);
        double frac = cell_double(row[cff]);
        double cost = cell_double(row[cc]);
        std::size_t i = std::find(ns.begin(), ns.end(), n) - ns.begin();
        std::size_t j = std::find(fs_.begin(), fs_.end(), f) - fs_.begin();
        if (frac >= 0.5 && std::isfinite(cost)) {
            map.values[i][j] = cost;
            finite.push_back(cost);
        }
    }
    if (!finite.empty()) {
        std::sort(finite.begin(), finite.end());
        map.contour_levels = {finite[finite.size() / 4], finite[finite.size() / 2],
                              finite[3 * finite.size() / 4]};
    }
    std::ofstream os(out);
    map.render(os);
}

// returns the number of figures produced; zero means nothing recognized
inline int render_outputs(const fs::path& results_dir, const fs::path& out_dir) {
    int produced = 0;
    fs::create_directories(out_dir);

    if (fs::exists(results_dir / "mcf_vs_n_summary.csv")) {
        render_mcf_summary(results_dir / "mcf_vs_n_summary.csv", out_dir / "mcf_vs_n.svg");
        ++produced;
    }
    if (fs::exists(results_dir / "cost_grid.csv")) {
        render_cost_heatmap(results_dir / "cost_grid.csv", out_dir / "cost_heatmap.svg");
        ++produced;
    }
    std::vector<TrajFile> traj_files;
    for (const auto& entry : fs::directory_iterator(results_dir)) {
        TrajFile f;
        if (entry.is_regular_file() && parse_traj_name(entry.path(), f))
            traj_files.push_back(f);
    }
    std::sort(traj_files.begin(), traj_files.end(), [](const TrajFile& a, const TrajFile& b) {
        return std::tie(a.n_points, a.xi, a.trial) < std::tie(b.n_points, b.xi, b.trial);
    });
    std::vector<int> sizes;
    for (const auto& f : traj_files)
        if (std::find(sizes.begin(), sizes.end(), f.n_points) == sizes.end())
            sizes.push_back(f.n_points);
    for (int n : sizes) {
        render_trajectories(traj_files, n,
                            out_dir / ("trajectories_N" + std::to_string(n) + ".svg"));
        ++produced;
    }
    return produced;
}

} // namespace sdc::render
