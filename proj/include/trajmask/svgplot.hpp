#pragma once

#include <string>
#include <vector>

#include "trajmask/csv.hpp"

namespace trajmask {

struct PlotSeries {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;   // mean line
    std::vector<double> lo;  // optional band; empty or same size as x
    std::vector<double> hi;
};

// Self-contained SVG line chart: axes, ticks, legend, optional min/max band
// per series. No external renderer involved.
void render_line_chart(const std::string& title, const std::string& xlabel,
                       const std::string& ylabel, const std::vector<PlotSeries>& series,
                       const std::string& out_path);

// Builds chart series for a plot kind from a parsed CSV. Kinds:
//   loss     step,loss,retrieval_acc,wall_ms   -> loss curve
//   probe    horizon,encoder,seed,mse          -> one line per encoder
//   rl       layout,{mode|arm},seed,step,return-> one line per (layout,group),
//                                                band spans min/max over seeds
//   scaling  tier,size,scale,seed,score        -> one line per (tier,scale)
// Throws ConfigError on missing columns or when only a header is present.
std::vector<PlotSeries> build_plot_series(const std::string& kind, const CsvTable& table,
                                          const std::string& csv_path);

void plot_csv(const std::string& kind, const std::string& csv_path, const std::string& out_path);

}  // namespace trajmask
