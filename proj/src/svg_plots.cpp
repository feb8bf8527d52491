#include "caformer/svg_plots.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "caformer/error.hpp"

namespace caformer {

namespace {

constexpr const char* kTruthColor = "#1f77b4"; // blue
constexpr const char* kPredColor = "#ff7f0e";  // orange

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

std::string csv_num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::ofstream open_out(const std::string& path, const char* what) {
    std::ofstream out(path);
    if (!out) throw ContractError(std::string(what) + ": cannot write '" + path + "'");
    return out;
}

std::string escape_xml(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            default: out += c;
        }
    }
    return out;
}

} // namespace

void write_overlay_svg(const std::string& path, const std::vector<double>& truth,
                       const std::vector<double>& pred, const std::string& title) {
    if (truth.empty() || truth.size() != pred.size())
        throw ContractError("overlay svg: truth/pred must be nonempty and equal-length");
    const double W = 720, H = 300, ML = 50, MR = 15, MT = 30, MB = 25;
    const double plot_w = W - ML - MR, plot_h = H - MT - MB;
    double lo = truth[0], hi = truth[0];
    for (double v : truth) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    for (double v : pred) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (hi == lo) {
        hi += 0.5;
        lo -= 0.5;
    } else {
        const double pad = 0.05 * (hi - lo);
        hi += pad;
        lo -= pad;
    }
    const std::size_t n = truth.size();
    auto x_of = [&](std::size_t i) {
        return ML + (n == 1 ? plot_w / 2 : plot_w * static_cast<double>(i) /
                                               static_cast<double>(n - 1));
    };
    auto y_of = [&](double v) { return MT + plot_h * (1.0 - (v - lo) / (hi - lo)); };
    auto polyline = [&](const std::vector<double>& vs, const char* color) {
        std::string s = "  <polyline fill=\"none\" stroke=\"";
        s += color;
        s += "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < n; ++i) {
            if (i) s += ' ';
            s += num(x_of(i)) + "," + num(y_of(vs[i]));
        }
        s += "\"/>\n";
        if (n < 3) // too short for a visible line: mark the points themselves
            for (std::size_t i = 0; i < n; ++i)
                s += "  <circle cx=\"" + num(x_of(i)) + "\" cy=\"" + num(y_of(vs[i])) +
                     "\" r=\"2.5\" fill=\"" + color + "\"/>\n";
        return s;
    };

    std::ofstream out = open_out(path, "overlay svg");
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
        << "\" viewBox=\"0 0 " << W << " " << H << "\">\n";
    out << "  <rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
    out << "  <text x=\"" << ML << "\" y=\"18\" font-family=\"sans-serif\" font-size=\"13\">"
        << escape_xml(title) << "</text>\n";
    out << "  <rect x=\"" << ML << "\" y=\"" << MT << "\" width=\"" << num(plot_w)
        << "\" height=\"" << num(plot_h) << "\" fill=\"none\" stroke=\"#999\"/>\n";
    out << "  <text x=\"" << num(ML + 4) << "\" y=\"" << num(MT + 14)
        << "\" font-family=\"sans-serif\" font-size=\"11\" fill=\"" << kTruthColor
        << "\">truth</text>\n";
    out << "  <text x=\"" << num(ML + 50) << "\" y=\"" << num(MT + 14)
        << "\" font-family=\"sans-serif\" font-size=\"11\" fill=\"" << kPredColor
        << "\">prediction</text>\n";
    out << polyline(truth, kTruthColor);
    out << polyline(pred, kPredColor);
    out << "</svg>\n";
}

void write_overlay_csv(const std::string& path, const std::vector<double>& truth,
                       const std::vector<double>& pred) {
    if (truth.size() != pred.size())
        throw ContractError("overlay csv: truth/pred must be equal-length");
    std::ofstream out = open_out(path, "overlay csv");
    out << "index,truth,pred\n";
    for (std::size_t i = 0; i < truth.size(); ++i)
        out << i << ',' << csv_num(truth[i]) << ',' << csv_num(pred[i]) << '\n';
}

void write_combined_csv(const std::string& path, const NdArray& truth, const NdArray& pred) {
    require_same_shape(truth, pred, "combined csv");
    if (truth.shape().size() != 2)
        throw ContractError("combined csv: expected (dims, steps), got " +
                            shape_string(truth.shape()));
    const std::size_t M = truth.dim(0), T = truth.dim(1);
    std::ofstream out = open_out(path, "combined csv");
    out << "index";
    for (std::size_t m = 0; m < M; ++m) out << ",truth_" << m << ",pred_" << m;
    out << '\n';
    for (std::size_t i = 0; i < T; ++i) {
        out << i;
        for (std::size_t m = 0; m < M; ++m)
            out << ',' << csv_num(truth.data()[m * T + i]) << ','
                << csv_num(pred.data()[m * T + i]);
        out << '\n';
    }
}

void write_heatmap_svg(const std::string& path, const NdArray& matrix, const std::string& title) {
    if (matrix.shape().size() != 2)
        throw ContractError("heatmap svg: expected a matrix, got " + shape_string(matrix.shape()));
    const std::size_t R = matrix.dim(0), C = matrix.dim(1);
    double vmax = 0.0;
    for (std::size_t i = 0; i < matrix.size(); ++i) vmax = std::max(vmax, matrix.data()[i]);
    const double cell = std::max(4.0, std::min(24.0, 480.0 / static_cast<double>(std::max(R, C))));
    const double MT = 28, ML = 10;
    const double W = ML + cell * static_cast<double>(C) + 10;
    const double H = MT + cell * static_cast<double>(R) + 10;

    std::ofstream out = open_out(path, "heatmap svg");
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(W) << "\" height=\""
        << num(H) << "\" viewBox=\"0 0 " << num(W) << " " << num(H) << "\">\n";
    out << "  <rect width=\"" << num(W) << "\" height=\"" << num(H) << "\" fill=\"white\"/>\n";
    out << "  <text x=\"" << ML << "\" y=\"18\" font-family=\"sans-serif\" font-size=\"13\">"
        << escape_xml(title) << "</text>\n";
    for (std::size_t r = 0; r < R; ++r) {
        for (std::size_t c = 0; c < C; ++c) {
            const double v = matrix.data()[r * C + c];
            std::string fill;
            if (v <= 0.0 || vmax == 0.0) {
                fill = "rgb(255,255,255)"; // exactly the zero color
            } else {
                const int i = static_cast<int>(std::lround(215.0 * std::min(1.0, v / vmax)));
                fill = "rgb(" + std::to_string(255 - i) + "," + std::to_string(255 - i) + ",255)";
            }
            out << "  <rect x=\"" << num(ML + cell * static_cast<double>(c)) << "\" y=\""
                << num(MT + cell * static_cast<double>(r)) << "\" width=\"" << num(cell)
                << "\" height=\"" << num(cell) << "\" fill=\"" << fill
                << "\" shape-rendering=\"crispEdges\"/>\n";
        }
    }
    out << "  <rect x=\"" << ML << "\" y=\"" << MT << "\" width=\""
        << num(cell * static_cast<double>(C)) << "\" height=\""
        << num(cell * static_cast<double>(R)) << "\" fill=\"none\" stroke=\"#999\"/>\n";
    out << "</svg>\n";
}

} // namespace caformer
