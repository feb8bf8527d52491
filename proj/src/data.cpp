#include "caformer/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "caformer/rng.hpp"

namespace caformer {

namespace {

constexpr double kTau = 6.28318530717958647692;

void default_splits(std::size_t L, std::size_t& train_end, std::size_t& val_end) {
    if (L < 2) throw ContractError("dataset too short: L=" + std::to_string(L));
    auto r = [](double x) { return static_cast<std::size_t>(std::llround(x)); };
    train_end = std::clamp<std::size_t>(r(0.7 * static_cast<double>(L)), 1, L - 1);
    val_end = std::clamp<std::size_t>(r(0.8 * static_cast<double>(L)), train_end + 1, L);
}

struct Segment {
    std::size_t begin;
    std::size_t end;
};

Segment segment_of(const SeriesDataset& ds, Split split) {
    switch (split) {
        case Split::train: return {0, ds.train_end};
        case Split::val: return {ds.train_end, ds.val_end};
        case Split::test: return {ds.val_end, ds.L()};
    }
    throw ContractError("segment_of: bad split");
}

NdArray slice_steps(const NdArray& values, std::size_t begin, std::size_t len) {
    const std::size_t M = values.dim(0), L = values.dim(1);
    NdArray out = NdArray::zeros({M, len});
    for (std::size_t m = 0; m < M; ++m)
        for (std::size_t t = 0; t < len; ++t) out.at({m, t}) = values.data()[m * L + begin + t];
    return out;
}

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

std::vector<std::string> split_commas(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            cells.push_back(trim(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    cells.push_back(trim(cur));
    return cells;
}

double parse_cell(const std::string& cell, std::size_t file_line, std::size_t col) {
    if (cell.empty())
        throw ParseError("csv row " + std::to_string(file_line) + " col " + std::to_string(col + 1) +
                         ": empty cell");
    const char* begin = cell.c_str();
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    if (end != begin + cell.size())
        throw ParseError("csv row " + std::to_string(file_line) + " col " + std::to_string(col + 1) +
                         ": not a number: '" + cell + "'");
    if (!std::isfinite(v))
        throw ParseError("csv row " + std::to_string(file_line) + " col " + std::to_string(col + 1) +
                         ": non-finite value");
    return v;
}

} // namespace

void SeriesDataset::validate() const {
    if (values.rank() != 2)
        throw ContractError("SeriesDataset: values must be (M, L), got " +
                            shape_string(values.shape()));
    if (!(train_end > 0 && train_end < val_end && val_end <= L()))
        throw ContractError("SeriesDataset: need 0 < train_end < val_end <= L, got " +
                            std::to_string(train_end) + ", " + std::to_string(val_end) + ", L=" +
                            std::to_string(L()));
    if (dim_names.size() != M())
        throw ContractError("SeriesDataset: " + std::to_string(dim_names.size()) +
                            " dim names for M=" + std::to_string(M()));
    if (mask && mask->shape() != values.shape())
        throw ContractError("SeriesDataset: mask shape " + shape_string(mask->shape()) +
                            " != values shape " + shape_string(values.shape()));
    if (!anomaly.empty() && anomaly.size() != L())
        throw ContractError("SeriesDataset: anomaly flags length " +
                            std::to_string(anomaly.size()) + " != L=" + std::to_string(L()));
    require_finite(values, "SeriesDataset");
}

const char* split_name(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "?";
}

std::vector<Window> make_windows(const SeriesDataset& ds, Split split, std::size_t L_in,
                                 std::size_t H, std::size_t stride) {
    ds.validate();
    if (H < 1) throw ContractError("make_windows: forecast horizon must be >= 1");
    if (L_in < 1 || stride < 1) throw ContractError("make_windows: L_in and stride must be >= 1");
    const Segment seg = segment_of(ds, split);
    std::vector<Window> out;
    if (seg.end - seg.begin < L_in + H) {
        std::cerr << "make_windows: " << split_name(split) << " segment too short ("
                  << seg.end - seg.begin << " < " << L_in + H << "), no windows\n";
        return out;
    }
    for (std::size_t t0 = seg.begin; t0 + L_in + H <= seg.end; t0 += stride) {
        Window w;
        w.t0 = t0;
        w.input = slice_steps(ds.values, t0, L_in);
        w.target = slice_steps(ds.values, t0 + L_in, H);
        out.push_back(std::move(w));
    }
    return out;
}

std::vector<Window> make_recon_windows(const SeriesDataset& ds, Split split, std::size_t L_in,
                                       std::size_t stride) {
    ds.validate();
    if (L_in < 1 || stride < 1)
        throw ContractError("make_recon_windows: L_in and stride must be >= 1");
    const Segment seg = segment_of(ds, split);
    std::vector<Window> out;
    if (seg.end - seg.begin < L_in) {
        std::cerr << "make_recon_windows: " << split_name(split) << " segment too short ("
                  << seg.end - seg.begin << " < " << L_in << "), no windows\n";
        return out;
    }
    for (std::size_t t0 = seg.begin; t0 + L_in <= seg.end; t0 += stride) {
        Window w;
        w.t0 = t0;
        w.input = slice_steps(ds.values, t0, L_in);
        w.target = w.input;
        if (ds.mask) w.mask = slice_steps(*ds.mask, t0, L_in);
        out.push_back(std::move(w));
    }
    return out;
}

// ----------------------------------------------------------------------- csv

SeriesDataset load_csv(const std::string& path, bool has_header,
                       std::optional<std::size_t> timestamp_col) {
    std::ifstream in(path);
    if (!in) throw ParseError("load_csv: cannot open '" + path + "'");
    std::vector<std::string> names;
    std::vector<std::vector<double>> rows; // time-major
    std::string line;
    std::size_t file_line = 0;
    std::size_t ncols = 0;
    bool header_pending = has_header;
    while (std::getline(in, line)) {
        ++file_line;
        if (trim(line).empty()) continue;
        std::vector<std::string> cells = split_commas(line);
        if (header_pending) {
            header_pending = false;
            names = cells;
            continue;
        }
        if (ncols == 0) {
            ncols = cells.size();
        } else if (cells.size() != ncols) {
            throw ParseError("csv row " + std::to_string(file_line) + ": " +
                             std::to_string(cells.size()) + " cells, expected " +
                             std::to_string(ncols));
        }
        std::vector<double> row;
        row.reserve(ncols);
        for (std::size_t c = 0; c < cells.size(); ++c) {
            if (timestamp_col && c == *timestamp_col) continue;
            row.push_back(parse_cell(cells[c], file_line, c));
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw ParseError("load_csv: '" + path + "' has no data rows");
    const std::size_t M = rows[0].size();
    if (M == 0) throw ParseError("load_csv: '" + path + "' has no value columns");
    const std::size_t L = rows.size();

    SeriesDataset ds;
    ds.values = NdArray::zeros({M, L});
    for (std::size_t t = 0; t < L; ++t)
        for (std::size_t m = 0; m < M; ++m) ds.values.at({m, t}) = rows[t][m];
    if (!names.empty()) {
        for (std::size_t c = 0; c < names.size(); ++c) {
            if (timestamp_col && c == *timestamp_col) continue;
            ds.dim_names.push_back(names[c]);
        }
        if (ds.dim_names.size() != M)
            throw ParseError("load_csv: header has " + std::to_string(ds.dim_names.size()) +
                             " value names for " + std::to_string(M) + " columns");
    } else {
        for (std::size_t m = 0; m < M; ++m) ds.dim_names.push_back("dim" + std::to_string(m));
    }
    default_splits(L, ds.train_end, ds.val_end);
    ds.validate();
    return ds;
}

void save_csv(const std::string& path, const SeriesDataset& ds) {
    std::ofstream out(path);
    if (!out) throw ParseError("save_csv: cannot open '" + path + "' for writing");
    for (std::size_t m = 0; m < ds.M(); ++m) out << (m ? "," : "") << ds.dim_names[m];
    out << "\n";
    char buf[32];
    for (std::size_t t = 0; t < ds.L(); ++t) {
        for (std::size_t m = 0; m < ds.M(); ++m) {
            std::snprintf(buf, sizeof buf, "%.17g", ds.values.at({m, t}));
            out << (m ? "," : "") << buf;
        }
        out << "\n";
    }
    if (!out) throw ParseError("save_csv: write to '" + path + "' failed");
}

NdArray load_mask_csv(const std::string& path, std::size_t M, std::size_t L) {
    SeriesDataset raw = load_csv(path, /*has_header=*/false);
    if (raw.M() != M || raw.L() != L)
        throw ParseError("load_mask_csv: mask is " + std::to_string(raw.M()) + "x" +
                         std::to_string(raw.L()) + ", data is " + std::to_string(M) + "x" +
                         std::to_string(L));
    for (std::size_t i = 0; i < raw.values.size(); ++i)
        if (raw.values[i] != 0.0 && raw.values[i] != 1.0)
            throw ParseError("load_mask_csv: entries must be 0 or 1");
    return raw.values;
}

// ------------------------------------------------------------- normalization

NormStats train_split_stats(const SeriesDataset& ds, double eps) {
    ds.validate();
    if (!(eps > 0.0)) throw ContractError("train_split_stats: eps must be positive");
    const std::size_t M = ds.M(), L = ds.L(), T = ds.train_end;
    NormStats stats;
    stats.mean.resize(M);
    stats.sigma.resize(M);
    for (std::size_t m = 0; m < M; ++m) {
        const double* row = ds.values.data() + m * L;
        double mu = 0.0;
        for (std::size_t t = 0; t < T; ++t) mu += row[t];
        mu /= static_cast<double>(T);
        double var = 0.0;
        for (std::size_t t = 0; t < T; ++t) {
            const double d = row[t] - mu;
            var += d * d;
        }
        var /= static_cast<double>(T);
        const double sd = std::sqrt(var);
        stats.mean[m] = mu;
        stats.sigma[m] = sd < eps ? eps : sd;
    }
    return stats;
}

NdArray normalize_rows(const NdArray& values, const NormStats& stats) {
    if (values.rank() != 2 || values.dim(0) != stats.mean.size())
        throw ContractError("normalize_rows: values " + shape_string(values.shape()) +
                            " vs stats for M=" + std::to_string(stats.mean.size()));
    NdArray out = values;
    const std::size_t M = values.dim(0), T = values.dim(1);
    for (std::size_t m = 0; m < M; ++m)
        for (std::size_t t = 0; t < T; ++t)
            out.at({m, t}) = (values.at({m, t}) - stats.mean[m]) / stats.sigma[m];
    return out;
}

NdArray denormalize_rows(const NdArray& values, const NormStats& stats) {
    if (values.rank() != 2 || values.dim(0) != stats.mean.size())
        throw ContractError("denormalize_rows: values " + shape_string(values.shape()) +
                            " vs stats for M=" + std::to_string(stats.mean.size()));
    NdArray out = values;
    const std::size_t M = values.dim(0), T = values.dim(1);
    for (std::size_t m = 0; m < M; ++m)
        for (std::size_t t = 0; t < T; ++t)
            out.at({m, t}) = values.at({m, t}) * stats.sigma[m] + stats.mean[m];
    return out;
}

// --------------------------------------------------------------------- masks

SeriesDataset apply_imputation_mask(const SeriesDataset& ds, double ratio, std::uint64_t seed) {
    ds.validate();
    if (!(ratio > 0.0 && ratio < 1.0))
        throw ContractError("apply_imputation_mask: ratio must lie in (0,1), got " +
                            std::to_string(ratio));
    const std::size_t total = ds.M() * ds.L();
    const std::size_t count =
        static_cast<std::size_t>(std::llround(ratio * static_cast<double>(total)));
    Rng rng(seed);
    std::vector<std::size_t> idx(total);
    for (std::size_t i = 0; i < total; ++i) idx[i] = i;
    // Partial Fisher-Yates: the first `count` entries become the masked cells.
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(total - i));
        std::swap(idx[i], idx[j]);
    }
    SeriesDataset out = ds;
    NdArray mask = NdArray::zeros(ds.values.shape());
    for (std::size_t i = 0; i < count; ++i) mask[idx[i]] = 1.0;
    out.mask = std::move(mask);
    return out;
}

// ----------------------------------------------------------------- synthetic

namespace {

SeriesDataset blank_dataset(std::size_t M, std::size_t L) {
    SeriesDataset ds;
    ds.values = NdArray::zeros({M, L});
    for (std::size_t m = 0; m < M; ++m) ds.dim_names.push_back("dim" + std::to_string(m));
    default_splits(L, ds.train_end, ds.val_end);
    return ds;
}

// Lag-coupled AR dimensions riding on one shared slow confounder channel:
//   x_i(t) = 0.45 x_{i-1}(t-1) + 0.25 x_i(t-2) + kappa_i c(t) + noise
// with c a two-tone low-frequency drift. The cross-dimension lag structure is
// what the model should exploit; persistence over a long horizon cannot track c.
SeriesDataset gen_coupled_ar(std::size_t M, std::size_t L, Rng& rng, const SynthParams& sp) {
    SeriesDataset ds = blank_dataset(M, L);
    const std::size_t burn = 128;
    const double phi0 = rng.uniform(0.0, kTau), phi1 = rng.uniform(0.0, kTau);
    std::vector<double> kappa(M);
    for (std::size_t m = 0; m < M; ++m) kappa[m] = 0.8 + 0.4 * rng.uniform();
    std::vector<std::vector<double>> x(M, std::vector<double>(burn + L, 0.0));
    for (std::size_t t = 0; t < burn + L; ++t) {
        const double td = static_cast<double>(t);
        const double c = 1.2 * std::sin(kTau * td / 64.0 + phi0) +
                         0.8 * std::sin(kTau * td / 96.0 + phi1);
        for (std::size_t m = 0; m < M; ++m) {
            const std::size_t prev = (m + M - 1) % M;
            double v = kappa[m] * c + sp.noise * rng.normal();
            if (t >= 1) v += 0.45 * x[prev][t - 1];
            if (t >= 2) v += 0.25 * x[m][t - 2];
            x[m][t] = v;
        }
    }
    for (std::size_t m = 0; m < M; ++m)
        for (std::size_t t = 0; t < L; ++t) ds.values.at({m, t}) = x[m][burn + t];
    return ds;
}

SeriesDataset gen_seasonal(std::size_t M, std::size_t L, Rng& rng, const SynthParams& sp) {
    SeriesDataset ds = blank_dataset(M, L);
    const std::size_t periods[4] = {24, 32, 48, 64};
    for (std::size_t m = 0; m < M; ++m) {
        const double period = static_cast<double>(periods[m % 4]);
        const double amp = 1.0 + 0.5 * rng.uniform();
        const double phase = rng.uniform(0.0, kTau);
        for (std::size_t t = 0; t < L; ++t)
            ds.values.at({m, t}) = amp * std::sin(kTau * static_cast<double>(t) / period + phase) +
                                   sp.noise * rng.normal();
    }
    return ds;
}

// Two populations distinguished by their dominant frequency (period 16 vs 8);
// with zero noise the spectra separate the classes perfectly.
std::vector<SeriesDataset> gen_two_class(std::size_t M, std::size_t L, Rng& rng,
                                         const SynthParams& sp) {
    std::vector<SeriesDataset> out;
    const std::size_t n = sp.n_series < 2 ? 2 : sp.n_series;
    out.reserve(n);
    for (std::size_t s = 0; s < n; ++s) {
        SeriesDataset ds = blank_dataset(M, L);
        const int label = static_cast<int>(s % 2);
        const double period = label == 0 ? 16.0 : 8.0;
        for (std::size_t m = 0; m < M; ++m) {
            const double amp = 1.0 + 0.2 * rng.uniform();
            const double phase = rng.uniform(0.0, kTau);
            for (std::size_t t = 0; t < L; ++t)
                ds.values.at({m, t}) =
                    amp * std::sin(kTau * static_cast<double>(t) / period + phase) +
                    sp.noise * rng.normal();
        }
        ds.label = label;
        out.push_back(std::move(ds));
    }
    return out;
}

// Smooth two-tone base with point anomalies injected into the last 15% of the
// series (inside any reasonable test split), one flag per injected step.
SeriesDataset gen_spiked(std::size_t M, std::size_t L, Rng& rng, const SynthParams& sp) {
    SeriesDataset ds = blank_dataset(M, L);
    for (std::size_t m = 0; m < M; ++m) {
        const double phase = rng.uniform(0.0, kTau);
        const double phase2 = rng.uniform(0.0, kTau);
        for (std::size_t t = 0; t < L; ++t) {
            const double td = static_cast<double>(t);
            ds.values.at({m, t}) = std::sin(kTau * td / 48.0 + phase) +
                                   0.4 * std::sin(kTau * td / 12.0 + phase2) +
                                   sp.noise * rng.normal();
        }
    }
    const std::size_t lo = (L * 85 + 99) / 100; // ceil(0.85 L)
    const std::size_t hi = L - 1;
    if (hi <= lo) throw ContractError("synth spiked: series too short for anomaly span");
    const std::size_t span = hi - lo;
    if (sp.n_anomalies == 0 || sp.n_anomalies > span)
        throw ContractError("synth spiked: n_anomalies must lie in [1, " + std::to_string(span) +
                            "]");
    std::vector<std::size_t> pos(span);
    for (std::size_t i = 0; i < span; ++i) pos[i] = lo + i;
    for (std::size_t i = 0; i < sp.n_anomalies; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(span - i));
        std::swap(pos[i], pos[j]);
    }
    ds.anomaly.assign(L, 0);
    for (std::size_t i = 0; i < sp.n_anomalies; ++i) {
        const std::size_t t = pos[i];
        ds.anomaly[t] = 1;
        const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
        for (std::size_t m = 0; m < M; ++m)
            ds.values.at({m, t}) += sign * (3.5 + rng.uniform());
    }
    return ds;
}

} // namespace

std::vector<SeriesDataset> synth_generate(const std::string& kind, std::size_t M, std::size_t L,
                                          std::uint64_t seed, const SynthParams& params) {
    if (M < 2 || L < 64)
        throw ContractError("synth_generate: need M >= 2 and L >= 64, got M=" + std::to_string(M) +
                            " L=" + std::to_string(L));
    Rng rng(seed);
    std::vector<SeriesDataset> out;
    if (kind == "coupled_ar") {
        out.push_back(gen_coupled_ar(M, L, rng, params));
    } else if (kind == "seasonal") {
        out.push_back(gen_seasonal(M, L, rng, params));
    } else if (kind == "two_class") {
        out = gen_two_class(M, L, rng, params);
    } else if (kind == "spiked") {
        out.push_back(gen_spiked(M, L, rng, params));
    } else {
        throw ContractError("synth_generate: unknown kind '" + kind + "'");
    }
    for (SeriesDataset& ds : out) ds.validate();
    return out;
}

} // namespace caformer
