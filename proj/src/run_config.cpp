#include "caformer/run_config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "caformer/error.hpp"

namespace caformer {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::size_t to_size(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const long long n = std::stoll(v, &pos);
        if (pos != v.size() || n < 0) throw std::invalid_argument("range");
        return static_cast<std::size_t>(n);
    } catch (const std::exception&) {
        throw ContractError("config: key '" + key + "' needs a non-negative integer, got '" + v +
                            "'");
    }
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const unsigned long long n = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing");
        return n;
    } catch (const std::exception&) {
        throw ContractError("config: key '" + key + "' needs an unsigned integer, got '" + v + "'");
    }
}

double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing");
        return d;
    } catch (const std::exception&) {
        throw ContractError("config: key '" + key + "' needs a number, got '" + v + "'");
    }
}

int to_int(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const int n = std::stoi(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing");
        return n;
    } catch (const std::exception&) {
        throw ContractError("config: key '" + key + "' needs an integer, got '" + v + "'");
    }
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ContractError("config: key '" + key + "' needs true/false, got '" + v + "'");
}

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
    if (key == "data") data_csv = value;
    else if (key == "data.header") has_header = to_bool(key, value);
    else if (key == "data.timestamp_col") timestamp_col = to_int(key, value);
    else if (key == "data.anomaly_csv") anomaly_csv = value;
    else if (key == "synth") synth = value;
    else if (key == "synth.M") synth_M = to_size(key, value);
    else if (key == "synth.L") synth_L = to_size(key, value);
    else if (key == "synth.seed") synth_seed = to_u64(key, value);
    else if (key == "synth.noise") synth_noise = to_double(key, value);
    else if (key == "synth.n_series") n_series = to_size(key, value);
    else if (key == "synth.n_anomalies") n_anomalies = to_size(key, value);
    else if (key == "split.train_end") train_end = to_size(key, value);
    else if (key == "split.val_end") val_end = to_size(key, value);
    else if (key == "mask.ratio") mask_ratio = to_double(key, value);
    else if (key == "mask.seed") mask_seed = to_u64(key, value);
    else if (key == "model.L_in") L_in = to_size(key, value);
    else if (key == "model.P") P = to_size(key, value);
    else if (key == "model.S") S = to_size(key, value);
    else if (key == "model.E") E = to_size(key, value);
    else if (key == "model.k") k = to_size(key, value);
    else if (key == "model.blocks") blocks = to_size(key, value);
    else if (key == "model.alpha") alpha = to_double(key, value);
    else if (key == "model.beta") beta = to_double(key, value);
    else if (key == "model.eps") eps = to_double(key, value);
    else if (key == "task") task = task_from_string(value);
    else if (key == "task.horizon") horizon = to_size(key, value);
    else if (key == "task.num_classes") num_classes = to_size(key, value);
    else if (key == "task.quantile") quantile = to_double(key, value);
    else if (key == "task.point_adjust") point_adjust = to_bool(key, value);
    else if (key == "task.season_m") season_m = to_size(key, value);
    else if (key == "train.epochs") epochs = to_size(key, value);
    else if (key == "train.batch_size") batch_size = to_size(key, value);
    else if (key == "train.lr") lr = to_double(key, value);
    else if (key == "train.seed") seed = to_u64(key, value);
    else if (key == "train.loss") loss = loss_from_string(value);
    else if (key == "train.patience") patience = to_size(key, value);
    else if (key == "ablation") ablation = ablation_from_string(value);
    else if (key == "out") out = value;
    else if (key == "isa") isa = value;
    else if (key == "checkpoint") checkpoint = value;
    else throw ContractError("config: unknown key '" + key + "'");
}

void RunConfig::validate() const {
    if (data_csv.empty() == synth.empty())
        throw ContractError("config: exactly one of 'data' (csv) or 'synth' must be set");
    if (!synth.empty() && synth != "coupled_ar" && synth != "seasonal" && synth != "two_class" &&
        synth != "spiked")
        throw ContractError("config: unknown synth kind '" + synth + "'");
    if (isa != "auto" && isa != "scalar" && isa != "avx2")
        throw ContractError("config: isa must be auto|scalar|avx2, got '" + isa + "'");
    if (out.empty()) throw ContractError("config: 'out' must not be empty");
    if (!(mask_ratio > 0.0 && mask_ratio < 1.0))
        throw ContractError("config: mask.ratio must lie in (0,1)");
    if (train_end == 0 && val_end != 0)
        throw ContractError("config: split.val_end needs split.train_end");
    if (train_end != 0 && val_end != 0 && val_end <= train_end)
        throw ContractError("config: split.val_end must exceed split.train_end");
    head_config().validate();
    train_config().validate();
    // model geometry is validated against the actual series in model_config()
}

CaformerConfig RunConfig::model_config(std::size_t M, std::size_t series_len) const {
    CaformerConfig cfg;
    cfg.M = M;
    cfg.L_in = task == Task::classification ? series_len : L_in;
    cfg.P = P;
    cfg.S = S;
    cfg.E = E;
    cfg.blocks = blocks;
    cfg.alpha = alpha;
    cfg.beta = beta;
    cfg.eps = eps;
    cfg.k = k == 0 ? cfg.n_patches() : k;
    cfg.validate();
    return cfg;
}

HeadConfig RunConfig::head_config() const {
    HeadConfig h;
    h.task = task;
    h.H = horizon;
    h.num_classes = num_classes;
    h.quantile = quantile;
    return h;
}

TrainConfig RunConfig::train_config() const {
    TrainConfig t;
    t.epochs = epochs;
    t.batch_size = batch_size;
    t.learning_rate = lr;
    t.seed = seed;
    t.task = task;
    t.ablation = ablation;
    t.loss = loss;
    t.patience = patience;
    return t;
}

std::string RunConfig::resolved_text() const {
    std::ostringstream o;
    o << "data=" << data_csv << '\n';
    o << "data.header=" << (has_header ? "true" : "false") << '\n';
    o << "data.timestamp_col=" << timestamp_col << '\n';
    o << "data.anomaly_csv=" << anomaly_csv << '\n';
    o << "synth=" << synth << '\n';
    o << "synth.M=" << synth_M << '\n';
    o << "synth.L=" << synth_L << '\n';
    o << "synth.seed=" << synth_seed << '\n';
    o << "synth.noise=" << fmt_double(synth_noise) << '\n';
    o << "synth.n_series=" << n_series << '\n';
    o << "synth.n_anomalies=" << n_anomalies << '\n';
    o << "split.train_end=" << train_end << '\n';
    o << "split.val_end=" << val_end << '\n';
    o << "mask.ratio=" << fmt_double(mask_ratio) << '\n';
    o << "mask.seed=" << mask_seed << '\n';
    o << "model.L_in=" << L_in << '\n';
    o << "model.P=" << P << '\n';
    o << "model.S=" << S << '\n';
    o << "model.E=" << E << '\n';
    o << "model.k=" << k << '\n';
    o << "model.blocks=" << blocks << '\n';
    o << "model.alpha=" << fmt_double(alpha) << '\n';
    o << "model.beta=" << fmt_double(beta) << '\n';
    o << "model.eps=" << fmt_double(eps) << '\n';
    o << "task=" << task_name(task) << '\n';
    o << "task.horizon=" << horizon << '\n';
    o << "task.num_classes=" << num_classes << '\n';
    o << "task.quantile=" << fmt_double(quantile) << '\n';
    o << "task.point_adjust=" << (point_adjust ? "true" : "false") << '\n';
    o << "task.season_m=" << season_m << '\n';
    o << "train.epochs=" << epochs << '\n';
    o << "train.batch_size=" << batch_size << '\n';
    o << "train.lr=" << fmt_double(lr) << '\n';
    o << "train.seed=" << seed << '\n';
    o << "train.loss=" << loss_name(loss) << '\n';
    o << "train.patience=" << patience << '\n';
    o << "ablation=" << ablation_name(ablation) << '\n';
    o << "out=" << out << '\n';
    o << "isa=" << isa << '\n';
    o << "checkpoint=" << checkpoint << '\n';
    return o.str();
}

RunConfig parse_config_text(const std::string& text, RunConfig base) {
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const std::size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw ContractError("config line " + std::to_string(lineno) +
                                ": expected key=value, got '" + t + "'");
        base.set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    }
    return base;
}

RunConfig parse_config_file(const std::string& path, RunConfig base) {
    std::ifstream in(path);
    if (!in) throw ContractError("config: cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str(), std::move(base));
}

void apply_overrides(RunConfig& rc, const std::vector<std::string>& sets) {
    for (const std::string& s : sets) {
        const std::size_t eq = s.find('=');
        if (eq == std::string::npos)
            throw ContractError("override: expected key=value, got '" + s + "'");
        rc.set(trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
    }
}

} // namespace caformer
