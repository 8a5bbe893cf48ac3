#include "peftcl/config.hpp"

#include <charconv>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace peftcl {

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("key '" + key + "': expected a boolean, got '" + v + "'");
}

int parse_int(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        const int out = std::stoi(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "': expected an integer, got '" + v + "'");
    }
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        const double out = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "': expected a number, got '" + v + "'");
    }
}

std::vector<int> parse_int_list(const std::string& key, const std::string& v) {
    std::vector<int> out;
    std::istringstream is(v);
    std::string tok;
    while (std::getline(is, tok, ',')) out.push_back(parse_int(key, trim(tok)));
    return out;
}

std::vector<uint64_t> parse_seed_list(const std::string& key, const std::string& v) {
    std::vector<uint64_t> out;
    std::istringstream is(v);
    std::string tok;
    while (std::getline(is, tok, ',')) {
        try {
            out.push_back(std::stoull(trim(tok)));
        } catch (const std::exception&) {
            throw ConfigError("key '" + key + "': expected seed integers, got '" + v + "'");
        }
    }
    return out;
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    // trim to the shortest representation that round-trips
    for (int prec = 1; prec < 17; ++prec) {
        char probe[64];
        std::snprintf(probe, sizeof(probe), "%.*g", prec, v);
        if (std::stod(probe) == v) return probe;
    }
    return buf;
}

std::string join_ints(const std::vector<int>& v) {
    std::string out;
    for (size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
    return out;
}

void apply_optim_key(TrainSettings& ts, const std::string& key, const std::string& sub,
                     const std::string& value) {
    if (sub == "kind") {
        if (value == "sgd") ts.opt.kind = OptKind::sgd_momentum;
        else if (value == "adamw") ts.opt.kind = OptKind::adamw;
        else throw ConfigError("key '" + key + "': expected sgd|adamw, got '" + value + "'");
    } else if (sub == "epochs") ts.epochs = parse_int(key, value);
    else if (sub == "lr") ts.opt.lr = parse_double(key, value);
    else if (sub == "momentum") ts.opt.momentum = parse_double(key, value);
    else if (sub == "weight_decay") ts.opt.weight_decay = parse_double(key, value);
    else if (sub == "batch_size") ts.batch_size = parse_int(key, value);
    else if (sub == "schedule") {
        if (value == "constant") ts.opt.schedule = LrSchedule::constant;
        else if (value == "cosine") ts.opt.schedule = LrSchedule::cosine;
        else throw ConfigError("key '" + key + "': expected constant|cosine, got '" + value + "'");
    } else if (sub == "t_max") ts.opt.t_max = parse_int(key, value);
    else if (sub == "eta_min") ts.opt.eta_min = parse_double(key, value);
    else throw ConfigError("unknown key '" + key + "'");
}

}  // namespace

void ExperimentConfig::validate() const {
    model.validate();
    stream.validate();
    static const std::vector<std::string> kMethods{
        "finetune", "s_prompts", "s_lora",    "l2p",
        "l2l",      "joint_prompt", "joint_lora", "joint_full"};
    if (std::find(kMethods.begin(), kMethods.end(), method) == kMethods.end()) {
        throw ConfigError("key 'method.name': unknown method '" + method + "'");
    }
    if (prompt_len < 1) throw ConfigError("key 'peft.prompt_len': must be >= 1");
    if (rank < 1) throw ConfigError("key 'peft.rank': must be >= 1");
    if (!target_q && !target_v) throw ConfigError("key 'peft.targets': needs q and/or v");
    if (clusters < 0) throw ConfigError("key 'sx.clusters': must be >= 0");
    if (kmeans_restarts < 1) throw ConfigError("key 'sx.kmeans_restarts': must be >= 1");
    if (pool_size < 1) throw ConfigError("key 'l2x.pool_size': must be >= 1");
    if (select_count < 1 || select_count > pool_size) {
        throw ConfigError("key 'l2x.select_count': must lie in [1, pool_size]");
    }
    if (surrogate != "one_minus_cos" && surrogate != "raw_gamma") {
        throw ConfigError("key 'l2x.surrogate': expected one_minus_cos|raw_gamma");
    }
    if (kernel != "auto" && kernel != "scalar" && kernel != "avx2") {
        throw ConfigError("key 'run.kernel': expected auto|scalar|avx2");
    }
    if (seeds.empty()) throw ConfigError("key 'run.seeds': needs at least one seed");
    if (jobs < 1) throw ConfigError("key 'run.jobs': must be >= 1");
    if (optim.epochs < 0 || pretrain.epochs < 0) throw ConfigError("negative epoch count");
    if (optim.batch_size < 1 || pretrain.batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (stream.image_h != model.image_h || stream.image_w != model.image_w ||
        stream.channels != model.channels) {
        throw ConfigError("stream geometry must match the model geometry");
    }
}

ExperimentConfig parse_config_text(const std::string& text) {
    ExperimentConfig cfg;
    // experiment surface defaults to the conventional forms; the literal
    // sketch forms stay available via model.* flags
    cfg.model.attn_scale = AttnScale::standard;
    cfg.model.ffn_double_gelu = false;

    std::map<std::string, std::string> kv;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("line " + std::to_string(lineno) + ": expected 'section.key = value'");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty() || key.find('.') == std::string::npos) {
            throw ConfigError("line " + std::to_string(lineno) + ": malformed key '" + key + "'");
        }
        if (!kv.emplace(key, value).second) {
            throw ConfigError("duplicate key '" + key + "'");
        }
    }

    bool strict = false;
    auto has = [&](const char* k) { return kv.count(k) > 0; };

    for (const auto& [key, value] : kv) {
        const auto dot = key.find('.');
        const std::string section = key.substr(0, dot);
        const std::string sub = key.substr(dot + 1);
        if (section == "model") {
            if (sub == "image_h") cfg.model.image_h = parse_int(key, value);
            else if (sub == "image_w") cfg.model.image_w = parse_int(key, value);
            else if (sub == "channels") cfg.model.channels = parse_int(key, value);
            else if (sub == "patch") cfg.model.patch = parse_int(key, value);
            else if (sub == "dim") cfg.model.dim = parse_int(key, value);
            else if (sub == "layers") cfg.model.layers = parse_int(key, value);
            else if (sub == "heads") cfg.model.heads = parse_int(key, value);
            else if (sub == "ffn") cfg.model.ffn = parse_int(key, value);
            else if (sub == "use_layer_norm") cfg.model.use_layer_norm = parse_bool(key, value);
            else if (sub == "use_wo") cfg.model.use_wo = parse_bool(key, value);
            else if (sub == "ln_eps") cfg.model.ln_eps = parse_double(key, value);
            else if (sub == "attn_scale") {
                if (value == "half") cfg.model.attn_scale = AttnScale::paper_half;
                else if (value == "standard") cfg.model.attn_scale = AttnScale::standard;
                else throw ConfigError("key '" + key + "': expected half|standard");
            } else if (sub == "ffn_outer") {
                if (value == "gelu") cfg.model.ffn_double_gelu = true;
                else if (value == "linear") cfg.model.ffn_double_gelu = false;
                else throw ConfigError("key '" + key + "': expected gelu|linear");
            } else if (sub == "strict_appendix_a") {
                strict = parse_bool(key, value);
            } else throw ConfigError("unknown key '" + key + "'");
        } else if (section == "method") {
            if (sub == "name") cfg.method = value;
            else if (sub == "plus_plus") cfg.plus_plus = parse_bool(key, value);
            else if (sub == "shared_head") cfg.shared_head = parse_bool(key, value);
            else throw ConfigError("unknown key '" + key + "'");
        } else if (section == "peft") {
            if (sub == "prompt_len") cfg.prompt_len = parse_int(key, value);
            else if (sub == "rank") cfg.rank = parse_int(key, value);
            else if (sub == "lora_alpha") cfg.lora_alpha = parse_double(key, value);
            else if (sub == "targets") {
                cfg.target_q = value.find('q') != std::string::npos;
                cfg.target_v = value.find('v') != std::string::npos;
                if (!cfg.target_q && !cfg.target_v) {
                    throw ConfigError("key '" + key + "': expected q,v|q|v");
                }
            } else throw ConfigError("unknown key '" + key + "'");
        } else if (section == "sx") {
            if (sub == "clusters") cfg.clusters = parse_int(key, value);
            else if (sub == "kmeans_restarts") cfg.kmeans_restarts = parse_int(key, value);
            else throw ConfigError("unknown key '" + key + "'");
        } else if (section == "l2x") {
            if (sub == "pool_size") cfg.pool_size = parse_int(key, value);
            else if (sub == "select_count") cfg.select_count = parse_int(key, value);
            else if (sub == "lambda") cfg.lambda = parse_double(key, value);
            else if (sub == "surrogate") cfg.surrogate = value;
            else throw ConfigError("unknown key '" + key + "'");
        } else if (section == "stream") {
            if (sub == "scenario") {
                if (value == "cil") cfg.stream.scenario = Scenario::cil;
                else if (value == "dil") cfg.stream.scenario = Scenario::dil;
                else throw ConfigError("key '" + key + "': expected cil|dil");
            } else if (sub == "tasks") cfg.stream.num_tasks = parse_int(key, value);
            else if (sub == "classes") cfg.stream.num_classes = parse_int(key, value);
            else if (sub == "train_per_class") cfg.stream.train_per_class = parse_int(key, value);
            else if (sub == "test_per_class") cfg.stream.test_per_class = parse_int(key, value);
            else if (sub == "noise") cfg.stream.noise = parse_double(key, value);
            else if (sub == "orient_jitter") cfg.stream.orient_jitter = parse_double(key, value);
            else if (sub == "frequency") cfg.stream.frequency = parse_double(key, value);
            else if (sub == "with_pretext") cfg.stream.with_pretext = parse_bool(key, value);
            else if (sub == "pretext_classes") cfg.stream.pretext_classes = parse_int(key, value);
            else if (sub == "pretext_train_per_class") cfg.stream.pretext_train_per_class = parse_int(key, value);
            else if (sub == "pretext_test_per_class") cfg.stream.pretext_test_per_class = parse_int(key, value);
            else throw ConfigError("unknown key '" + key + "'");
        } else if (section == "optim") {
            apply_optim_key(cfg.optim, key, sub, value);
        } else if (section == "pretrain") {
            apply_optim_key(cfg.pretrain, key, sub, value);
        } else if (section == "run") {
            if (sub == "out_dir") cfg.out_dir = value;
            else if (sub == "seeds") cfg.seeds = parse_seed_list(key, value);
            else if (sub == "jobs") cfg.jobs = parse_int(key, value);
            else if (sub == "kernel") cfg.kernel = value;
            else throw ConfigError("unknown key '" + key + "'");
        } else if (section == "sweep") {
            if (sub == "rank") cfg.sweep_rank = parse_int_list(key, value);
            else if (sub == "prompt_len") cfg.sweep_prompt_len = parse_int_list(key, value);
            else if (sub == "clusters") cfg.sweep_clusters = parse_int_list(key, value);
            else if (sub == "pool_size") cfg.sweep_pool_size = parse_int_list(key, value);
            else throw ConfigError("unknown key '" + key + "'");
        } else {
            throw ConfigError("unknown key '" + key + "'");
        }
    }

    if (strict) cfg.model = cfg.model.strict_appendix_variant();

    // family defaults for the method's optimizer block (App.-C-derived)
    const bool l2x = cfg.is_l2x_family();
    if (!has("optim.kind")) {
        cfg.optim.opt.kind = (cfg.method == "l2p") ? OptKind::adamw : OptKind::sgd_momentum;
    }
    if (!has("optim.epochs")) cfg.optim.epochs = l2x ? 5 : 50;
    if (!has("optim.lr")) cfg.optim.opt.lr = l2x ? 0.001875 : 0.001;
    if (!has("optim.momentum")) cfg.optim.opt.momentum = 0.9;
    if (!has("optim.weight_decay")) cfg.optim.opt.weight_decay = l2x ? 0.0 : 2e-4;
    if (!has("optim.batch_size")) cfg.optim.batch_size = l2x ? 16 : 128;
    if (!has("optim.schedule")) {
        cfg.optim.opt.schedule = l2x ? LrSchedule::constant : LrSchedule::cosine;
    }
    if (!has("optim.t_max")) cfg.optim.opt.t_max = cfg.optim.epochs;
    if (!has("optim.eta_min")) cfg.optim.opt.eta_min = 0.0;

    // pretraining block defaults: short full fine-tune of the backbone
    if (!has("pretrain.kind")) cfg.pretrain.opt.kind = OptKind::sgd_momentum;
    if (!has("pretrain.epochs")) cfg.pretrain.epochs = 12;
    if (!has("pretrain.lr")) cfg.pretrain.opt.lr = 0.01;
    if (!has("pretrain.momentum")) cfg.pretrain.opt.momentum = 0.9;
    if (!has("pretrain.weight_decay")) cfg.pretrain.opt.weight_decay = 1e-4;
    if (!has("pretrain.batch_size")) cfg.pretrain.batch_size = 32;
    if (!has("pretrain.schedule")) cfg.pretrain.opt.schedule = LrSchedule::cosine;
    if (!has("pretrain.t_max")) cfg.pretrain.opt.t_max = cfg.pretrain.epochs;
    if (!has("pretrain.eta_min")) cfg.pretrain.opt.eta_min = 0.0;

    // the stream always renders at model geometry
    cfg.stream.image_h = cfg.model.image_h;
    cfg.stream.image_w = cfg.model.image_w;
    cfg.stream.channels = cfg.model.channels;

    cfg.validate();
    return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

std::string serialize_config(const ExperimentConfig& cfg) {
    std::ostringstream os;
    os << "model.image_h = " << cfg.model.image_h << "\n";
    os << "model.image_w = " << cfg.model.image_w << "\n";
    os << "model.channels = " << cfg.model.channels << "\n";
    os << "model.patch = " << cfg.model.patch << "\n";
    os << "model.dim = " << cfg.model.dim << "\n";
    os << "model.layers = " << cfg.model.layers << "\n";
    os << "model.heads = " << cfg.model.heads << "\n";
    os << "model.ffn = " << cfg.model.ffn << "\n";
    os << "model.use_layer_norm = " << (cfg.model.use_layer_norm ? "true" : "false") << "\n";
    os << "model.use_wo = " << (cfg.model.use_wo ? "true" : "false") << "\n";
    os << "model.attn_scale = "
       << (cfg.model.attn_scale == AttnScale::paper_half ? "half" : "standard") << "\n";
    os << "model.ffn_outer = " << (cfg.model.ffn_double_gelu ? "gelu" : "linear") << "\n";
    os << "model.ln_eps = " << fmt_double(cfg.model.ln_eps) << "\n";
    os << "method.name = " << cfg.method << "\n";
    os << "method.plus_plus = " << (cfg.plus_plus ? "true" : "false") << "\n";
    os << "method.shared_head = " << (cfg.shared_head ? "true" : "false") << "\n";
    os << "peft.prompt_len = " << cfg.prompt_len << "\n";
    os << "peft.rank = " << cfg.rank << "\n";
    os << "peft.lora_alpha = " << fmt_double(cfg.lora_alpha) << "\n";
    os << "peft.targets = " << (cfg.target_q && cfg.target_v ? "q,v" : (cfg.target_q ? "q" : "v"))
       << "\n";
    os << "sx.clusters = " << cfg.clusters << "\n";
    os << "sx.kmeans_restarts = " << cfg.kmeans_restarts << "\n";
    os << "l2x.pool_size = " << cfg.pool_size << "\n";
    os << "l2x.select_count = " << cfg.select_count << "\n";
    os << "l2x.lambda = " << fmt_double(cfg.lambda) << "\n";
    os << "l2x.surrogate = " << cfg.surrogate << "\n";
    os << "stream.scenario = " << (cfg.stream.scenario == Scenario::cil ? "cil" : "dil") << "\n";
    os << "stream.tasks = " << cfg.stream.num_tasks << "\n";
    os << "stream.classes = " << cfg.stream.num_classes << "\n";
    os << "stream.train_per_class = " << cfg.stream.train_per_class << "\n";
    os << "stream.test_per_class = " << cfg.stream.test_per_class << "\n";
    os << "stream.noise = " << fmt_double(cfg.stream.noise) << "\n";
    os << "stream.orient_jitter = " << fmt_double(cfg.stream.orient_jitter) << "\n";
    os << "stream.frequency = " << fmt_double(cfg.stream.frequency) << "\n";
    os << "stream.with_pretext = " << (cfg.stream.with_pretext ? "true" : "false") << "\n";
    os << "stream.pretext_classes = " << cfg.stream.pretext_classes << "\n";
    os << "stream.pretext_train_per_class = " << cfg.stream.pretext_train_per_class << "\n";
    os << "stream.pretext_test_per_class = " << cfg.stream.pretext_test_per_class << "\n";
    auto dump_optim = [&](const char* section, const TrainSettings& ts) {
        os << section << ".kind = " << (ts.opt.kind == OptKind::sgd_momentum ? "sgd" : "adamw")
           << "\n";
        os << section << ".epochs = " << ts.epochs << "\n";
        os << section << ".lr = " << fmt_double(ts.opt.lr) << "\n";
        os << section << ".momentum = " << fmt_double(ts.opt.momentum) << "\n";
        os << section << ".weight_decay = " << fmt_double(ts.opt.weight_decay) << "\n";
        os << section << ".batch_size = " << ts.batch_size << "\n";
        os << section << ".schedule = "
           << (ts.opt.schedule == LrSchedule::cosine ? "cosine" : "constant") << "\n";
        os << section << ".t_max = " << ts.opt.t_max << "\n";
        os << section << ".eta_min = " << fmt_double(ts.opt.eta_min) << "\n";
    };
    dump_optim("optim", cfg.optim);
    dump_optim("pretrain", cfg.pretrain);
    if (!cfg.out_dir.empty()) os << "run.out_dir = " << cfg.out_dir << "\n";
    os << "run.seeds = ";
    for (size_t i = 0; i < cfg.seeds.size(); ++i) os << (i ? "," : "") << cfg.seeds[i];
    os << "\n";
    os << "run.jobs = " << cfg.jobs << "\n";
    os << "run.kernel = " << cfg.kernel << "\n";
    if (!cfg.sweep_rank.empty()) os << "sweep.rank = " << join_ints(cfg.sweep_rank) << "\n";
    if (!cfg.sweep_prompt_len.empty()) {
        os << "sweep.prompt_len = " << join_ints(cfg.sweep_prompt_len) << "\n";
    }
    if (!cfg.sweep_clusters.empty()) os << "sweep.clusters = " << join_ints(cfg.sweep_clusters) << "\n";
    if (!cfg.sweep_pool_size.empty()) {
        os << "sweep.pool_size = " << join_ints(cfg.sweep_pool_size) << "\n";
    }
    return os.str();
}

std::string config_hash(const ExperimentConfig& cfg, uint64_t seed) {
    const std::string text = serialize_config(cfg) + ":" + std::to_string(seed);
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016" PRIx64, h);
    return buf;
}

}  // namespace peftcl
