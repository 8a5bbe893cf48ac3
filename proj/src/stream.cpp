#include "peftcl/stream.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "peftcl/errors.hpp"

namespace peftcl {

void StreamSpec::validate() const {
    if (num_tasks < 1) throw ConfigError("stream needs at least one task");
    if (num_classes < 2) throw ConfigError("stream needs at least two classes");
    if (scenario == Scenario::cil && num_classes % num_tasks != 0) {
        throw ConfigError("CIL class count " + std::to_string(num_classes) +
                          " must split evenly over " + std::to_string(num_tasks) + " tasks");
    }
    if (image_h < 4 || image_w < 4 || channels < 1 || channels > 4) {
        throw ConfigError("unsupported image geometry");
    }
    if (train_per_class < 1 || test_per_class < 1) throw ConfigError("empty split sizes");
    if (noise < 0.0) throw ConfigError("negative noise");
    if (with_pretext && pretext_classes < 2) throw ConfigError("pretext needs >= 2 classes");
}

int StreamSpec::classes_per_task() const {
    return scenario == Scenario::cil ? num_classes / num_tasks : num_classes;
}

namespace {

// fixed color-bin profiles for the pretext labels; channel weights
constexpr double kColorBins[4][3] = {
    {1.0, 0.35, 0.35},
    {0.35, 1.0, 0.35},
    {0.35, 0.35, 1.0},
    {0.75, 0.75, 0.75},
};

struct DrawCtx {
    const StreamSpec& spec;
    Rng::Stream& stream;
};

// one oriented grating; theta carries the class, color is whatever the
// caller drew
std::vector<float> render(const StreamSpec& spec, double theta, const double color[3],
                          double phase, double amplitude, Rng::Stream& noise_stream) {
    const int h = spec.image_h, w = spec.image_w, ch = spec.channels;
    std::vector<float> px(static_cast<size_t>(h) * w * ch);
    const double fx = std::cos(theta) * spec.frequency * 2.0 * M_PI / w;
    const double fy = std::sin(theta) * spec.frequency * 2.0 * M_PI / h;
    size_t i = 0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double wave = std::sin(fx * x + fy * y + phase);
            for (int c = 0; c < ch; ++c) {
                const double col = c < 3 ? color[c] : 1.0;
                double v = col * (0.5 + 0.5 * amplitude * wave);
                if (spec.noise > 0.0) v += spec.noise * noise_stream.next_gaussian();
                px[i++] = static_cast<float>(v);
            }
        }
    }
    return px;
}

double class_orientation(const StreamSpec& spec, int global_class) {
    // spread over [0, pi)
    return M_PI * (static_cast<double>(global_class) + 0.5) / spec.num_classes;
}

// label-preserving domain shifts: color statistics and noise only, never
// orientation
void apply_domain(const StreamSpec& spec, int domain, std::vector<float>& px,
                  Rng::Stream& noise_stream) {
    const int ch = spec.channels;
    const size_t n = px.size();
    switch (domain % 4) {
        case 0:
            break;
        case 1:  // channel rotation + brightness lift
            if (ch >= 3) {
                for (size_t i = 0; i < n; i += static_cast<size_t>(ch)) {
                    const float r = px[i];
                    px[i] = px[i + 1];
                    px[i + 1] = px[i + 2];
                    px[i + 2] = r;
                }
            }
            for (auto& v : px) v += 0.25f;
            break;
        case 2:  // contrast compression around mid-gray
            for (auto& v : px) v = 0.5f + 0.6f * (v - 0.5f);
            break;
        case 3:  // extra noise + slight dim
            for (auto& v : px) {
                v = 0.9f * v + static_cast<float>(0.08 * noise_stream.next_gaussian());
            }
            break;
    }
}

Sample draw_sample(const StreamSpec& spec, int global_class, int dataset_id, int domain,
                   Rng::Stream& stream) {
    const double theta =
        class_orientation(spec, global_class) + spec.orient_jitter * stream.next_gaussian();
    const double phase = stream.next_uniform01() * 2.0 * M_PI;
    const double amplitude = 0.8 + 0.4 * stream.next_uniform01();
    double color[3];
    for (double& c : color) c = 0.3 + 0.7 * stream.next_uniform01();  // classless color
    Sample s;
    s.pixels = render(spec, theta, color, phase, amplitude, stream);
    apply_domain(spec, domain, s.pixels, stream);
    s.label = global_class;
    s.dataset_id = dataset_id;
    return s;
}

Sample draw_pretext_sample(const StreamSpec& spec, int bin, Rng::Stream& stream) {
    // orientation is classless here; the label is the color bin
    const double theta = stream.next_uniform01() * M_PI;
    const double phase = stream.next_uniform01() * 2.0 * M_PI;
    const double amplitude = 0.8 + 0.4 * stream.next_uniform01();
    double color[3];
    for (int c = 0; c < 3; ++c) {
        color[c] = kColorBins[bin % 4][c] * (0.85 + 0.3 * stream.next_uniform01());
    }
    Sample s;
    s.pixels = render(spec, theta, color, phase, amplitude, stream);
    s.label = bin;
    s.dataset_id = -1;
    return s;
}

}  // namespace

MaterializedStream make_stream(const StreamSpec& spec, uint64_t seed) {
    spec.validate();
    Rng rng(seed);
    MaterializedStream out;
    out.spec = spec;

    const int cpt = spec.classes_per_task();
    for (int t = 0; t < spec.num_tasks; ++t) {
        TaskData task;
        task.height = spec.image_h;
        task.width = spec.image_w;
        task.channels = spec.channels;
        task.domain_id = spec.scenario == Scenario::dil ? t : 0;
        for (int k = 0; k < cpt; ++k) {
            task.class_set.push_back(spec.scenario == Scenario::cil ? t * cpt + k : k);
        }
        auto tr = rng.stream(rng_stream::kDataTrain + static_cast<uint64_t>(t));
        auto te = rng.stream(rng_stream::kDataTest + static_cast<uint64_t>(t));
        for (int c : task.class_set) {
            for (int i = 0; i < spec.train_per_class; ++i) {
                task.train.push_back(draw_sample(spec, c, t, task.domain_id, tr));
            }
            for (int i = 0; i < spec.test_per_class; ++i) {
                task.test.push_back(draw_sample(spec, c, t, task.domain_id, te));
            }
        }
        out.tasks.push_back(std::move(task));
    }

    if (spec.with_pretext) {
        TaskData pre;
        pre.height = spec.image_h;
        pre.width = spec.image_w;
        pre.channels = spec.channels;
        pre.domain_id = 0;
        auto ps = rng.stream(rng_stream::kDataPretext);
        auto ps_test = rng.stream(rng_stream::kDataPretext + 1);
        for (int b = 0; b < spec.pretext_classes; ++b) {
            pre.class_set.push_back(b);
            for (int i = 0; i < spec.pretext_train_per_class; ++i) {
                pre.train.push_back(draw_pretext_sample(spec, b, ps));
            }
            for (int i = 0; i < spec.pretext_test_per_class; ++i) {
                pre.test.push_back(draw_pretext_sample(spec, b, ps_test));
            }
        }
        out.pretext = std::move(pre);
    }

    // materialized invariants
    if (spec.scenario == Scenario::cil) {
        std::set<int> seen;
        for (const auto& t : out.tasks) {
            for (int c : t.class_set) {
                if (!seen.insert(c).second) {
                    throw ConfigError("CIL task class sets overlap on class " + std::to_string(c));
                }
            }
        }
    } else {
        for (const auto& t : out.tasks) {
            if (t.class_set != out.tasks[0].class_set) {
                throw ConfigError("DIL tasks must share one label set");
            }
        }
    }
    return out;
}

namespace {

void write_f32le(std::ofstream& out, const std::vector<float>& values) {
    for (float f : values) {
        uint32_t bits;
        std::memcpy(&bits, &f, 4);
        const unsigned char bytes[4] = {
            static_cast<unsigned char>(bits & 0xFF),
            static_cast<unsigned char>((bits >> 8) & 0xFF),
            static_cast<unsigned char>((bits >> 16) & 0xFF),
            static_cast<unsigned char>((bits >> 24) & 0xFF),
        };
        out.write(reinterpret_cast<const char*>(bytes), 4);
    }
}

std::vector<float> read_f32le(std::ifstream& in, size_t n) {
    std::vector<float> out(n);
    std::vector<unsigned char> buf(n * 4);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (static_cast<size_t>(in.gcount()) != buf.size()) throw IoError("truncated f32 payload");
    for (size_t i = 0; i < n; ++i) {
        const uint32_t bits = static_cast<uint32_t>(buf[4 * i]) |
                              (static_cast<uint32_t>(buf[4 * i + 1]) << 8) |
                              (static_cast<uint32_t>(buf[4 * i + 2]) << 16) |
                              (static_cast<uint32_t>(buf[4 * i + 3]) << 24);
        std::memcpy(&out[i], &bits, 4);
    }
    return out;
}

}  // namespace

void save_task_data(const TaskData& task, const std::string& base_path) {
    const size_t count = task.train.size() + task.test.size();
    if (count == 0) throw IoError("refusing to save an empty task");

    std::ostringstream labels;
    bool sep = false;
    auto add_labels = [&](const std::vector<Sample>& v) {
        for (const auto& s : v) {
            labels << (sep ? "," : "") << s.label;
            sep = true;
        }
    };
    add_labels(task.train);
    add_labels(task.test);

    std::ofstream manifest(base_path + ".manifest");
    if (!manifest) throw IoError("cannot write " + base_path + ".manifest");
    manifest << "count = " << count << "\n";
    manifest << "train_count = " << task.train.size() << "\n";
    manifest << "height = " << task.height << "\n";
    manifest << "width = " << task.width << "\n";
    manifest << "channels = " << task.channels << "\n";
    manifest << "dtype = f32le\n";
    manifest << "labels = " << labels.str() << "\n";
    manifest << "domain = " << task.domain_id << "\n";

    std::ofstream payload(base_path + ".f32", std::ios::binary);
    if (!payload) throw IoError("cannot write " + base_path + ".f32");
    for (const auto& s : task.train) write_f32le(payload, s.pixels);
    for (const auto& s : task.test) write_f32le(payload, s.pixels);
}

TaskData load_task_data(const std::string& base_path) {
    std::ifstream manifest(base_path + ".manifest");
    if (!manifest) throw IoError("cannot read " + base_path + ".manifest");
    size_t count = 0, train_count = 0;
    TaskData task;
    std::string dtype;
    std::vector<int> labels;
    std::string line;
    while (std::getline(manifest, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        std::string key = line.substr(0, eq);
        std::string value = line.substr(eq + 1);
        auto trim = [](std::string& s) {
            const auto a = s.find_first_not_of(" \t");
            const auto b = s.find_last_not_of(" \t\r");
            s = a == std::string::npos ? "" : s.substr(a, b - a + 1);
        };
        trim(key);
        trim(value);
        if (key == "count") count = std::stoul(value);
        else if (key == "train_count") train_count = std::stoul(value);
        else if (key == "height") task.height = std::stoi(value);
        else if (key == "width") task.width = std::stoi(value);
        else if (key == "channels") task.channels = std::stoi(value);
        else if (key == "dtype") dtype = value;
        else if (key == "domain") task.domain_id = std::stoi(value);
        else if (key == "labels") {
            std::istringstream is(value);
            std::string tok;
            while (std::getline(is, tok, ',')) labels.push_back(std::stoi(tok));
        } else {
            throw IoError("unknown manifest key '" + key + "'");
        }
    }
    if (dtype != "f32le") throw IoError("unsupported dtype '" + dtype + "'");
    if (labels.size() != count) throw IoError("label count does not match sample count");
    if (train_count > count) throw IoError("train_count exceeds count");

    const size_t per =
        static_cast<size_t>(task.height) * static_cast<size_t>(task.width) * task.channels;
    std::ifstream payload(base_path + ".f32", std::ios::binary);
    if (!payload) throw IoError("cannot read " + base_path + ".f32");
    std::set<int> classes;
    for (size_t i = 0; i < count; ++i) {
        Sample s;
        s.pixels = read_f32le(payload, per);
        s.label = labels[i];
        s.dataset_id = task.domain_id;
        classes.insert(s.label);
        if (i < train_count) task.train.push_back(std::move(s));
        else task.test.push_back(std::move(s));
    }
    task.class_set.assign(classes.begin(), classes.end());
    return task;
}

}  // namespace peftcl
