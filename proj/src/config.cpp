#include "dualscore/config.hpp"

#include <charconv>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>

namespace dualscore::config {

namespace {

struct Binding {
    std::string section;
    std::string key;
    std::function<void(const kvdoc::Document&, const kvdoc::Entry&)> set;
    std::function<std::string()> get;
};

constexpr double kNoMin = -std::numeric_limits<double>::infinity();

Binding bind_double(std::string section, std::string key, double& target, double min = kNoMin, bool strict = false) {
    return {section, key,
            [&target, min, strict](const kvdoc::Document& doc, const kvdoc::Entry& e) {
                const double v = kvdoc::as_double(doc, e);
                if (!std::isfinite(v)) kvdoc::fail(doc, e.line, "'" + e.key + "' must be finite");
                if (strict ? !(v > min) : !(v >= min))
                    kvdoc::fail(doc, e.line, "'" + e.key + "' must be " + (strict ? "> " : ">= ") + format_double(min));
                target = v;
            },
            [&target] { return format_double(target); }};
}

template <typename Int>
Binding bind_int(std::string section, std::string key, Int& target, long min) {
    return {section, key,
            [&target, min](const kvdoc::Document& doc, const kvdoc::Entry& e) {
                const long v = kvdoc::as_long(doc, e);
                if (v < min) kvdoc::fail(doc, e.line, "'" + e.key + "' must be >= " + std::to_string(min));
                if (v > static_cast<long>(std::numeric_limits<Int>::max()))
                    kvdoc::fail(doc, e.line, "'" + e.key + "' is too large");
                target = static_cast<Int>(v);
            },
            [&target] { return std::to_string(target); }};
}

std::uint64_t parse_u64(const kvdoc::Document& doc, const kvdoc::Entry& e, const std::string& text) {
    std::uint64_t v = 0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size())
        kvdoc::fail(doc, e.line, "'" + e.key + "' expects a non-negative integer, got '" + text + "'");
    return v;
}

Binding bind_seed(std::string section, std::string key, std::uint64_t& target) {
    return {section, key,
            [&target](const kvdoc::Document& doc, const kvdoc::Entry& e) { target = parse_u64(doc, e, e.value); },
            [&target] { return std::to_string(target); }};
}

Binding bind_range(std::string section, std::string key, camera::Range& target) {
    return {section, key,
            [&target](const kvdoc::Document& doc, const kvdoc::Entry& e) {
                const auto v = kvdoc::as_doubles(doc, e, 2);
                if (v[0] > v[1]) kvdoc::fail(doc, e.line, "'" + e.key + "' range has min > max");
                target = {v[0], v[1]};
            },
            [&target] { return format_double(target.min) + " " + format_double(target.max); }};
}

std::vector<std::string> split_words(const std::string& s) {
    std::istringstream in(s);
    std::vector<std::string> out;
    for (std::string w; in >> w;) out.push_back(w);
    return out;
}

std::vector<Binding> bindings(RunConfig& c) {
    auto& d = c.distill;
    std::vector<Binding> b;
    b.push_back(bind_int("run", "total_steps", d.total_steps, 0));
    b.push_back(bind_seed("run", "seed", d.seed));
    b.push_back(bind_double("run", "lambda_text", d.lambda_text, 0.0));
    b.push_back(bind_double("run", "lambda_image", d.lambda_image, 0.0));
    b.push_back(bind_double("run", "gamma_text", d.gamma_text));
    b.push_back(bind_double("run", "gamma_image", d.gamma_image));
    b.push_back(bind_double("run", "clip_norm", d.clip_norm));
    b.push_back(bind_int("run", "samples_per_ray", d.samples_per_ray, 1));
    b.push_back({"run", "pathology",
                 [&c](const kvdoc::Document& doc, const kvdoc::Entry& e) {
                     if (e.value == "none") {
                         c.pathology.enabled = false;
                         return;
                     }
                     try {
                         c.pathology.config.kind = scores::parse_pathology(e.value);
                     } catch (const ConfigError& err) {
                         kvdoc::fail(doc, e.line, err.what());
                     }
                     c.pathology.enabled = true;
                 },
                 [&c] { return c.pathology.enabled ? scores::to_string(c.pathology.config.kind) : std::string("none"); }});
    b.push_back(bind_double("run", "pathology_amplitude", c.pathology.config.amplitude, 0.0));

    b.push_back(bind_double("schedule", "t_max_start", d.t_max_start, 0.0));
    b.push_back(bind_double("schedule", "t_max_end", d.t_max_end, 0.0));
    b.push_back(bind_double("schedule", "t_min_start", d.t_min_start, 0.0));
    b.push_back(bind_double("schedule", "t_min_end", d.t_min_end, 0.0));
    b.push_back(bind_int("schedule", "anneal_steps", d.anneal_steps, 0));
    b.push_back(bind_int("schedule", "switch_step", d.switch_step, 0));
    b.push_back(bind_int("schedule", "resolution_start", d.resolution_start, 1));
    b.push_back(bind_int("schedule", "resolution_end", d.resolution_end, 1));
    b.push_back(bind_int("schedule", "batch_text_start", d.batch_text_start, 1));
    b.push_back(bind_int("schedule", "batch_text_end", d.batch_text_end, 1));
    b.push_back(bind_int("schedule", "batch_image_start", d.batch_image_start, 1));
    b.push_back(bind_int("schedule", "batch_image_end", d.batch_image_end, 1));
    b.push_back(bind_int("schedule", "views_per_set", d.views_per_set, 1));

    b.push_back(bind_int("diffusion", "steps", d.diffusion_steps, 1));
    b.push_back(bind_double("diffusion", "beta_start", d.beta_start, 0.0, true));
    b.push_back(bind_double("diffusion", "beta_end", d.beta_end, 0.0, true));

    b.push_back(bind_range("views", "fov", d.views.fov_deg));
    b.push_back(bind_range("views", "elevation", d.views.elevation_deg));
    b.push_back(bind_range("views", "novel_elevation", d.views.novel_elevation_deg));
    b.push_back(bind_range("views", "azimuth", d.views.azimuth_deg));
    b.push_back(bind_range("views", "distance_scale", d.views.distance_scale));
    b.push_back(bind_double("views", "object_size", d.views.object_size, 0.0, true));

    b.push_back(bind_int("field", "grid_resolution", d.field.grid_resolution, 2));
    b.push_back(bind_int("field", "feature_dim", d.field.feature_dim, 1));
    b.push_back(bind_int("field", "hidden_width", d.field.hidden_width, 1));
    b.push_back(bind_int("field", "direction_bands", d.field.direction_bands, 0));
    b.push_back(bind_double("field", "init_density", d.field.init_density, 0.0, true));
    b.push_back(bind_double("field", "init_feature_scale", d.field.init_feature_scale, 0.0));

    b.push_back(bind_double("optimizer", "lr_grid", d.optimizer.lr_grid, 0.0));
    b.push_back(bind_double("optimizer", "lr_mlp", d.optimizer.lr_mlp, 0.0));
    b.push_back(bind_double("optimizer", "beta1", d.optimizer.beta1, 0.0));
    b.push_back(bind_double("optimizer", "beta2", d.optimizer.beta2, 0.0));
    b.push_back(bind_double("optimizer", "eps", d.optimizer.eps, 0.0, true));
    b.push_back(bind_double("optimizer", "weight_decay", d.optimizer.weight_decay, 0.0));

    b.push_back(bind_int("output", "snapshot_every", c.output.snapshot_every, 0));
    b.push_back(bind_int("output", "checkpoint_every", c.output.checkpoint_every, 0));
    b.push_back(bind_int("output", "snapshot_resolution", c.output.snapshot_resolution, 1));

    b.push_back(bind_int("eval", "resolution", c.eval.resolution, 1));
    b.push_back(bind_int("eval", "iou_resolution", c.eval.iou_resolution, 16));
    b.push_back(bind_double("eval", "iou_threshold", c.eval.iou_threshold, 0.0, true));

    b.push_back(bind_int("mesh", "resolution", c.mesh.resolution, 8));
    b.push_back(bind_double("mesh", "threshold", c.mesh.threshold, 0.0, true));
    b.push_back(bind_int("mesh", "face_cap", c.mesh.face_cap, 0));
    b.push_back(bind_int("mesh", "image_resolution", c.mesh.image_resolution, 1));

    b.push_back({"ablation", "pathologies",
                 [&c](const kvdoc::Document& doc, const kvdoc::Entry& e) {
                     c.ablation.pathologies.clear();
                     for (const std::string& w : split_words(e.value)) {
                         if (w == "none") continue;
                         try {
                             c.ablation.pathologies.push_back(scores::parse_pathology(w));
                         } catch (const ConfigError& err) {
                             kvdoc::fail(doc, e.line, err.what());
                         }
                     }
                 },
                 [&c] {
                     std::string s;
                     for (auto p : c.ablation.pathologies) s += (s.empty() ? "" : " ") + scores::to_string(p);
                     return s.empty() ? std::string("none") : s;
                 }});
    b.push_back({"ablation", "seeds",
                 [&c](const kvdoc::Document& doc, const kvdoc::Entry& e) {
                     c.ablation.seeds.clear();
                     for (const std::string& w : split_words(e.value)) c.ablation.seeds.push_back(parse_u64(doc, e, w));
                     if (c.ablation.seeds.empty()) kvdoc::fail(doc, e.line, "'seeds' needs at least one seed");
                 },
                 [&c] {
                     std::string s;
                     for (auto v : c.ablation.seeds) s += (s.empty() ? "" : " ") + std::to_string(v);
                     return s;
                 }});
    b.push_back(bind_double("ablation", "attenuation_amplitude", c.ablation.attenuation_amplitude, 0.0));
    b.push_back(bind_double("ablation", "ghost_content_amplitude", c.ablation.ghost_content_amplitude, 0.0));
    b.push_back(bind_double("ablation", "hue_drift_amplitude", c.ablation.hue_drift_amplitude, 0.0));
    b.push_back(bind_int("ablation", "jobs", c.ablation.jobs, 1));
    return b;
}

}  // namespace

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double AblationConfig::amplitude(scores::Pathology p) const {
    switch (p) {
        case scores::Pathology::attenuation: return attenuation_amplitude;
        case scores::Pathology::ghost_content: return ghost_content_amplitude;
        case scores::Pathology::hue_drift: return hue_drift_amplitude;
    }
    return 0.0;
}

void RunConfig::validate() const {
    distill.validate();
    if (pathology.enabled && pathology.config.kind == scores::Pathology::attenuation && pathology.config.amplitude > 1.0)
        throw ConfigError("config: attenuation amplitude must lie in [0, 1]");
    if (ablation.attenuation_amplitude > 1.0) throw ConfigError("config: ablation attenuation_amplitude must lie in [0, 1]");
    if (ablation.ghost_content_amplitude > 1.0)
        throw ConfigError("config: ablation ghost_content_amplitude must lie in [0, 1]");
    if (ablation.seeds.empty()) throw ConfigError("config: ablation needs at least one seed");
}

Override parse_override(const std::string& text) {
    const auto eq = text.find('=');
    const auto dot = text.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq || dot == 0 || dot + 1 == eq)
        throw ConfigError("override '" + text + "' must look like section.key=value");
    return {text.substr(0, dot), text.substr(dot + 1, eq - dot - 1), text.substr(eq + 1)};
}

void apply(const kvdoc::Document& doc, RunConfig& config) {
    std::vector<Binding> table = bindings(config);
    for (const kvdoc::Section& sec : doc.sections) {
        bool known_section = false;
        for (const Binding& b : table) known_section = known_section || b.section == sec.name;
        if (!known_section) {
            if (sec.name.empty())
                kvdoc::fail(doc, sec.entries.front().line, "key '" + sec.entries.front().key + "' outside any [section]");
            kvdoc::fail(doc, sec.line, "unknown section [" + sec.name + "]");
        }
        for (const kvdoc::Entry& e : sec.entries) {
            const Binding* match = nullptr;
            for (const Binding& b : table)
                if (b.section == sec.name && b.key == e.key) match = &b;
            if (!match) kvdoc::fail(doc, e.line, "unknown key '" + e.key + "' in [" + sec.name + "]");
            match->set(doc, e);
        }
    }
}

RunConfig parse(const std::string& text, const std::string& source) {
    RunConfig config;
    apply(kvdoc::parse(text, source), config);
    config.validate();
    return config;
}

RunConfig load(const std::optional<std::filesystem::path>& path, const std::vector<Override>& overrides) {
    RunConfig config;
    if (path) {
        if (!std::filesystem::exists(*path)) throw ConfigError("config file not found: " + path->string());
        apply(kvdoc::parse_file(*path), config);
    }
    kvdoc::Document cmdline;
    cmdline.source = "<command line>";
    for (std::size_t i = 0; i < overrides.size(); ++i) {
        const Override& o = overrides[i];
        const int line = static_cast<int>(i) + 1;
        kvdoc::Section* sec = nullptr;
        for (auto& s : cmdline.sections)
            if (s.name == o.section) sec = &s;
        if (!sec) {
            cmdline.sections.push_back({o.section, line, {}});
            sec = &cmdline.sections.back();
        }
        bool replaced = false;
        for (auto& e : sec->entries)
            if (e.key == o.key) {
                e.value = o.value;
                e.line = line;
                replaced = true;
            }
        if (!replaced) sec->entries.push_back({o.key, o.value, line});
    }
    apply(cmdline, config);
    config.validate();
    return config;
}

std::string to_ini(const RunConfig& config) {
    RunConfig copy = config;
    std::ostringstream os;
    std::string current;
    for (const Binding& b : bindings(copy)) {
        if (b.section != current) {
            os << (current.empty() ? "" : "\n") << '[' << b.section << "]\n";
            current = b.section;
        }
        os << b.key << " = " << b.get() << '\n';
    }
    return os.str();
}

}  // namespace dualscore::config
