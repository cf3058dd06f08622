#include "dataio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>

#include <json.hpp>

#include "retrieval.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace dac {

namespace {

constexpr char kMagic[4] = {'D', 'A', 'C', 'F'};

void put_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& in, const std::string& path, const char* what) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in)
        raise(ErrorKind::Format, path + ": truncated file while reading " + what);
    return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
           (std::uint32_t(b[3]) << 24);
}

void put_f32_row_major(std::ostream& out, const std::vector<float>& data) {
    static_assert(sizeof(float) == 4);
    // assume little-endian host; the formats in play are x86-64/aarch64
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size() * sizeof(float)));
}

}  // namespace

const FeatureSection* FeatureFile::find(const std::string& name) const {
    for (const FeatureSection& s : sections)
        if (s.name == name) return &s;
    return nullptr;
}

const FeatureSection& FeatureFile::require(const std::string& name,
                                           const std::string& path) const {
    const FeatureSection* s = find(name);
    if (!s) raise(ErrorKind::Format, path + ": missing section '" + name + "'");
    return *s;
}

void write_features(const std::string& path, const std::vector<FeatureSection>& sections) {
    for (const FeatureSection& s : sections) {
        if (static_cast<std::size_t>(s.rows) * s.dim != s.data.size())
            raise(ErrorKind::Format, "section '" + s.name + "': declared " +
                                         std::to_string(s.rows) + "x" + std::to_string(s.dim) +
                                         " but payload has " + std::to_string(s.data.size()) +
                                         " values");
        for (float v : s.data)
            if (!std::isfinite(v))
                raise(ErrorKind::Format, "section '" + s.name + "': non-finite value rejected");
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) raise(ErrorKind::Io, "cannot open for writing: " + path);
    out.write(kMagic, 4);
    put_u32(out, kFeatureFileVersion);
    put_u32(out, static_cast<std::uint32_t>(sections.size()));
    for (const FeatureSection& s : sections) {
        put_u32(out, static_cast<std::uint32_t>(s.name.size()));
        out.write(s.name.data(), static_cast<std::streamsize>(s.name.size()));
        put_u32(out, s.rows);
        put_u32(out, s.dim);
        put_f32_row_major(out, s.data);
    }
    if (!out) raise(ErrorKind::Io, "write failed: " + path);
}

FeatureFile read_features(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) raise(ErrorKind::Io, "cannot open for reading: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        raise(ErrorKind::Format, path + ": bad magic, not a DACF container");
    const std::uint32_t version = get_u32(in, path, "version");
    if (version != kFeatureFileVersion)
        raise(ErrorKind::Format, path + ": unsupported version " + std::to_string(version));
    const std::uint32_t count = get_u32(in, path, "section count");

    FeatureFile file;
    file.sections.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        FeatureSection s;
        const std::uint32_t name_len = get_u32(in, path, "section name length");
        if (name_len > 4096)
            raise(ErrorKind::Format, path + ": implausible section name length");
        s.name.resize(name_len);
        in.read(s.name.data(), name_len);
        s.rows = get_u32(in, path, "rows");
        s.dim = get_u32(in, path, "dim");
        const std::size_t n = static_cast<std::size_t>(s.rows) * s.dim;
        s.data.resize(n);
        in.read(reinterpret_cast<char*>(s.data.data()),
                static_cast<std::streamsize>(n * sizeof(float)));
        if (!in)
            raise(ErrorKind::Format, path + ": truncated payload in section '" + s.name + "'");
        for (float v : s.data)
            if (!std::isfinite(v))
                raise(ErrorKind::Format, path + ": non-finite value in section '" + s.name + "'");
        file.sections.push_back(std::move(s));
    }
    return file;
}

FeatureSection section_from_mat(const std::string& name, const Mat& m) {
    FeatureSection s;
    s.name = name;
    s.rows = static_cast<std::uint32_t>(m.rows);
    s.dim = static_cast<std::uint32_t>(m.cols);
    s.data.reserve(m.data.size());
    for (double v : m.data) s.data.push_back(static_cast<float>(v));
    return s;
}

FeatureSection section_from_vec(const std::string& name, const Vec& v) {
    FeatureSection s;
    s.name = name;
    s.rows = 1;
    s.dim = static_cast<std::uint32_t>(v.size());
    s.data.reserve(v.size());
    for (double x : v) s.data.push_back(static_cast<float>(x));
    return s;
}

Mat mat_from_section(const FeatureSection& s) {
    Mat m(s.rows, s.dim);
    for (std::size_t i = 0; i < s.data.size(); ++i) m.data[i] = static_cast<double>(s.data[i]);
    return m;
}

Vec vec_from_section(const FeatureSection& s) {
    Vec v(s.data.size());
    for (std::size_t i = 0; i < s.data.size(); ++i) v[i] = static_cast<double>(s.data[i]);
    return v;
}

// ---- manifest -------------------------------------------------------------------

namespace {

FeatureRef parse_ref(const json& j, const std::string& ctx) {
    if (!j.is_object() || !j.contains("file") || !j.contains("section"))
        raise(ErrorKind::Format, "manifest: " + ctx + " must be {file, section}");
    return FeatureRef{j.at("file").get<std::string>(), j.at("section").get<std::string>()};
}

class RefResolver {
public:
    explicit RefResolver(const std::string& dir) : dir_(dir) {}

    const FeatureSection& resolve(const FeatureRef& ref) {
        const std::string full = (fs::path(dir_) / ref.file).string();
        auto it = files_.find(full);
        if (it == files_.end())
            it = files_.emplace(full, read_features(full)).first;
        return it->second.require(ref.section, full);
    }

private:
    std::string dir_;
    std::map<std::string, FeatureFile> files_;
};

}  // namespace

LoadedDataset load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) raise(ErrorKind::Io, "cannot open manifest: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        raise(ErrorKind::Format, "manifest parse error in " + path + ": " + e.what());
    }

    LoadedDataset out;
    Manifest& mf = out.manifest;
    mf.dir = fs::path(path).parent_path().string();
    try {
        mf.dataset = j.at("dataset").get<std::string>();
        mf.input_dim = j.at("input_dim").get<std::size_t>();
        mf.views_per_object = j.at("views_per_object").get<std::size_t>();
        for (const json& jo : j.at("objects")) {
            ManifestObject o;
            o.id = jo.at("id").get<std::string>();
            o.label = jo.at("label").get<std::string>();
            o.split = jo.at("split").get<std::string>();
            o.views = parse_ref(jo.at("views"), "object '" + o.id + "' views");
            if (jo.contains("description"))
                o.description = parse_ref(jo.at("description"), "object '" + o.id + "' description");
            mf.objects.push_back(std::move(o));
        }
        if (j.contains("class_descriptions"))
            for (auto it = j.at("class_descriptions").begin();
                 it != j.at("class_descriptions").end(); ++it)
                mf.class_descriptions.emplace_back(it.key(),
                                                   parse_ref(it.value(), "class description"));
    } catch (const json::exception& e) {
        raise(ErrorKind::Format, "manifest field error in " + path + ": " + e.what());
    }

    RefResolver resolver(mf.dir);
    OpenSetDataset& ds = out.dataset;
    std::set<std::string> ids;
    for (const ManifestObject& mo : mf.objects) {
        if (!ids.insert(mo.id).second)
            raise(ErrorKind::Format, "manifest: duplicate object id '" + mo.id + "'");
        ObjectRecord rec;
        rec.id = mo.id;
        rec.label = mo.label;
        rec.split = split_from_name(mo.split);
        const FeatureSection& vs = resolver.resolve(mo.views);
        if (vs.rows != mf.views_per_object)
            raise(ErrorKind::Format, "object '" + mo.id + "': section '" + mo.views.section +
                                         "' holds " + std::to_string(vs.rows) + " views, manifest says " +
                                         std::to_string(mf.views_per_object));
        if (vs.dim != mf.input_dim)
            raise(ErrorKind::Format, "object '" + mo.id + "': view dim " + std::to_string(vs.dim) +
                                         " vs manifest input_dim " + std::to_string(mf.input_dim));
        rec.views = mat_from_section(vs);
        if (mo.description) {
            const FeatureSection& dsec = resolver.resolve(*mo.description);
            if (dsec.rows != 1)
                raise(ErrorKind::Format, "object '" + mo.id + "': description must be a single row");
            rec.description = vec_from_section(dsec);
        }
        switch (rec.split) {
            case Split::Train: ds.train.push_back(std::move(rec)); break;
            case Split::Query: ds.query.push_back(std::move(rec)); break;
            case Split::Target: ds.target.push_back(std::move(rec)); break;
        }
    }

    for (const auto& [label, ref] : mf.class_descriptions) {
        const FeatureSection& s = resolver.resolve(ref);
        if (s.rows != 1)
            raise(ErrorKind::Format, "class description for '" + label + "' must be a single row");
        ds.class_descriptions.emplace_back(label, vec_from_section(s));
    }

    auto unique_labels = [](const std::vector<ObjectRecord>& objs) {
        std::set<std::string> s;
        for (const ObjectRecord& o : objs) s.insert(o.label);
        return std::vector<std::string>(s.begin(), s.end());
    };
    ds.seen_labels = unique_labels(ds.train);
    {
        std::set<std::string> u;
        for (const ObjectRecord& o : ds.query) u.insert(o.label);
        for (const ObjectRecord& o : ds.target) u.insert(o.label);
        ds.unseen_labels.assign(u.begin(), u.end());
    }

    SplitViolation v = validate_open_set_split(ds);
    if (!v.ok) {
        std::string msg = "manifest " + path + " violates the open-set contract:";
        for (const std::string& m : v.messages) msg += "\n  - " + m;
        raise(ErrorKind::Data, msg);
    }
    if (!v.uncovered_query_labels.empty()) {
        // queries whose label never occurs in the target split: exclude and log
        std::set<std::string> bad(v.uncovered_query_labels.begin(),
                                  v.uncovered_query_labels.end());
        std::vector<ObjectRecord> kept;
        for (ObjectRecord& q : ds.query) {
            if (bad.count(q.label))
                ds.warnings.push_back("query '" + q.id + "' excluded: label '" + q.label +
                                      "' not in target split");
            else
                kept.push_back(std::move(q));
        }
        ds.query = std::move(kept);
        if (ds.query.empty())
            raise(ErrorKind::Data, "manifest " + path + ": no usable queries after exclusions");
    }
    return out;
}

// ---- backbone / adapters / descriptors -------------------------------------------

namespace {

void append_tower_sections(std::vector<FeatureSection>& out, const std::string& tag,
                           const EncoderTower& tower) {
    Mat meta(tower.layers.size(), 2);
    for (std::size_t i = 0; i < tower.layers.size(); ++i) {
        meta.at(i, 0) = static_cast<double>(static_cast<int>(tower.layers[i].act));
        meta.at(i, 1) = tower.layers[i].adaptable ? 1.0 : 0.0;
    }
    out.push_back(section_from_mat(tag + ".meta", meta));
    for (std::size_t i = 0; i < tower.layers.size(); ++i) {
        out.push_back(section_from_mat(tag + ".L" + std::to_string(i) + ".w", tower.layers[i].w));
        out.push_back(section_from_vec(tag + ".L" + std::to_string(i) + ".bias", tower.layers[i].bias));
    }
}

EncoderTower tower_from_sections(const FeatureFile& file, const std::string& tag,
                                 const std::string& path) {
    const FeatureSection& meta = file.require(tag + ".meta", path);
    EncoderTower tower;
    for (std::uint32_t i = 0; i < meta.rows; ++i) {
        TowerLayer layer;
        const int act = static_cast<int>(meta.data[i * meta.dim + 0]);
        if (act < 0 || act > 3)
            raise(ErrorKind::Format, path + ": bad activation code in " + tag + ".meta");
        layer.act = static_cast<Activation>(act);
        layer.adaptable = meta.data[i * meta.dim + 1] != 0.0f;
        layer.w = mat_from_section(file.require(tag + ".L" + std::to_string(i) + ".w", path));
        layer.bias = vec_from_section(file.require(tag + ".L" + std::to_string(i) + ".bias", path));
        tower.layers.push_back(std::move(layer));
    }
    if (tower.layers.empty())
        raise(ErrorKind::Format, path + ": tower '" + tag + "' has no layers");
    tower.out_dim = tower.layers.back().w.rows;
    validate_tower(tower);
    return tower;
}

}  // namespace

void save_backbone(const std::string& path, const EncoderTower& vis, const EncoderTower& txt) {
    std::vector<FeatureSection> sections;
    append_tower_sections(sections, "vis", vis);
    append_tower_sections(sections, "txt", txt);
    write_features(path, sections);
}

std::pair<EncoderTower, EncoderTower> load_backbone(const std::string& path) {
    FeatureFile file = read_features(path);
    return {tower_from_sections(file, "vis", path), tower_from_sections(file, "txt", path)};
}

namespace {

void append_adapter_sections(std::vector<FeatureSection>& out, const std::string& tag,
                             const EncoderTower& tower) {
    for (std::size_t i = 0; i < tower.layers.size(); ++i) {
        if (!tower.layers[i].adapter) continue;
        const AdaptedLinear& ad = *tower.layers[i].adapter;
        const std::string base = tag + ".L" + std::to_string(i) + ".";
        out.push_back(section_from_mat(base + "A", ad.a));
        out.push_back(section_from_mat(base + "B", ad.b));
        out.push_back(section_from_vec(base + "PHI", ad.phi));
        Vec meta = {static_cast<double>(ad.d1()), static_cast<double>(ad.d2()),
                    static_cast<double>(ad.rank), ad.gamma, ad.dropout_p};
        out.push_back(section_from_vec(base + "meta", meta));
    }
}

void load_adapters_tower(EncoderTower& tower, const FeatureFile& file, const std::string& tag,
                         const std::string& path) {
    for (std::size_t i = 0; i < tower.layers.size(); ++i) {
        const std::string base = tag + ".L" + std::to_string(i) + ".";
        const FeatureSection* a = file.find(base + "A");
        if (!a) {
            if (tower.layers[i].adaptable)
                raise(ErrorKind::Format, path + ": no adapter state for adaptable layer " + base);
            continue;
        }
        if (!tower.layers[i].adaptable)
            raise(ErrorKind::Format, path + ": adapter state for non-adaptable layer " + base);
        Vec meta = vec_from_section(file.require(base + "meta", path));
        if (meta.size() != 5)
            raise(ErrorKind::Format, path + ": adapter meta must hold [d1,d2,r,gamma,p]");
        AdaptedLinear ad;
        ad.a = mat_from_section(*a);
        ad.b = mat_from_section(file.require(base + "B", path));
        ad.phi = vec_from_section(file.require(base + "PHI", path));
        ad.rank = static_cast<std::size_t>(meta[2]);
        ad.gamma = meta[3];
        ad.dropout_p = meta[4];
        const std::size_t d1 = static_cast<std::size_t>(meta[0]);
        const std::size_t d2 = static_cast<std::size_t>(meta[1]);
        if (tower.layers[i].w.rows != d1 || tower.layers[i].w.cols != d2)
            raise(ErrorKind::Format, path + ": adapter " + base + " sized " + std::to_string(d1) +
                                         "x" + std::to_string(d2) + " does not fit the backbone layer");
        if (ad.a.rows != ad.rank || ad.a.cols != d2 || ad.b.rows != d1 || ad.b.cols != ad.rank ||
            ad.phi.size() != d1)
            raise(ErrorKind::Format, path + ": adapter " + base + " has inconsistent shapes");
        ad.w0 = tower.layers[i].w;
        tower.layers[i].adapter = std::move(ad);
    }
}

}  // namespace

void save_adapters(const std::string& path, const EncoderTower& vis, const EncoderTower& txt) {
    std::vector<FeatureSection> sections;
    append_adapter_sections(sections, "vis", vis);
    append_adapter_sections(sections, "txt", txt);
    if (sections.empty())
        raise(ErrorKind::Usage, "save_adapters: towers carry no adapters");
    write_features(path, sections);
}

void load_adapters_into(EncoderTower& vis, EncoderTower& txt, const std::string& path) {
    FeatureFile file = read_features(path);
    load_adapters_tower(vis, file, "vis", path);
    load_adapters_tower(txt, file, "txt", path);
}

void save_descriptors(const std::string& path, const std::vector<Descriptor>& descs) {
    std::vector<FeatureSection> sections;
    sections.reserve(descs.size() * 3);
    for (const Descriptor& d : descs) {
        sections.push_back(section_from_vec(d.id + ".H", d.h));
        sections.push_back(section_from_vec(d.id + ".G", d.g));
        if (d.f_t) sections.push_back(section_from_vec(d.id + ".FT", *d.f_t));
    }
    write_features(path, sections);
}

std::map<std::string, StoredDescriptor> load_descriptors(const std::string& path) {
    FeatureFile file = read_features(path);
    std::map<std::string, StoredDescriptor> out;
    for (const FeatureSection& s : file.sections) {
        const std::size_t dot = s.name.rfind('.');
        if (dot == std::string::npos) continue;
        const std::string id = s.name.substr(0, dot);
        const std::string kind = s.name.substr(dot + 1);
        if (kind == "H")
            out[id].h = vec_from_section(s);
        else if (kind == "G")
            out[id].g = vec_from_section(s);
        else if (kind == "FT")
            out[id].f_t = vec_from_section(s);
    }
    return out;
}

// ---- synthetic generator -----------------------------------------------------------

void SynthConfig::validate() const {
    if (seen_classes < 2) raise(ErrorKind::Config, "gen_synthetic: need >= 2 seen classes");
    if (unseen_classes < 2) raise(ErrorKind::Config, "gen_synthetic: need >= 2 unseen classes");
    if (items_per_class < 2)
        raise(ErrorKind::Config, "gen_synthetic: need >= 2 items per class for query/target coverage");
    if (views < 1) raise(ErrorKind::Config, "gen_synthetic: views must be >= 1");
    if (input_dim < 2) raise(ErrorKind::Config, "gen_synthetic: input_dim must be >= 2");
    if (intra_class_noise < 0.0) raise(ErrorKind::Config, "gen_synthetic: noise must be >= 0");
    if (domain_shift < 0.0) raise(ErrorKind::Config, "gen_synthetic: domain_shift must be >= 0");
    if (text_noise < 0.0) raise(ErrorKind::Config, "gen_synthetic: text_noise must be >= 0");
    if (hidden_dim < 2 || embed_dim < 2)
        raise(ErrorKind::Config, "gen_synthetic: backbone dims must be >= 2");
}

namespace {

struct ShiftAffine {
    Mat q;   // low-rank perturbation of the identity
    Vec c;   // translation

    Vec apply(const Vec& x) const {
        Vec out = matvec(q, x);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += c[i];
        return out;
    }
};

// Per-dimension scale of the latent class prototypes. Sized so tower inputs
// have norm well below one: the adapter branch B(Az) then trains at the
// same pace as the additive bias, and corrections of the size the default
// schedule can reach are material against the feature scale.
constexpr double kProtoScale = 0.025;

// All class prototypes, seen and unseen, live in one shared latent subspace
// of this dimension. Adaptation learned on seen classes (suppress noise
// outside the subspace, undo the domain shift) then transfers to unseen
// classes, while class identities themselves stay disjoint.
constexpr std::size_t kSemanticDim = 10;

// Fixed "projection vs natural image" gap: identity plus a strong low-rank
// mixing term plus a translation, scaled by the configured strength. The
// mixing stretches a few random directions so they dominate cosine
// similarity; undoing it is a low-rank correction, which is exactly the
// class of fix the Adapt step can learn.
ShiftAffine make_shift(const SynthConfig& cfg, Rng& rng) {
    const std::size_t d = cfg.input_dim;
    // rank 8 mixing at the default input width: undoing it consumes the
    // whole default adapter rank, so the translation can only be absorbed
    // by a genuinely additive term
    const std::size_t mix_rank = std::max<std::size_t>(1, std::min<std::size_t>(8, d / 4));
    ShiftAffine sh;
    sh.q = Mat::identity(d);
    Mat u = sample_normal(rng, d, mix_rank);
    Mat v = sample_normal(rng, mix_rank, d);
    Mat uv = matmul(u, v);
    const double mix_scale =
        cfg.domain_shift * 1.2 / std::sqrt(static_cast<double>(mix_rank * d));
    for (std::size_t i = 0; i < sh.q.data.size(); ++i)
        sh.q.data[i] += mix_scale * uv.data[i];
    sh.c = Vec(d);
    const double c_scale = cfg.domain_shift * 5.0 * kProtoScale;
    for (std::size_t i = 0; i < d; ++i) sh.c[i] = c_scale * rng.normal();
    return sh;
}

// Two frozen linear layers, adapters on the first. Identity activations:
// the surrogate stands in for an already-pretrained encoder, and a squashing
// nonlinearity would itself re-normalize the domain shift the Adapt step is
// supposed to correct.
EncoderTower make_synth_tower(std::size_t in_dim, std::size_t hidden, std::size_t out,
                              Rng& rng) {
    EncoderTower t;
    TowerLayer l0;
    l0.w = sample_normal(rng, hidden, in_dim);
    const double s0 = 1.0 / std::sqrt(static_cast<double>(in_dim));
    for (double& x : l0.w.data) x *= s0;
    l0.bias = Vec(hidden, 0.0);
    l0.act = Activation::Identity;
    l0.adaptable = true;
    t.layers.push_back(std::move(l0));

    TowerLayer l1;
    l1.w = sample_normal(rng, out, hidden);
    const double s1 = 1.0 / std::sqrt(static_cast<double>(hidden));
    for (double& x : l1.w.data) x *= s1;
    l1.bias = Vec(out, 0.0);
    l1.act = Activation::Identity;
    l1.adaptable = false;
    t.layers.push_back(std::move(l1));

    t.out_dim = out;
    return t;
}

std::string class_label(bool seen, std::size_t idx) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s%02zu", seen ? "seen" : "unseen", idx);
    return buf;
}

}  // namespace

std::vector<std::pair<std::string, Vec>> synth_prototypes(const SynthConfig& cfg) {
    cfg.validate();
    Rng rng = Rng(cfg.seed).fork(1);
    const std::size_t k = std::min(kSemanticDim, cfg.input_dim);

    // shared semantic basis: input_dim x k, unit per-dimension variance
    Mat basis = sample_normal(rng, cfg.input_dim, k);
    const double bscale = 1.0 / std::sqrt(static_cast<double>(k));
    for (double& x : basis.data) x *= bscale;

    std::vector<std::pair<std::string, Vec>> protos;
    for (std::size_t s = 0; s < 2; ++s) {
        const bool seen = (s == 0);
        const std::size_t count = seen ? cfg.seen_classes : cfg.unseen_classes;
        for (std::size_t c = 0; c < count; ++c) {
            Vec w(k);
            for (double& x : w) x = rng.normal();
            Vec p = matvec(basis, w);
            for (double& x : p) x *= kProtoScale;
            protos.emplace_back(class_label(seen, c), std::move(p));
        }
    }
    return protos;
}

SynthOutput gen_synthetic(const SynthConfig& cfg, const std::string& out_dir) {
    cfg.validate();
    fs::create_directories(out_dir);

    const auto protos = synth_prototypes(cfg);
    Rng shift_rng = Rng(cfg.seed).fork(2);
    const ShiftAffine shift = make_shift(cfg, shift_rng);
    Rng noise_rng = Rng(cfg.seed).fork(3);
    Rng backbone_rng = Rng(cfg.seed).fork(4);

    std::vector<FeatureSection> feat_sections;
    json objects = json::array();

    const std::size_t query_per_class = std::max<std::size_t>(1, cfg.items_per_class / 4);
    std::size_t obj_counter = 0;
    for (std::size_t ci = 0; ci < protos.size(); ++ci) {
        const bool seen = ci < cfg.seen_classes;
        const std::string& label = protos[ci].first;
        const Vec& proto = protos[ci].second;
        for (std::size_t item = 0; item < cfg.items_per_class; ++item) {
            char idbuf[32];
            std::snprintf(idbuf, sizeof(idbuf), "obj%05zu", obj_counter++);
            const std::string id = idbuf;

            Mat views(cfg.views, cfg.input_dim);
            for (std::size_t m = 0; m < cfg.views; ++m) {
                Vec raw(cfg.input_dim);
                for (std::size_t k = 0; k < cfg.input_dim; ++k)
                    raw[k] = proto[k] + cfg.intra_class_noise * noise_rng.normal();
                Vec shifted = shift.apply(raw);
                std::copy(shifted.begin(), shifted.end(), views.row(m));
            }
            Vec desc(cfg.input_dim);
            for (std::size_t k = 0; k < cfg.input_dim; ++k)
                desc[k] = proto[k] + cfg.text_noise * noise_rng.normal();

            const std::string split =
                seen ? "train" : (item < query_per_class ? "query" : "target");

            feat_sections.push_back(section_from_mat(id + ".views", views));
            feat_sections.push_back(section_from_vec(id + ".desc", desc));
            objects.push_back({{"id", id},
                               {"label", label},
                               {"split", split},
                               {"views", {{"file", "features.dacf"}, {"section", id + ".views"}}},
                               {"description",
                                {{"file", "features.dacf"}, {"section", id + ".desc"}}}});
        }
    }

    json class_desc = json::object();
    for (std::size_t ci = 0; ci < cfg.seen_classes; ++ci) {
        const std::string& label = protos[ci].first;
        feat_sections.push_back(section_from_vec("cls." + label, protos[ci].second));
        class_desc[label] = {{"file", "features.dacf"}, {"section", "cls." + label}};
    }

    SynthOutput out;
    out.features_path = (fs::path(out_dir) / "features.dacf").string();
    out.backbone_path = (fs::path(out_dir) / "backbone.dacf").string();
    out.manifest_path = (fs::path(out_dir) / "manifest.json").string();

    write_features(out.features_path, feat_sections);

    // one set of weights for both towers: the surrogate for a pretrained
    // encoder pair that already shares an aligned embedding space
    EncoderTower tower = make_synth_tower(cfg.input_dim, cfg.hidden_dim, cfg.embed_dim, backbone_rng);
    save_backbone(out.backbone_path, tower, tower);

    json manifest = {{"dataset", "synth-desk"},
                     {"input_dim", cfg.input_dim},
                     {"views_per_object", cfg.views},
                     {"objects", objects},
                     {"class_descriptions", class_desc},
                     {"generator",
                      {{"seen_classes", cfg.seen_classes},
                       {"unseen_classes", cfg.unseen_classes},
                       {"items_per_class", cfg.items_per_class},
                       {"views", cfg.views},
                       {"input_dim", cfg.input_dim},
                       {"intra_class_noise", cfg.intra_class_noise},
                       {"domain_shift", cfg.domain_shift},
                       {"text_noise", cfg.text_noise},
                       {"hidden_dim", cfg.hidden_dim},
                       {"embed_dim", cfg.embed_dim},
                       {"seed", cfg.seed}}}};
    std::ofstream mo(out.manifest_path, std::ios::trunc);
    if (!mo) raise(ErrorKind::Io, "cannot write manifest: " + out.manifest_path);
    mo << manifest.dump(2) << "\n";
    if (!mo) raise(ErrorKind::Io, "manifest write failed: " + out.manifest_path);
    return out;
}

}  // namespace dac
