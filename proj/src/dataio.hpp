#ifndef DAC_DATAIO_HPP
#define DAC_DATAIO_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dataset.hpp"
#include "encoder.hpp"
#include "fusion.hpp"

namespace dac {

// ---- binary feature container ------------------------------------------------
//
// Layout, little-endian throughout:
//   magic   "DACF"
//   version u32 (currently 1)
//   count   u32
//   count * { name_len u32, name bytes, rows u32, dim u32, f32 payload }

constexpr std::uint32_t kFeatureFileVersion = 1;

struct FeatureSection {
    std::string name;
    std::uint32_t rows = 0;
    std::uint32_t dim = 0;
    std::vector<float> data;  // row-major, rows*dim entries
};

struct FeatureFile {
    std::vector<FeatureSection> sections;

    const FeatureSection* find(const std::string& name) const;
    const FeatureSection& require(const std::string& name, const std::string& path) const;
};

void write_features(const std::string& path, const std::vector<FeatureSection>& sections);
FeatureFile read_features(const std::string& path);

FeatureSection section_from_mat(const std::string& name, const Mat& m);
FeatureSection section_from_vec(const std::string& name, const Vec& v);
Mat mat_from_section(const FeatureSection& s);
Vec vec_from_section(const FeatureSection& s);

// ---- manifest ------------------------------------------------------------------

struct FeatureRef {
    std::string file;
    std::string section;
};

struct ManifestObject {
    std::string id;
    std::string label;
    std::string split;
    FeatureRef views;
    std::optional<FeatureRef> description;
};

struct Manifest {
    std::string dataset;
    std::size_t input_dim = 0;
    std::size_t views_per_object = 0;
    std::vector<ManifestObject> objects;
    std::vector<std::pair<std::string, FeatureRef>> class_descriptions;
    std::string dir;  // directory the manifest was loaded from
};

struct LoadedDataset {
    Manifest manifest;
    OpenSetDataset dataset;
};

// Parses the JSON manifest, resolves every feature reference, widens f32
// payloads and validates the open-set contract.
LoadedDataset load_manifest(const std::string& path);

// ---- backbone / adapters / descriptors -----------------------------------------

void save_backbone(const std::string& path, const EncoderTower& vis, const EncoderTower& txt);
std::pair<EncoderTower, EncoderTower> load_backbone(const std::string& path);

// Adapter state: per adapted layer, sections <tower>.L<i>.{A,B,PHI,meta}
// with meta = [d1, d2, rank, gamma, dropout_p].
void save_adapters(const std::string& path, const EncoderTower& vis, const EncoderTower& txt);
void load_adapters_into(EncoderTower& vis, EncoderTower& txt, const std::string& path);

// Descriptor store: per object, sections <id>.{H,G,FT} (FT only when present).
void save_descriptors(const std::string& path, const std::vector<Descriptor>& descs);
struct StoredDescriptor {
    Vec h;
    Vec g;
    std::optional<Vec> f_t;
};
std::map<std::string, StoredDescriptor> load_descriptors(const std::string& path);

// ---- synthetic open-set dataset -------------------------------------------------

struct SynthConfig {
    std::size_t seen_classes = 8;
    std::size_t unseen_classes = 8;
    std::size_t items_per_class = 20;
    std::size_t views = 6;
    std::size_t input_dim = 32;
    double intra_class_noise = 0.07;
    double domain_shift = 0.7;      // strength of the fixed affine on view features
    double text_noise = 0.012;      // per-object description jitter
    std::uint64_t seed = 0;
    // generated toy backbone
    std::size_t hidden_dim = 24;
    std::size_t embed_dim = 16;

    void validate() const;
};

struct SynthOutput {
    std::string manifest_path;
    std::string features_path;
    std::string backbone_path;
    std::vector<std::string> all_paths() const {
        return {manifest_path, features_path, backbone_path};
    }
};

// Writes manifest.json, features.dacf and backbone.dacf under out_dir.
// Deterministic per seed, byte for byte.
SynthOutput gen_synthetic(const SynthConfig& cfg, const std::string& out_dir);

// The latent per-class prototypes the generator draws; label order is seen
// classes then unseen classes. Exposed for oracle checks.
std::vector<std::pair<std::string, Vec>> synth_prototypes(const SynthConfig& cfg);

}  // namespace dac

#endif  // DAC_DATAIO_HPP
