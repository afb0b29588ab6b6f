#pragma once

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "lanet/ops.hpp"
#include "lanet/png_io.hpp"
#include "lanet/rng.hpp"

namespace lanet {

inline constexpr int kNumClasses = 6;
inline constexpr int kClassImpervious = 0;
inline constexpr int kClassBuilding = 1;
inline constexpr int kClassLowVeg = 2;
inline constexpr int kClassTree = 3;
inline constexpr int kClassCar = 4;
inline constexpr int kClassClutter = 5;

inline const std::array<std::string, kNumClasses>& class_names() {
    static const std::array<std::string, kNumClasses> names{
        "impervious", "building", "low_vegetation", "tree", "car", "clutter"};
    return names;
}

/// ISPRS-style class colors: impervious white, building blue, low-veg cyan,
/// tree green, car yellow, clutter red.
inline const std::vector<std::array<std::uint8_t, 3>>& class_palette() {
    static const std::vector<std::array<std::uint8_t, 3>> pal{
        {255, 255, 255}, {0, 0, 255}, {0, 255, 255}, {0, 255, 0}, {255, 255, 0}, {255, 0, 0}};
    return pal;
}

/// One dataset unit: multi-band image in [0,1], dense per-pixel labels.
struct RasterSample {
    Tensor<float> image;  // (1, bands, H, W), values quantized to the 8-bit grid
    LabelMap labels;      // (1, H, W)
    std::string id;
    std::uint64_t seed = 0;
    int size = 0;
};

struct DatasetManifest {
    std::filesystem::path root;
    int version = 1;
    std::uint64_t seed = 0;
    int bands = 4;
    int size = 0;
    std::vector<std::string> classes;
    std::vector<std::string> train_ids, val_ids, test_ids;
    std::map<std::string, std::uint32_t> band0_checksums;

    std::vector<std::string> all_ids() const {
        std::vector<std::string> ids = train_ids;
        ids.insert(ids.end(), val_ids.begin(), val_ids.end());
        ids.insert(ids.end(), test_ids.begin(), test_ids.end());
        return ids;
    }
};

namespace detail {

struct Scene {
    int size;
    int bands;
    std::vector<float> image;  // bands * size * size
    std::vector<std::uint8_t> labels;

    float& px(int b, int y, int x) { return image[(static_cast<std::size_t>(b) * size + y) * size + x]; }
    std::uint8_t& lbl(int y, int x) { return labels[static_cast<std::size_t>(y) * size + x]; }
};

// Shared base texture for both vegetation classes; tree vs low vegetation is
// decided purely by layout context, never by the pixel distribution.
inline void paint_vegetation_pixel(Scene& s, int y, int x, Rng& rng) {
    const float g = static_cast<float>(rng.uniform(0.45, 0.75));
    s.px(0, y, x) = g * 0.55f;
    s.px(1, y, x) = g;
    s.px(2, y, x) = g * 0.40f;
}

inline void fill_rect(Scene& s, int y0, int x0, int h, int w,
                      const std::function<void(int, int)>& paint) {
    const int y1 = std::min(s.size, y0 + h), x1 = std::min(s.size, x0 + w);
    for (int y = std::max(0, y0); y < y1; ++y)
        for (int x = std::max(0, x0); x < x1; ++x) paint(y, x);
}

inline void fill_disk(Scene& s, int cy, int cx, int r,
                      const std::function<void(int, int)>& paint) {
    for (int y = std::max(0, cy - r); y <= std::min(s.size - 1, cy + r); ++y)
        for (int x = std::max(0, cx - r); x <= std::min(s.size - 1, cx + r); ++x)
            if ((y - cy) * (y - cy) + (x - cx) * (x - cx) <= r * r) paint(y, x);
}

inline Scene compose_scene(std::uint64_t dataset_seed, std::uint64_t index, int size, int bands) {
    Rng rng = Rng::derive(dataset_seed, index);
    Scene s{size, bands,
            std::vector<float>(static_cast<std::size_t>(bands) * size * size, 0.0f),
            std::vector<std::uint8_t>(static_cast<std::size_t>(size) * size, kClassImpervious)};

    // impervious background
    const float bg = static_cast<float>(rng.uniform(0.38, 0.48));
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const float v = bg + static_cast<float>(rng.uniform(-0.03, 0.03));
            s.px(0, y, x) = v;
            s.px(1, y, x) = v;
            s.px(2, y, x) = v * 0.95f;
        }

    // road corridors (still impervious), used later to place cars
    std::vector<std::uint8_t> road(static_cast<std::size_t>(size) * size, 0);
    const int n_h_roads = rng.range(1, 2), n_v_roads = rng.range(1, 2);
    auto paint_road = [&](int y, int x) {
        const float v = static_cast<float>(0.22 + rng.uniform(-0.02, 0.02));
        s.px(0, y, x) = v;
        s.px(1, y, x) = v;
        s.px(2, y, x) = v;
        s.lbl(y, x) = kClassImpervious;
        road[static_cast<std::size_t>(y) * size + x] = 1;
    };
    for (int i = 0; i < n_h_roads; ++i) {
        const int w = rng.range(8, 13);
        fill_rect(s, rng.range(0, size - w), 0, w, size, paint_road);
    }
    for (int i = 0; i < n_v_roads; ++i) {
        const int w = rng.range(8, 13);
        fill_rect(s, 0, rng.range(0, size - w), size, w, paint_road);
    }

    // open low-vegetation strips
    auto paint_lowveg = [&](int y, int x) {
        paint_vegetation_pixel(s, y, x, rng);
        s.lbl(y, x) = kClassLowVeg;
    };
    const int n_strips = rng.range(2, 4);
    for (int i = 0; i < n_strips; ++i) {
        const int w = rng.range(6, 12);
        const int len = rng.range(size / 2, size);
        if (rng.coin())
            fill_rect(s, rng.range(0, size - w), rng.range(0, size - len / 2), w, len, paint_lowveg);
        else
            fill_rect(s, rng.range(0, size - len / 2), rng.range(0, size - w), len, w, paint_lowveg);
    }

    // park regions holding clustered tree blobs
    std::vector<std::uint8_t> tree_mask(static_cast<std::size_t>(size) * size, 0);
    const int n_parks = rng.range(2, 3);
    for (int i = 0; i < n_parks; ++i) {
        const int ph = rng.range(size / 4, size / 2), pw = rng.range(size / 4, size / 2);
        const int py = rng.range(0, size - ph), pxo = rng.range(0, size - pw);
        const int n_blobs = rng.range(6, 12);
        for (int b = 0; b < n_blobs; ++b) {
            const int r = rng.range(4, 8);
            const int cy = py + rng.range(0, ph - 1), cx = pxo + rng.range(0, pw - 1);
            fill_disk(s, cy, cx, r, [&](int y, int x) {
                paint_vegetation_pixel(s, y, x, rng);
                s.lbl(y, x) = kClassTree;
                tree_mask[static_cast<std::size_t>(y) * size + x] = 1;
            });
        }
    }

    // buildings: bright reddish roofs, strong elevation
    std::vector<std::uint8_t> bld_mask(static_cast<std::size_t>(size) * size, 0);
    const int n_buildings = rng.range(2, 5);
    for (int i = 0; i < n_buildings; ++i) {
        const int bh = rng.range(14, 36), bw = rng.range(14, 36);
        const float roof = static_cast<float>(rng.uniform(0.62, 0.85));
        fill_rect(s, rng.range(0, size - bh), rng.range(0, size - bw), bh, bw, [&](int y, int x) {
            s.px(0, y, x) = roof + static_cast<float>(rng.uniform(-0.04, 0.04));
            s.px(1, y, x) = roof * 0.55f + static_cast<float>(rng.uniform(-0.04, 0.04));
            s.px(2, y, x) = roof * 0.50f;
            s.lbl(y, x) = kClassBuilding;
            bld_mask[static_cast<std::size_t>(y) * size + x] = 1;
            road[static_cast<std::size_t>(y) * size + x] = 0;
        });
    }

    // cars only on remaining road surface
    int cars_placed = 0;
    for (int attempt = 0; attempt < 80 && cars_placed < rng.range(4, 8) + 4; ++attempt) {
        const int cy = rng.range(0, size - 5), cx = rng.range(0, size - 8);
        if (!road[static_cast<std::size_t>(cy) * size + cx]) continue;
        const float r = static_cast<float>(rng.uniform(0.2, 1.0));
        const float g = static_cast<float>(rng.uniform(0.2, 1.0));
        const float b = static_cast<float>(rng.uniform(0.2, 1.0));
        const bool horiz = rng.coin();
        fill_rect(s, cy, cx, horiz ? 4 : 7, horiz ? 7 : 4, [&](int y, int x) {
            s.px(0, y, x) = r;
            s.px(1, y, x) = g;
            s.px(2, y, x) = b;
            s.lbl(y, x) = kClassCar;
        });
        ++cars_placed;
    }
    if (cars_placed == 0) {
        // guaranteed fallback car in the first road row painted above
        for (int y = 0; y < size && cars_placed == 0; ++y)
            for (int x = 0; x + 7 < size && cars_placed == 0; ++x)
                if (road[static_cast<std::size_t>(y) * size + x]) {
                    fill_rect(s, y, x, 4, 7, [&](int yy, int xx) {
                        s.px(0, yy, xx) = 0.9f;
                        s.px(1, yy, xx) = 0.1f;
                        s.px(2, yy, xx) = 0.1f;
                        s.lbl(yy, xx) = kClassCar;
                    });
                    ++cars_placed;
                }
    }

    // sparse clutter patches
    const int n_clutter = rng.range(2, 5);
    for (int i = 0; i < n_clutter; ++i) {
        const int r = rng.range(3, 6);
        fill_disk(s, rng.range(r, size - r - 1), rng.range(r, size - r - 1), r, [&](int y, int x) {
            s.px(0, y, x) = static_cast<float>(rng.uniform(0.0, 1.0));
            s.px(1, y, x) = static_cast<float>(rng.uniform(0.0, 1.0));
            s.px(2, y, x) = static_cast<float>(rng.uniform(0.0, 1.0));
            s.lbl(y, x) = kClassClutter;
        });
    }

    // synthetic elevation band: flat ground, tall buildings, mid-height trees
    if (bands >= 4) {
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x) {
                float e = 0.08f + static_cast<float>(rng.uniform(0.0, 0.08));
                const std::size_t off = static_cast<std::size_t>(y) * size + x;
                if (bld_mask[off] && s.lbl(y, x) == kClassBuilding)
                    e = 0.55f + static_cast<float>(rng.uniform(0.0, 0.3));
                else if (tree_mask[off] && s.lbl(y, x) == kClassTree)
                    e = 0.25f + static_cast<float>(rng.uniform(0.0, 0.2));
                s.px(3, y, x) = e;
            }
    }

    // per-pixel sensor noise on spectral bands, then quantize to the 8-bit grid
    for (int b = 0; b < bands; ++b)
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x) {
                float v = s.px(b, y, x);
                if (b < 3) v += static_cast<float>(rng.uniform(-0.02, 0.02));
                v = std::clamp(v, 0.0f, 1.0f);
                s.px(b, y, x) = static_cast<float>(std::lround(v * 255.0f)) / 255.0f;
            }
    return s;
}

inline std::string sample_id(std::uint64_t index) {
    std::ostringstream os;
    os << "scene_";
    os.width(4);
    os.fill('0');
    os << index;
    return os.str();
}

inline std::vector<std::uint8_t> band_bytes(const Tensor<float>& image, int band) {
    const int H = image.shape.h, W = image.shape.w;
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(H) * W);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
            bytes[static_cast<std::size_t>(y) * W + x] =
                static_cast<std::uint8_t>(std::lround(image.at(0, band, y, x) * 255.0f));
    return bytes;
}

}  // namespace detail

inline RasterSample synth_sample(std::uint64_t dataset_seed, std::uint64_t index, int size,
                                 int bands) {
    detail::Scene s = detail::compose_scene(dataset_seed, index, size, bands);
    RasterSample sample;
    sample.id = detail::sample_id(index);
    sample.seed = dataset_seed;
    sample.size = size;
    sample.image = Tensor<float>(Shape{1, bands, size, size}, std::move(s.image));
    sample.labels = LabelMap(1, size, size);
    for (std::size_t i = 0; i < s.labels.size(); ++i) sample.labels.ids[i] = s.labels[i];
    return sample;
}

inline void save_sample(const RasterSample& sample, const std::filesystem::path& root) {
    namespace fs = std::filesystem;
    fs::create_directories(root / "images");
    fs::create_directories(root / "labels");
    fs::create_directories(root / "meta");
    const int bands = sample.image.shape.c;
    const int H = sample.image.shape.h, W = sample.image.shape.w;
    for (int b = 0; b < bands; ++b) {
        auto bytes = detail::band_bytes(sample.image, b);
        write_png_gray8((root / "images" / (sample.id + "_b" + std::to_string(b) + ".png")).string(),
                        W, H, bytes.data());
    }
    std::vector<std::uint8_t> lbl(sample.labels.ids.begin(), sample.labels.ids.end());
    write_png_pal8((root / "labels" / (sample.id + ".png")).string(), W, H, lbl.data(),
                   class_palette());
    std::ofstream meta(root / "meta" / (sample.id + ".txt"));
    meta << "id = " << sample.id << "\n"
         << "seed = " << sample.seed << "\n"
         << "size = " << sample.size << "\n";
}

inline void save_manifest(const DatasetManifest& m) {
    std::ofstream out(m.root / "manifest.txt");
    if (!out) throw std::runtime_error("cannot write manifest in " + m.root.string());
    auto join = [](const std::vector<std::string>& v) {
        std::string s;
        for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + v[i];
        return s;
    };
    out << "version = " << m.version << "\n"
        << "seed = " << m.seed << "\n"
        << "bands = " << m.bands << "\n"
        << "size = " << m.size << "\n"
        << "classes = " << join(m.classes) << "\n"
        << "split_train = " << join(m.train_ids) << "\n"
        << "split_val = " << join(m.val_ids) << "\n"
        << "split_test = " << join(m.test_ids) << "\n";
    for (const auto& [id, crc] : m.band0_checksums) out << "checksum." << id << " = " << crc << "\n";
}

/// Generates `count` procedural scenes under `out_dir` with a 70/10/20
/// train/val/test split by id. Fully determined by (seed, count, size).
inline DatasetManifest synth_generate(std::uint64_t seed, int count, int size,
                                      const std::filesystem::path& out_dir, int bands = 4) {
    if (count < 1) throw std::invalid_argument("synth_generate: count must be >= 1");
    if (size < 32 || size % 16 != 0)
        throw std::invalid_argument("synth_generate: size must be >= 32 and divisible by 16");
    if (bands != 3 && bands != 4) throw std::invalid_argument("synth_generate: bands must be 3 or 4");
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec || !std::filesystem::is_directory(out_dir))
        throw std::runtime_error("synth_generate: cannot create output directory " +
                                 out_dir.string());

    DatasetManifest m;
    m.root = out_dir;
    m.seed = seed;
    m.bands = bands;
    m.size = size;
    m.classes.assign(class_names().begin(), class_names().end());

    const int n_train = std::max(1, (count * 7) / 10);
    const int n_val = std::max(count > 1 ? 1 : 0, count / 10);
    for (int i = 0; i < count; ++i) {
        RasterSample sample = synth_sample(seed, static_cast<std::uint64_t>(i), size, bands);
        save_sample(sample, out_dir);
        auto bytes = detail::band_bytes(sample.image, 0);
        m.band0_checksums[sample.id] = crc32_bytes(bytes.data(), bytes.size());
        if (i < n_train)
            m.train_ids.push_back(sample.id);
        else if (i < n_train + n_val)
            m.val_ids.push_back(sample.id);
        else
            m.test_ids.push_back(sample.id);
    }
    save_manifest(m);
    return m;
}

inline DatasetManifest load_manifest(const std::filesystem::path& root) {
    std::ifstream in(root / "manifest.txt");
    if (!in) throw std::runtime_error("missing manifest: " + (root / "manifest.txt").string());
    DatasetManifest m;
    m.root = root;
    auto split_csv = [](const std::string& s) {
        std::vector<std::string> out;
        std::istringstream iss(s);
        std::string item;
        while (std::getline(iss, item, ','))
            if (!item.empty()) out.push_back(item);
        return out;
    };
    std::string line;
    while (std::getline(in, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (key == "version") m.version = std::stoi(val);
        else if (key == "seed") m.seed = std::stoull(val);
        else if (key == "bands") m.bands = std::stoi(val);
        else if (key == "size") m.size = std::stoi(val);
        else if (key == "classes") m.classes = split_csv(val);
        else if (key == "split_train") m.train_ids = split_csv(val);
        else if (key == "split_val") m.val_ids = split_csv(val);
        else if (key == "split_test") m.test_ids = split_csv(val);
        else if (key.rfind("checksum.", 0) == 0)
            m.band0_checksums[key.substr(9)] = static_cast<std::uint32_t>(std::stoul(val));
        else
            throw std::runtime_error("manifest: unknown key '" + key + "'");
    }
    for (const auto& id : m.all_ids()) {
        const auto p = root / "labels" / (id + ".png");
        if (!std::filesystem::exists(p))
            throw std::runtime_error("manifest lists missing sample: " + p.string());
    }
    return m;
}

inline RasterSample load_sample(const DatasetManifest& m, const std::string& id) {
    const auto ids = m.all_ids();
    if (std::find(ids.begin(), ids.end(), id) == ids.end())
        throw std::runtime_error("unknown sample id: " + id);

    PngImage lbl = read_png((m.root / "labels" / (id + ".png")).string());
    const int H = lbl.height, W = lbl.width;
    RasterSample sample;
    sample.id = id;
    sample.seed = m.seed;
    sample.size = W;
    sample.image = Tensor<float>(Shape{1, m.bands, H, W});
    for (int b = 0; b < m.bands; ++b) {
        const auto path = m.root / "images" / (id + "_b" + std::to_string(b) + ".png");
        if (!std::filesystem::exists(path))
            throw std::runtime_error("band file missing (band count mismatch with manifest?): " +
                                     path.string());
        PngImage band = read_png(path.string());
        if (band.width != W || band.height != H || band.channels != 1)
            throw std::runtime_error("band file has wrong geometry: " + path.string());
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x)
                sample.image.at(0, b, y, x) =
                    band.pixels[static_cast<std::size_t>(y) * W + x] / 255.0f;
    }
    sample.labels = LabelMap(1, H, W);
    for (std::size_t i = 0; i < lbl.pixels.size(); ++i) {
        if (lbl.pixels[i] >= kNumClasses)
            throw std::runtime_error("label out of range in sample " + id);
        sample.labels.ids[i] = lbl.pixels[i];
    }
    return sample;
}

// --- augmentation -----------------------------------------------------------

inline Tensor<float> flip_image(const Tensor<float>& img, bool horizontal, bool vertical) {
    Tensor<float> out(img.shape);
    const int H = img.shape.h, W = img.shape.w;
    for (int n = 0; n < img.shape.n; ++n)
        for (int c = 0; c < img.shape.c; ++c)
            for (int y = 0; y < H; ++y)
                for (int x = 0; x < W; ++x)
                    out.at(n, c, y, x) =
                        img.at(n, c, vertical ? H - 1 - y : y, horizontal ? W - 1 - x : x);
    return out;
}

inline LabelMap flip_labels(const LabelMap& lbl, bool horizontal, bool vertical) {
    LabelMap out(lbl.n, lbl.h, lbl.w);
    for (int n = 0; n < lbl.n; ++n)
        for (int y = 0; y < lbl.h; ++y)
            for (int x = 0; x < lbl.w; ++x)
                out.at(n, y, x) =
                    lbl.at(n, vertical ? lbl.h - 1 - y : y, horizontal ? lbl.w - 1 - x : x);
    return out;
}

inline RasterSample crop_sample(const RasterSample& s, int y0, int x0, int crop) {
    RasterSample out;
    out.id = s.id;
    out.seed = s.seed;
    out.size = crop;
    out.image = Tensor<float>(Shape{1, s.image.shape.c, crop, crop});
    out.labels = LabelMap(1, crop, crop);
    for (int c = 0; c < s.image.shape.c; ++c)
        for (int y = 0; y < crop; ++y)
            for (int x = 0; x < crop; ++x)
                out.image.at(0, c, y, x) = s.image.at(0, c, y0 + y, x0 + x);
    for (int y = 0; y < crop; ++y)
        for (int x = 0; x < crop; ++x) out.labels.at(0, y, x) = s.labels.at(0, y0 + y, x0 + x);
    return out;
}

/// Random crop + independent horizontal/vertical flips (p = 0.5 each); image
/// and labels transformed identically.
inline RasterSample augment(const RasterSample& s, int crop, Rng& rng) {
    if (s.image.shape.h < crop || s.image.shape.w < crop)
        throw std::invalid_argument("augment: crop " + std::to_string(crop) +
                                    " larger than sample " + s.image.shape.str());
    const int y0 = static_cast<int>(rng.below(s.image.shape.h - crop + 1));
    const int x0 = static_cast<int>(rng.below(s.image.shape.w - crop + 1));
    RasterSample out = crop_sample(s, y0, x0, crop);
    const bool fh = rng.coin(), fv = rng.coin();
    if (fh || fv) {
        out.image = flip_image(out.image, fh, fv);
        out.labels = flip_labels(out.labels, fh, fv);
    }
    return out;
}

}  // namespace lanet
