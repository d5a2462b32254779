#include "wmevade/model_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace wmevade {

namespace {

constexpr char kMagic[4] = {'W', 'M', 'N', 'N'};
constexpr uint16_t kVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "WMNN writer assumes a little-endian host");

template <typename T>
void write_raw(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::istream& in, const char* what) {
    T v;
    if (!in.read(reinterpret_cast<char*>(&v), sizeof(T)))
        throw FormatError(std::string("truncated model file while reading ") + what);
    return v;
}

std::string metadata_line(const ModelMetadata& md) {
    std::ostringstream os;
    os << "meta owner=" << (md.owner_id.empty() ? "-" : md.owner_id)
       << " watermarked=" << (md.watermarked ? 1 : 0) << " seed=" << md.training_seed
       << " classes=" << md.class_count;
    return os.str();
}

ModelMetadata parse_metadata_line(const std::string& line) {
    ModelMetadata md;
    std::istringstream is(line);
    std::string word;
    is >> word;
    if (word != "meta") throw FormatError("model descriptor must start with a meta line");
    while (is >> word) {
        const auto eq = word.find('=');
        if (eq == std::string::npos) throw FormatError("bad meta field: " + word);
        const std::string key = word.substr(0, eq);
        const std::string value = word.substr(eq + 1);
        if (key == "owner")
            md.owner_id = value == "-" ? "" : value;
        else if (key == "watermarked")
            md.watermarked = value == "1";
        else if (key == "seed")
            md.training_seed = std::stoull(value);
        else if (key == "classes")
            md.class_count = std::stoull(value);
        else
            throw FormatError("unknown meta field: " + key);
    }
    return md;
}

}  // namespace

void save_model(const Model& model, const std::string& path) {
    model.arch.validate();
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open model file for writing: " + path);
    f.write(kMagic, 4);
    write_raw(f, kVersion);

    const std::string text = metadata_line(model.metadata) + "\n" + model.arch.to_text();
    write_raw(f, static_cast<uint32_t>(text.size()));
    f.write(text.data(), static_cast<std::streamsize>(text.size()));

    write_raw(f, static_cast<uint32_t>(model.weights.size()));
    for (const Tensor& w : model.weights) {
        write_raw(f, static_cast<uint8_t>(w.shape.size()));
        for (size_t d : w.shape) write_raw(f, static_cast<uint32_t>(d));
        f.write(reinterpret_cast<const char*>(w.values.data()),
                static_cast<std::streamsize>(w.values.size() * sizeof(float)));
    }
    if (!f) throw IoError("failed writing model file: " + path);
}

Model load_model(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open model file: " + path);
    char magic[4];
    if (!f.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
        throw FormatError("not a WMNN model file: " + path);
    const auto version = read_raw<uint16_t>(f, "version");
    if (version != kVersion)
        throw FormatError("unsupported WMNN version " + std::to_string(version));

    const auto text_len = read_raw<uint32_t>(f, "descriptor length");
    std::string text(text_len, '\0');
    if (!f.read(text.data(), text_len)) throw FormatError("truncated model descriptor");
    const auto newline = text.find('\n');
    if (newline == std::string::npos) throw FormatError("model descriptor missing meta line");

    Model model;
    model.metadata = parse_metadata_line(text.substr(0, newline));
    model.arch = ArchitectureDescriptor::parse(text.substr(newline + 1));

    const auto tensor_count = read_raw<uint32_t>(f, "tensor count");
    model.weights.reserve(tensor_count);
    for (uint32_t t = 0; t < tensor_count; ++t) {
        const auto rank = read_raw<uint8_t>(f, "tensor rank");
        std::vector<size_t> shape(rank);
        for (auto& d : shape) d = read_raw<uint32_t>(f, "tensor dim");
        Tensor w(shape);
        if (!f.read(reinterpret_cast<char*>(w.values.data()),
                    static_cast<std::streamsize>(w.values.size() * sizeof(float))))
            throw FormatError("truncated tensor data in " + path);
        model.weights.push_back(std::move(w));
    }

    // Cross-check weights against the architecture before handing it out.
    Model reference = init_model(model.arch, 0);
    if (reference.weights.size() != model.weights.size())
        throw ConsistencyError("weight tensor count does not match architecture");
    for (size_t i = 0; i < model.weights.size(); ++i)
        if (reference.weights[i].shape != model.weights[i].shape)
            throw ConsistencyError("weight tensor shape does not match architecture");
    if (model.metadata.class_count != model.arch.class_count())
        throw ConsistencyError("metadata class count does not match architecture");
    return model;
}

}  // namespace wmevade
