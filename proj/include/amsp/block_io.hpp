#pragma once

// Block weight archives: a binary blob of AMSPT1 records plus a JSON manifest
// naming each record's role, the conv geometry, BN eps, seeds and the explicit
// shuffle permutations. Any implementation can replay a block from the pair.

#include <cstdint>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "amsp/amsp_vconv.hpp"
#include "amsp/fad_csp.hpp"
#include "amsp/serialize.hpp"

namespace amsp {

inline constexpr std::string_view kArchiveFormat = "amsp-block-weights/1";

struct Archive {
    nlohmann::json manifest;
    std::string blob;
};

class ArchiveWriter {
public:
    ArchiveWriter(std::string block, std::uint64_t seed) {
        manifest_ = {{"format", kArchiveFormat}, {"block", std::move(block)}, {"seed", seed},
                     {"layers", nlohmann::json::array()}, {"permutations", nlohmann::json::object()},
                     {"config", nlohmann::json::object()}};
    }

    nlohmann::json& config() { return manifest_["config"]; }

    void add_tensor(const std::string& role, const Tensor& t, nlohmann::json extra = nlohmann::json::object()) {
        const Shape s = t.shape();
        extra["role"] = role;
        extra["shape"] = {s.n, s.c, s.h, s.w};
        manifest_["layers"].push_back(std::move(extra));
        write_tensor(blob_, t);
    }

    void add_conv(const std::string& name, const ConvParams& p) {
        add_tensor(name + ".weight", p.weights, {{"stride", p.stride}, {"padding", p.padding}, {"groups", p.groups}});
        if (!p.bias.empty()) add_tensor(name + ".bias", channel_tensor(p.bias));
    }

    void add_bn(const std::string& name, const BNParams& p) {
        add_tensor(name + ".gamma", channel_tensor(p.gamma), {{"eps", p.eps}});
        add_tensor(name + ".beta", channel_tensor(p.beta));
        add_tensor(name + ".running_mean", channel_tensor(p.running_mean));
        add_tensor(name + ".running_var", channel_tensor(p.running_var));
    }

    void add_permutation(const std::string& name, const AMSPConfig& cfg) {
        manifest_["permutations"][name] = {
            {"group_width", cfg.group_width}, {"permutation", cfg.permutation}, {"seed", cfg.seed}};
    }

    Archive finish() && { return Archive{std::move(manifest_), std::move(blob_).str()}; }

    static Tensor channel_tensor(const std::vector<double>& v) { return Tensor(Shape{1, v.size(), 1, 1}, v); }

private:
    nlohmann::json manifest_;
    std::ostringstream blob_{std::ios::binary};
};

class ArchiveReader {
public:
    explicit ArchiveReader(const Archive& a) : manifest_(a.manifest) {
        if (manifest_.value("format", "") != kArchiveFormat) throw FormatError("weight manifest: unsupported format");
        std::istringstream is(a.blob, std::ios::binary);
        for (const auto& layer : manifest_.at("layers")) {
            const std::string role = layer.at("role").get<std::string>();
            Tensor t = read_tensor(is);
            const auto dims = layer.at("shape").get<std::vector<std::size_t>>();
            if (dims.size() != 4 || Shape{dims[0], dims[1], dims[2], dims[3]} != t.shape()) {
                throw FormatError("weight manifest: shape of '" + role + "' disagrees with the blob");
            }
            tensors_.emplace(role, std::make_pair(std::move(t), layer));
        }
        if (is.peek() != std::char_traits<char>::eof()) throw FormatError("weight blob has records beyond the manifest");
    }

    const nlohmann::json& manifest() const { return manifest_; }

    const Tensor& tensor(const std::string& role) const { return entry(role).first; }

    ConvParams conv(const std::string& name) const {
        const auto& [w, meta] = entry(name + ".weight");
        ConvParams p{w, {}, meta.at("stride").get<std::size_t>(), meta.at("padding").get<std::size_t>(),
                     meta.at("groups").get<std::size_t>()};
        if (tensors_.count(name + ".bias") != 0) p.bias = tensor(name + ".bias").values();
        return p;
    }

    BNParams bn(const std::string& name) const {
        const auto& [gamma, meta] = entry(name + ".gamma");
        return BNParams{gamma.values(), tensor(name + ".beta").values(), tensor(name + ".running_mean").values(),
                        tensor(name + ".running_var").values(), meta.at("eps").get<double>()};
    }

    AMSPConfig permutation(const std::string& name) const {
        const auto& j = manifest_.at("permutations").at(name);
        AMSPConfig cfg{j.at("group_width").get<std::size_t>(), j.at("permutation").get<std::vector<std::size_t>>(),
                       j.at("seed").get<std::uint64_t>()};
        cfg.validate();
        return cfg;
    }

private:
    const std::pair<Tensor, nlohmann::json>& entry(const std::string& role) const {
        const auto it = tensors_.find(role);
        if (it == tensors_.end()) throw FormatError("weight manifest: missing layer '" + role + "'");
        return it->second;
    }

    nlohmann::json manifest_;
    std::map<std::string, std::pair<Tensor, nlohmann::json>> tensors_;
};

inline Archive archive_block(const AMSPVConvBlock& b, std::uint64_t seed) {
    ArchiveWriter w("amsp-vconv", seed);
    w.config() = {{"c", b.in_channels()}, {"g", b.vconv.groups}, {"t", b.amsp.group_width},
                  {"k", b.vconv.shared_kernel.shape().h}, {"vconv_stride", b.vconv.stride},
                  {"vconv_padding", b.vconv.padding}};
    w.add_conv("entry.conv", b.entry_conv);
    w.add_bn("entry.bn", b.entry_bn);
    w.add_permutation("amsp", b.amsp);
    w.add_tensor("vconv.shared_kernel", b.vconv.shared_kernel);
    w.add_bn("vconv.bn", b.vconv.post_bn);
    return std::move(w).finish();
}

inline AMSPVConvBlock load_amsp_vconv_block(const Archive& a) {
    ArchiveReader r(a);
    if (r.manifest().at("block") != "amsp-vconv") throw FormatError("weight manifest: not an amsp-vconv block");
    const auto& cfg = r.manifest().at("config");
    AMSPVConvBlock b;
    b.entry_conv = r.conv("entry.conv");
    b.entry_bn = r.bn("entry.bn");
    b.amsp = r.permutation("amsp");
    b.vconv.shared_kernel = r.tensor("vconv.shared_kernel");
    b.vconv.groups = cfg.at("g").get<std::size_t>();
    b.vconv.stride = cfg.at("vconv_stride").get<std::size_t>();
    b.vconv.padding = cfg.at("vconv_padding").get<std::size_t>();
    b.vconv.post_bn = r.bn("vconv.bn");
    return b;
}

inline Archive archive_block(const FADCSPParams& p, std::uint64_t seed) {
    ArchiveWriter w("fad-csp", seed);
    w.config() = {{"c", p.out_conv.out_channels()}, {"r", p.gfa.reduction}, {"n", p.rep.splits()}};
    w.add_permutation("gfa.amsp", p.gfa.amsp);
    w.add_conv("gfa.fuse.conv", p.gfa.fuse_conv);
    w.add_bn("gfa.fuse.bn", p.gfa.fuse_bn);
    w.add_conv("gfa.branch_h", p.gfa.branch_h);
    w.add_conv("gfa.branch_w", p.gfa.branch_w);
    for (std::size_t i = 0; i < p.rep.splits(); ++i) {
        const std::string pre = "rep." + std::to_string(i);
        const BottleneckParams& b = p.rep.bottlenecks[i];
        w.add_conv(pre + ".pointwise.conv", b.pointwise);
        w.add_bn(pre + ".pointwise.bn", b.pointwise_bn);
        w.add_conv(pre + ".depthwise.conv", b.depthwise);
        w.add_bn(pre + ".depthwise.bn", b.depthwise_bn);
    }
    w.add_conv("out.conv", p.out_conv);
    w.add_bn("out.bn", p.out_bn);
    return std::move(w).finish();
}

inline FADCSPParams load_fad_csp(const Archive& a) {
    ArchiveReader r(a);
    if (r.manifest().at("block") != "fad-csp") throw FormatError("weight manifest: not a fad-csp block");
    const auto& cfg = r.manifest().at("config");
    FADCSPParams p;
    p.gfa.reduction = cfg.at("r").get<std::size_t>();
    p.gfa.amsp = r.permutation("gfa.amsp");
    p.gfa.fuse_conv = r.conv("gfa.fuse.conv");
    p.gfa.fuse_bn = r.bn("gfa.fuse.bn");
    p.gfa.branch_h = r.conv("gfa.branch_h");
    p.gfa.branch_w = r.conv("gfa.branch_w");
    const auto n = cfg.at("n").get<std::size_t>();
    for (std::size_t i = 0; i < n; ++i) {
        const std::string pre = "rep." + std::to_string(i);
        p.rep.bottlenecks.push_back(BottleneckParams{r.conv(pre + ".pointwise.conv"), r.bn(pre + ".pointwise.bn"),
                                                     r.conv(pre + ".depthwise.conv"), r.bn(pre + ".depthwise.bn")});
    }
    p.out_conv = r.conv("out.conv");
    p.out_bn = r.bn("out.bn");
    return p;
}

/// Writes `<prefix>.json` and `<prefix>.amspw`.
inline void save_archive(const std::filesystem::path& prefix, Archive a) {
    std::filesystem::path blob = prefix;
    blob += ".amspw";
    std::filesystem::path manifest = prefix;
    manifest += ".json";
    a.manifest["weights_file"] = blob.filename().string();
    write_file_atomic(blob, a.blob);
    write_file_atomic(manifest, a.manifest.dump(2) + "\n");
}

inline Archive load_archive(const std::filesystem::path& manifest_path) {
    Archive a;
    try {
        a.manifest = nlohmann::json::parse(read_file(manifest_path));
        a.blob = read_file(manifest_path.parent_path() / a.manifest.at("weights_file").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(manifest_path.string() + ": " + e.what());
    }
    return a;
}

}  // namespace amsp
