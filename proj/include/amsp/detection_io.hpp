#pragma once

// JSON-lines detections: {"x1":f,"y1":f,"x2":f,"y2":f,"score":f,"class":i} with
// an optional "image" grouping key. Survivor lines add "adjusted_score".

#include <cstddef>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "amsp/nms.hpp"
#include "amsp/serialize.hpp"

namespace amsp::nms {

struct DetectionRecord {
    DetBox box;
    std::optional<std::string> image;
};

namespace detail {

inline std::string image_key(const nlohmann::json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number_integer()) return std::to_string(v.get<long long>());
    throw FormatError("\"image\" must be a string or integer");
}

}  // namespace detail

/// Parses one line. Throws FormatError; ContractError for degenerate boxes.
inline DetectionRecord parse_detection(const std::string& line) {
    const auto j = nlohmann::json::parse(line);
    if (!j.is_object()) throw FormatError("detection must be a JSON object");
    const auto num = [&](const char* key) {
        const auto it = j.find(key);
        if (it == j.end() || !it->is_number()) throw FormatError(std::string("missing or non-numeric \"") + key + "\"");
        return it->get<double>();
    };
    const auto cls = j.find("class");
    if (cls == j.end() || !cls->is_number_integer() || cls->get<long long>() < 0) {
        throw FormatError("\"class\" must be a non-negative integer");
    }
    DetectionRecord rec;
    rec.box = make_box(num("x1"), num("y1"), num("x2"), num("y2"), num("score"), cls->get<std::size_t>());
    if (const auto img = j.find("image"); img != j.end()) rec.image = detail::image_key(*img);
    return rec;
}

/// Reads every non-blank line; errors carry the 1-based line number.
inline std::vector<DetectionRecord> read_detections(std::istream& is) {
    std::vector<DetectionRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(parse_detection(line));
        } catch (const nlohmann::json::exception& e) {
            throw FormatError("line " + std::to_string(lineno) + ": " + e.what());
        } catch (const std::exception& e) {
            throw FormatError("line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

inline nlohmann::json detection_json(const DetectionRecord& rec, std::optional<double> adjusted = std::nullopt) {
    nlohmann::json j{{"x1", rec.box.x1}, {"y1", rec.box.y1}, {"x2", rec.box.x2}, {"y2", rec.box.y2},
                     {"score", rec.box.score}, {"class", rec.box.class_id}};
    if (rec.image) j["image"] = *rec.image;
    if (adjusted) j["adjusted_score"] = *adjusted;
    return j;
}

/// Images in first-appearance order; records without a key share one group.
struct ImageGroups {
    std::vector<std::optional<std::string>> keys;
    std::vector<std::vector<std::size_t>> members;  // indices into the record list
};

inline ImageGroups group_by_image(const std::vector<DetectionRecord>& records) {
    ImageGroups g;
    std::map<std::optional<std::string>, std::size_t> slot;
    for (std::size_t i = 0; i < records.size(); ++i) {
        auto [it, fresh] = slot.try_emplace(records[i].image, g.keys.size());
        if (fresh) {
            g.keys.push_back(records[i].image);
            g.members.emplace_back();
        }
        g.members[it->second].push_back(i);
    }
    return g;
}

}  // namespace amsp::nms
