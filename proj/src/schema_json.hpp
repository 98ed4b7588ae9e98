#pragma once

#include "json.hpp"
#include "shiftlens/dataset.hpp"

namespace shiftlens::datagen {

inline void to_json(nlohmann::json& j, const ConceptSpec& c) {
  j = {{"name", c.name}, {"cardinality", c.cardinality}, {"values", c.value_grid}};
}

inline void from_json(const nlohmann::json& j, ConceptSpec& c) {
  j.at("name").get_to(c.name);
  j.at("cardinality").get_to(c.cardinality);
  j.at("values").get_to(c.value_grid);
}

inline void to_json(nlohmann::json& j, const ConceptSchema& s) {
  j = {{"name", s.name},       {"concepts", s.concepts},
       {"height", s.height},   {"width", s.width},
       {"channels", s.channels}, {"num_task_classes", s.num_task_classes}};
}

inline void from_json(const nlohmann::json& j, ConceptSchema& s) {
  j.at("name").get_to(s.name);
  j.at("concepts").get_to(s.concepts);
  j.at("height").get_to(s.height);
  j.at("width").get_to(s.width);
  j.at("channels").get_to(s.channels);
  j.at("num_task_classes").get_to(s.num_task_classes);
}

}  // namespace shiftlens::datagen
