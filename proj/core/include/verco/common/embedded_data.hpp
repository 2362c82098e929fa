#pragma once

#include <string>
#include <string_view>

namespace verco {

// Contents of a file bundled from core/data, addressed by its path relative
// to that directory (e.g. "layouts/single_room.txt").
const std::string& embedded_file(std::string_view name);

}  // namespace verco
