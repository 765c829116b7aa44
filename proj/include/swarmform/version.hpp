#pragma once

#define SWARMFORM_VERSION_MAJOR 0
#define SWARMFORM_VERSION_MINOR 1
#define SWARMFORM_VERSION_PATCH 0
#define SWARMFORM_VERSION "0.1.0"

namespace swarmform {

inline const char* version() { return SWARMFORM_VERSION; }

}  // namespace swarmform
