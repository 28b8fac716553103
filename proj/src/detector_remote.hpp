#pragma once

#include <memory>

#include "realsteer/detector.hpp"

namespace realsteer::detail {

std::unique_ptr<DetectorHandle> open_subprocess_detector(const DetectorEndpoint& endpoint);
std::unique_ptr<DetectorHandle> open_http_detector(const DetectorEndpoint& endpoint);

}  // namespace realsteer::detail
