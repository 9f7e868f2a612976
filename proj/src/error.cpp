#include "hef/error.hpp"

namespace hef {

const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::config: return "config";
        case ErrorKind::data: return "data";
        case ErrorKind::numeric: return "numeric";
        case ErrorKind::transport: return "transport";
        case ErrorKind::protocol: return "protocol";
    }
    return "unknown";
}

}  // namespace hef
