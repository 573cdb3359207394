#include "indexprobe/error.hpp"

namespace indexprobe {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::DuplicateUnit: return "DuplicateUnit";
        case ErrorCode::Parse: return "ParseError";
        case ErrorCode::Schema: return "SchemaError";
        case ErrorCode::UnresolvableSource: return "UnresolvableSource";
        case ErrorCode::Scale: return "ScaleError";
        case ErrorCode::MissingParent: return "MissingParent";
        case ErrorCode::InsufficientData: return "InsufficientData";
        case ErrorCode::Method: return "MethodError";
        case ErrorCode::Spec: return "SpecError";
        case ErrorCode::Domain: return "DomainError";
        case ErrorCode::UnitSet: return "UnitSetError";
        case ErrorCode::DegenerateRanking: return "DegenerateRanking";
        case ErrorCode::Record: return "RecordError";
        case ErrorCode::Config: return "ConfigError";
        case ErrorCode::Io: return "IoError";
    }
    return "Error";
}

}  // namespace indexprobe
