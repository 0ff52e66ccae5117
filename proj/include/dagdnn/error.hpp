// Copyright 2026 The dagdnn Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dagdnn {

enum class ErrorCode {
    CycleDetected,
    UnreachableNode,
    DimensionMismatch,
    MultipleInputs,
    MultipleOutputs,
    MissingInputOrOutput,
    InvalidInDegree,
    InvalidGraph,
    WouldCreateCycle,
    NonIncreasingBreakpoints,
    InvalidCpwl,
    ShapeMismatch,
    LevelOutOfRange,
    LevelMismatch,
    NotNormalized,
    MalformedSequence,
    Unreachable,
    EmptyDataset,
    NonDifferentiableArc,
    DivergedLoss,
    WouldDisconnectOutput,
    NoCheckpoint,
    ConditionsUnsatisfied,
    UnknownSigma,
    ParseError,
};

inline std::string_view to_string(ErrorCode code)
{
    switch (code) {
    case ErrorCode::CycleDetected: return "CycleDetected";
    case ErrorCode::UnreachableNode: return "UnreachableNode";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::MultipleInputs: return "MultipleInputs";
    case ErrorCode::MultipleOutputs: return "MultipleOutputs";
    case ErrorCode::MissingInputOrOutput: return "MissingInputOrOutput";
    case ErrorCode::InvalidInDegree: return "InvalidInDegree";
    case ErrorCode::InvalidGraph: return "InvalidGraph";
    case ErrorCode::WouldCreateCycle: return "WouldCreateCycle";
    case ErrorCode::NonIncreasingBreakpoints: return "NonIncreasingBreakpoints";
    case ErrorCode::InvalidCpwl: return "InvalidCpwl";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::LevelOutOfRange: return "LevelOutOfRange";
    case ErrorCode::LevelMismatch: return "LevelMismatch";
    case ErrorCode::NotNormalized: return "NotNormalized";
    case ErrorCode::MalformedSequence: return "MalformedSequence";
    case ErrorCode::Unreachable: return "Unreachable";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::NonDifferentiableArc: return "NonDifferentiableArc";
    case ErrorCode::DivergedLoss: return "DivergedLoss";
    case ErrorCode::WouldDisconnectOutput: return "WouldDisconnectOutput";
    case ErrorCode::NoCheckpoint: return "NoCheckpoint";
    case ErrorCode::ConditionsUnsatisfied: return "ConditionsUnsatisfied";
    case ErrorCode::UnknownSigma: return "UnknownSigma";
    case ErrorCode::ParseError: return "ParseError";
    }
    return "Unknown";
}

/// Every failure raised by the library carries one of the codes above.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message)
        , code_(code)
        , detail_(message)
    {
    }

    ErrorCode code() const noexcept { return code_; }
    const std::string& detail() const noexcept { return detail_; }

private:
    ErrorCode code_;
    std::string detail_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message)
{
    throw Error(code, message);
}

} // namespace dagdnn
