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

#include "dagdnn/error.hpp"
#include "dagdnn/linalg.hpp"

#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>

namespace dagdnn {

/// A non-CPWL transformation (sigmoid, softmax, ...).
///
/// `vjp` maps (pre-activation z, upstream gradient g) to the gradient with
/// respect to z. Kinds registered without one cannot be trained through.
struct SigmaKind {
    std::function<Vec(const Vec&)> eval;
    std::function<Vec(const Vec&, const Vec&)> vjp;
};

class SigmaRegistry {
public:
    static SigmaRegistry& instance()
    {
        static SigmaRegistry registry;
        return registry;
    }

    void add(const std::string& name, SigmaKind kind)
    {
        std::lock_guard lock(mutex_);
        kinds_[name] = std::move(kind);
    }

    bool contains(const std::string& name) const
    {
        std::lock_guard lock(mutex_);
        return kinds_.count(name) != 0;
    }

    SigmaKind get(const std::string& name) const
    {
        std::lock_guard lock(mutex_);
        auto it = kinds_.find(name);
        if (it == kinds_.end())
            fail(ErrorCode::UnknownSigma, "no transformation registered as '" + name + "'");
        return it->second;
    }

private:
    SigmaRegistry()
    {
        kinds_["sigmoid"] = {
            [](const Vec& z) -> Vec { return z.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); }); },
            [](const Vec& z, const Vec& g) -> Vec {
                Vec s = z.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
                return (s.array() * (1.0 - s.array()) * g.array()).matrix();
            }};
        kinds_["tanh"] = {
            [](const Vec& z) -> Vec { return z.array().tanh().matrix(); },
            [](const Vec& z, const Vec& g) -> Vec {
                Vec t = z.array().tanh().matrix();
                return ((1.0 - t.array().square()) * g.array()).matrix();
            }};
        kinds_["softmax"] = {
            [](const Vec& z) -> Vec { return softmax(z); },
            [](const Vec& z, const Vec& g) -> Vec {
                Vec s = softmax(z);
                const double inner = s.dot(g);
                return (s.array() * (g.array() - inner)).matrix();
            }};
    }

    static Vec softmax(const Vec& z)
    {
        if (z.size() == 0)
            return z;
        Vec e = (z.array() - z.maxCoeff()).exp().matrix();
        return e / e.sum();
    }

    mutable std::mutex mutex_;
    std::map<std::string, SigmaKind> kinds_;
};

} // namespace dagdnn
