#pragma once

#include <algorithm>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace regmkt {

/// Feature ownership map for one transaction. The central agent always holds
/// the dummy basis in addition to its raw features; support ownership sets
/// are pairwise disjoint. Together the registered indices form the market's
/// feature universe I.
struct AgentRegistry {
    std::string central_agent = "central";
    std::vector<int> central_features;                 // I_c (raw indices, may be empty)
    std::map<std::string, std::vector<int>> support;   // agent id -> I_a

    /// Support-owned indices I_{-c}, sorted.
    std::vector<int> support_features() const {
        std::vector<int> out;
        for (const auto& [agent, feats] : support)
            out.insert(out.end(), feats.begin(), feats.end());
        std::sort(out.begin(), out.end());
        return out;
    }

    std::vector<int> all_features() const {
        std::vector<int> out = central_features;
        const std::vector<int> sup = support_features();
        out.insert(out.end(), sup.begin(), sup.end());
        std::sort(out.begin(), out.end());
        return out;
    }

    const std::string& owner_of(int feature) const {
        for (const auto& [agent, feats] : support)
            if (std::find(feats.begin(), feats.end(), feature) != feats.end()) return agent;
        if (std::find(central_features.begin(), central_features.end(), feature) !=
            central_features.end())
            return central_agent;
        throw std::invalid_argument("registry: feature " + std::to_string(feature) +
                                    " has no owner");
    }

    std::vector<std::string> support_agents() const {
        std::vector<std::string> out;
        for (const auto& [agent, feats] : support) out.push_back(agent);
        return out;  // map order: sorted by id
    }

    void validate(int n_dataset_features) const {
        std::vector<int> all = all_features();
        for (int f : all)
            if (f < 0 || f >= n_dataset_features)
                throw std::invalid_argument("registry: feature index out of range");
        if (std::adjacent_find(all.begin(), all.end()) != all.end())
            throw std::invalid_argument("registry: ownership sets must be pairwise disjoint");
    }
};

/// Registry for the simulation studies: the central agent owns x1 (raw index
/// 0) and each remaining feature belongs to its own support agent.
inline AgentRegistry simulation_registry(int n_features) {
    AgentRegistry reg;
    reg.central_agent = "central";
    if (n_features > 0) reg.central_features = {0};
    for (int k = 1; k < n_features; ++k)
        reg.support["a" + std::to_string(k)] = {k};
    return reg;
}

}  // namespace regmkt
