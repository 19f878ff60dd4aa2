#pragma once

#include <memory>
#include <vector>

#include "towerlab/rng.hpp"
#include "towerlab/tower.hpp"

namespace towerlab::testing {

// {a: w=.5 R=1, b: w=.5 R=2}, zero distortion
inline TowerPtr two_element_tower() {
    return std::make_shared<SymbolicTower>(
        SymbolicTower::zero_distortion({{"a", 0.5, 1}, {"b", 0.5, 2}}));
}

inline TowerPtr single_element_tower() {
    return std::make_shared<SymbolicTower>(SymbolicTower::zero_distortion({{"a", 1.0, 1}}));
}

// depth-1 jacobian with multiplicative noise, renormalized branch by branch
// so the table stays consistent with the weights
inline TowerPtr perturbed_tower(std::vector<TowerElement> elements, double noise,
                                std::uint64_t seed, double beta = 0.5) {
    const int s = static_cast<int>(elements.size());
    double base = 0.0;
    for (const auto& e : elements) base += e.weight;
    CounterRng rng(seed);
    std::vector<std::vector<double>> table(static_cast<std::size_t>(s),
                                           std::vector<double>(static_cast<std::size_t>(s)));
    for (int i = 0; i < s; ++i) {
        for (int j = 0; j < s; ++j)
            table[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
                base / elements[static_cast<std::size_t>(i)].weight *
                (1.0 + noise * (2.0 * rng.next_uniform() - 1.0));
        double acc = 0.0;
        for (int j = 0; j < s; ++j)
            acc += elements[static_cast<std::size_t>(j)].weight /
                   table[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        const double fix = acc / elements[static_cast<std::size_t>(i)].weight;
        for (int j = 0; j < s; ++j) table[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] *= fix;
    }
    // declare C from the exact certificate
    SymbolicTower probe(elements, 1, table, {1e9, beta});
    const double cert = probe.distortion_certificate(beta);
    return std::make_shared<SymbolicTower>(std::move(elements), 1, std::move(table),
                                           DistortionParams{cert * 1.0000001 + 1e-12, beta});
}

inline TowerPtr perturbed_two_element(double noise = 0.2, std::uint64_t seed = 7) {
    return perturbed_tower({{"a", 0.5, 1}, {"b", 0.5, 2}}, noise, seed);
}

} // namespace towerlab::testing
