// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "trisense/graph.hpp"
#include "trisense/params.hpp"

namespace trisense {

// Index order matches the weighting vector (w_v, w_a, w_s).
enum class Modality : std::uint8_t { Vision = 0, Audio = 1, Speech = 2 };
inline constexpr std::array<Modality, 3> kAllModalities{Modality::Vision, Modality::Audio, Modality::Speech};

std::string_view modality_name(Modality m);  // "vision", "audio", "speech"
char modality_letter(Modality m);            // 'V', 'A', 'S'
Modality parse_modality(std::string_view text);

class ModalitySet {
public:
    constexpr ModalitySet() = default;
    constexpr explicit ModalitySet(std::uint8_t bits) : bits_(bits & 7u) {}
    static ModalitySet all() { return ModalitySet(7); }
    static ModalitySet of(std::initializer_list<Modality> ms);
    // Accepts any ordering/case of the letters A, V, S ("avs", "VS", "v").
    static ModalitySet parse(std::string_view label);
    // The seven nonempty subsets.
    static std::array<ModalitySet, 7> nonempty_subsets();

    bool contains(Modality m) const { return (bits_ >> static_cast<unsigned>(m)) & 1u; }
    ModalitySet with(Modality m) const { return ModalitySet(bits_ | (1u << static_cast<unsigned>(m))); }
    ModalitySet without(Modality m) const { return ModalitySet(bits_ & ~(1u << static_cast<unsigned>(m))); }
    bool empty() const { return bits_ == 0; }
    std::size_t count() const;
    std::uint8_t bits() const { return bits_; }
    // Canonical label in A, V, S order: "AVS", "AV", "VS", "V", ...
    std::string label() const;
    std::vector<std::string> names() const;

    bool operator==(const ModalitySet&) const = default;
    auto operator<=>(const ModalitySet&) const = default;

private:
    std::uint8_t bits_ = 0;
};

// Per-modality [B, F, T, D] token tracks. Slots outside `present` are ignored
// and may be left undefined.
struct ModalityBundle {
    std::array<Tensor, 3> streams;
    ModalitySet present;

    Tensor& stream(Modality m) { return streams[static_cast<std::size_t>(m)]; }
    const Tensor& stream(Modality m) const { return streams[static_cast<std::size_t>(m)]; }
    // Checks presence and shared B, F, D across present streams.
    void validate() const;
};

struct QueryEncoding {
    Tensor tokens;  // [B, L, D]
};

struct ModalityWeights {
    std::array<double, 3> w{};  // (w_v, w_a, w_s)
    ModalitySet present;

    double operator[](Modality m) const { return w[static_cast<std::size_t>(m)]; }
    // Nonneg, present weights sum to 1 within tol, absent exactly 0.
    bool on_masked_simplex(double tol = 1e-9) const;
};

enum class FusionMode { Adaptive, FixedWeights, Addition };
std::string_view fusion_mode_name(FusionMode mode);
FusionMode parse_fusion_mode(std::string_view text);

struct ConnectorConfig {
    std::size_t dim = 64;
    std::size_t llm_dim = 128;
    std::size_t mlp_hidden = 128;
    double temperature = 1.0;
    double ln_eps = 1e-5;
    FusionMode mode = FusionMode::Adaptive;
};

class InvariantViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

struct CrossAttention {
    Tensor output;     // LayerNorm of the attended values, [B, L, D]
    Tensor attention;  // [B, L, N]
};

struct FusionResult {
    Tensor mixed;   // weighted sum before the fusion MLP, [B, L, D]
    Tensor output;  // [B, L, D_llm]
};

struct ConnectorOutput {
    Tensor fused;    // [B, L, D_llm]
    Tensor weights;  // [B, 3]
    std::vector<ModalityWeights> weight_values;
    std::array<Tensor, 3> attended;
    Tensor mixed;
};

// Parameters live in the store under "connector.*".
void init_connector_params(ParameterStore& store, const ConnectorConfig& config, std::mt19937_64& rng);

// Query tokens attend over the flattened [B, N, D] modality sequence
// (positional encoding already added). Single head.
CrossAttention cross_attend(Graph& g, const Tensor& modality, const QueryEncoding& query, Modality m,
                            const ParameterStore& store, const ConnectorConfig& config);

// Mean over the sequence axis: [B, L, D] -> [B, D].
Tensor pool_modality(Graph& g, const Tensor& attended);

// softmax(F([c_v | c_a | c_s]) / tau) with absent modalities masked out and
// zero vectors in their concat slots. FixedWeights and Addition modes return
// constants (1/|present| and 1 on present modalities).
Tensor compute_weights(Graph& g, const std::array<Tensor, 3>& pooled, ModalitySet present,
                       const ParameterStore& store, const ConnectorConfig& config);
std::vector<ModalityWeights> weights_from_tensor(const Tensor& weights, ModalitySet present);

FusionResult fuse(Graph& g, const Tensor& weights, const std::array<Tensor, 3>& attended, ModalitySet present,
                  const ParameterStore& store, const ConnectorConfig& config);

ConnectorOutput connector_forward(Graph& g, const ModalityBundle& bundle, const QueryEncoding& query,
                                  const ParameterStore& store, const ConnectorConfig& config);

}  // namespace trisense
