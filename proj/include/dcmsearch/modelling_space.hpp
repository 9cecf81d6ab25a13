#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dcmsearch/transform.hpp"

namespace dcmsearch {

enum class Taste { generic, specific };

std::string_view to_string(Taste g);
Taste taste_from_string(std::string_view s);

/// Raised when an action is applied that the mask would have rejected.
class ContractViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

inline constexpr int kNoInteraction = -1;

/// The feasible specification universe the agent searches.
struct ModellingSpace {
    std::size_t n_attrs = 0;
    bool asc_enabled = true;
    std::vector<Transformation> transforms{Transformation::linear, Transformation::log1p, Transformation::boxcox};
    std::vector<Taste> tastes{Taste::generic};
    std::vector<int> covariates;  // dataset covariate indices usable for interactions
    std::size_t max_steps = 0;    // 0 means the default 4 * n_attrs + 4

    std::size_t step_cap() const { return max_steps ? max_steps : 4 * n_attrs + 4; }
    std::size_t interaction_options() const { return covariates.size() + 1; }
    /// Position of an interaction within the (none, covariates...) menu; -1 if not offered.
    int interaction_slot(int interaction) const;
    void validate() const;
};

struct AscTerm {
    int interaction = kNoInteraction;
    auto operator<=>(const AscTerm&) const = default;
};

struct Term {
    Transformation transform = Transformation::linear;
    Taste taste = Taste::generic;
    int interaction = kNoInteraction;
    auto operator<=>(const Term&) const = default;
};

/// An MDP state: at most one term per attribute plus an optional ASC block.
struct ModelSpec {
    std::optional<AscTerm> asc;
    std::map<std::size_t, Term> terms;

    bool empty() const { return !asc && terms.empty(); }
    bool operator==(const ModelSpec&) const = default;
};

/// Order-insensitive identity of a spec. The text form is the full sorted
/// serialisation, so equality of keys is equality of specs.
struct SpecKey {
    std::string text;
    bool operator==(const SpecKey&) const = default;
    auto operator<=>(const SpecKey&) const = default;
};

struct SpecKeyHash {
    std::size_t operator()(const SpecKey& k) const noexcept;
};

SpecKey canonical_key(const ModelSpec& spec);

enum class ActionOp { terminate, add_asc, change_asc, add, change };

std::string_view to_string(ActionOp op);

struct ActionDescriptor {
    ActionOp op = ActionOp::terminate;
    std::size_t id = 0;
    std::size_t attr = 0;  // add/change only
    Transformation transform = Transformation::linear;
    Taste taste = Taste::generic;
    int interaction = kNoInteraction;  // add/change/change_asc

    std::string describe() const;
};

/// Stable dense enumeration: terminate, ASC actions, then attribute actions
/// ordered by (attr, op, transform, taste, interaction).
std::vector<ActionDescriptor> enumerate_actions(const ModellingSpace& space);
std::size_t action_count(const ModellingSpace& space);

std::vector<bool> valid_mask(const ModellingSpace& space, const std::vector<ActionDescriptor>& actions,
                             const ModelSpec& state);
bool is_valid(const ModelSpec& state, const ActionDescriptor& action);

struct StepResult {
    ModelSpec state;
    bool terminal = false;
};

/// Throws ContractViolation if the action is masked in `state`.
StepResult apply_action(const ModelSpec& state, const ActionDescriptor& action);

std::size_t encoding_size(const ModellingSpace& space);
std::vector<double> encode_state(const ModellingSpace& space, const ModelSpec& state);
/// Inverse of encode_state; throws std::invalid_argument on a malformed vector.
ModelSpec decode_state(const ModellingSpace& space, const std::vector<double>& code);

struct SpaceSize {
    std::uint64_t count = 0;
    bool saturated = false;
};

/// Number of distinct specs the space admits (the empty spec included).
SpaceSize space_size(const ModellingSpace& space);

/// True when every component of `spec` comes from the space's menus.
bool in_space(const ModellingSpace& space, const ModelSpec& spec);

}  // namespace dcmsearch
