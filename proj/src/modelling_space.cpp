#include "dcmsearch/modelling_space.hpp"

#include <algorithm>
#include <functional>
#include <sstream>

namespace dcmsearch {

namespace {

const char* short_name(Transformation t) {
    switch (t) {
        case Transformation::linear: return "lin";
        case Transformation::log1p: return "log";
        case Transformation::boxcox: return "bc";
    }
    return "?";
}

template <typename T>
std::size_t index_of(const std::vector<T>& menu, const T& v) {
    return static_cast<std::size_t>(std::find(menu.begin(), menu.end(), v) - menu.begin());
}

}  // namespace

std::string_view to_string(Taste g) { return g == Taste::generic ? "generic" : "specific"; }

Taste taste_from_string(std::string_view s) {
    if (s == "generic") return Taste::generic;
    if (s == "specific") return Taste::specific;
    throw std::invalid_argument("unknown taste '" + std::string(s) + "'");
}

std::string_view to_string(ActionOp op) {
    switch (op) {
        case ActionOp::terminate: return "terminate";
        case ActionOp::add_asc: return "add_asc";
        case ActionOp::change_asc: return "change_asc";
        case ActionOp::add: return "add";
        case ActionOp::change: return "change";
    }
    return "?";
}

int ModellingSpace::interaction_slot(int interaction) const {
    if (interaction == kNoInteraction) return 0;
    auto it = std::find(covariates.begin(), covariates.end(), interaction);
    return it == covariates.end() ? -1 : static_cast<int>(it - covariates.begin()) + 1;
}

void ModellingSpace::validate() const {
    if (n_attrs == 0) throw std::invalid_argument("modelling space needs at least one attribute");
    if (transforms.empty()) throw std::invalid_argument("modelling space needs at least one transformation");
    if (tastes.empty()) throw std::invalid_argument("modelling space needs at least one taste option");
    auto has_dups = [](auto v) {
        std::sort(v.begin(), v.end());
        return std::adjacent_find(v.begin(), v.end()) != v.end();
    };
    if (has_dups(transforms) || has_dups(tastes) || has_dups(covariates)) {
        throw std::invalid_argument("modelling space menus must not repeat entries");
    }
    for (int c : covariates) {
        if (c < 0) throw std::invalid_argument("covariate indices must be non-negative");
    }
}

std::size_t SpecKeyHash::operator()(const SpecKey& k) const noexcept { return std::hash<std::string>{}(k.text); }

SpecKey canonical_key(const ModelSpec& spec) {
    std::ostringstream os;
    bool first = true;
    auto sep = [&] {
        if (!first) os << ';';
        first = false;
    };
    if (spec.asc) {
        sep();
        os << "asc";
        if (spec.asc->interaction != kNoInteraction) os << "@c" << spec.asc->interaction;
    }
    // std::map iterates in ascending attribute order, which makes the key order-insensitive.
    for (const auto& [k, t] : spec.terms) {
        sep();
        os << 'k' << k << ':' << short_name(t.transform) << ':' << (t.taste == Taste::generic ? "gen" : "spc");
        if (t.interaction != kNoInteraction) os << "@c" << t.interaction;
    }
    if (first) os << "empty";
    return SpecKey{os.str()};
}

std::string ActionDescriptor::describe() const {
    std::ostringstream os;
    os << '(' << to_string(op);
    if (op == ActionOp::add || op == ActionOp::change) {
        os << ", " << attr << ", " << to_string(transform) << ", " << to_string(taste);
    }
    if (op == ActionOp::add || op == ActionOp::change || op == ActionOp::change_asc) {
        os << ", ";
        if (interaction == kNoInteraction) {
            os << "none";
        } else {
            os << "cov" << interaction;
        }
    }
    os << ')';
    return os.str();
}

std::size_t action_count(const ModellingSpace& space) {
    const std::size_t asc = space.asc_enabled ? 1 + space.interaction_options() : 0;
    return 1 + asc +
           space.n_attrs * 2 * space.transforms.size() * space.tastes.size() * space.interaction_options();
}

std::vector<ActionDescriptor> enumerate_actions(const ModellingSpace& space) {
    std::vector<ActionDescriptor> out;
    out.reserve(action_count(space));
    auto push = [&](ActionDescriptor a) {
        a.id = out.size();
        out.push_back(a);
    };
    std::vector<int> interactions{kNoInteraction};
    interactions.insert(interactions.end(), space.covariates.begin(), space.covariates.end());

    push({ActionOp::terminate});
    if (space.asc_enabled) {
        push({ActionOp::add_asc});
        for (int i : interactions) {
            ActionDescriptor a{ActionOp::change_asc};
            a.interaction = i;
            push(a);
        }
    }
    for (std::size_t k = 0; k < space.n_attrs; ++k) {
        for (ActionOp op : {ActionOp::add, ActionOp::change}) {
            for (Transformation t : space.transforms) {
                for (Taste g : space.tastes) {
                    for (int i : interactions) {
                        ActionDescriptor a{op};
                        a.attr = k;
                        a.transform = t;
                        a.taste = g;
                        a.interaction = i;
                        push(a);
                    }
                }
            }
        }
    }
    return out;
}

bool is_valid(const ModelSpec& state, const ActionDescriptor& a) {
    switch (a.op) {
        case ActionOp::terminate:
            return !state.empty();
        case ActionOp::add_asc:
            return !state.asc.has_value();
        case ActionOp::change_asc:
            return state.asc.has_value() && state.asc->interaction != a.interaction;
        case ActionOp::add:
            return !state.terms.count(a.attr);
        case ActionOp::change: {
            auto it = state.terms.find(a.attr);
            if (it == state.terms.end()) return false;
            return it->second != Term{a.transform, a.taste, a.interaction};
        }
    }
    return false;
}

std::vector<bool> valid_mask(const ModellingSpace&, const std::vector<ActionDescriptor>& actions,
                             const ModelSpec& state) {
    std::vector<bool> mask(actions.size());
    for (std::size_t i = 0; i < actions.size(); ++i) mask[i] = is_valid(state, actions[i]);
    return mask;
}

StepResult apply_action(const ModelSpec& state, const ActionDescriptor& a) {
    if (!is_valid(state, a)) throw ContractViolation("masked action applied: " + a.describe());
    StepResult r{state, false};
    switch (a.op) {
        case ActionOp::terminate:
            r.terminal = true;
            break;
        case ActionOp::add_asc:
            r.state.asc = AscTerm{};
            break;
        case ActionOp::change_asc:
            r.state.asc->interaction = a.interaction;
            break;
        case ActionOp::add:
        case ActionOp::change:
            r.state.terms[a.attr] = Term{a.transform, a.taste, a.interaction};
            break;
    }
    return r;
}

std::size_t encoding_size(const ModellingSpace& space) {
    const std::size_t per_attr = (space.transforms.size() + 1) + space.tastes.size() + space.interaction_options();
    return space.n_attrs * per_attr + (space.asc_enabled ? 1 + space.interaction_options() : 0);
}

std::vector<double> encode_state(const ModellingSpace& space, const ModelSpec& state) {
    std::vector<double> code(encoding_size(space), 0.0);
    const std::size_t n_t = space.transforms.size();
    const std::size_t n_g = space.tastes.size();
    const std::size_t n_i = space.interaction_options();
    std::size_t base = 0;
    for (std::size_t k = 0; k < space.n_attrs; ++k) {
        auto it = state.terms.find(k);
        if (it == state.terms.end()) {
            code[base] = 1.0;
        } else {
            const Term& t = it->second;
            const auto slot = space.interaction_slot(t.interaction);
            const auto ti = index_of(space.transforms, t.transform);
            const auto gi = index_of(space.tastes, t.taste);
            if (ti >= n_t || gi >= n_g || slot < 0) {
                throw std::invalid_argument("spec term outside the modelling space");
            }
            code[base + 1 + ti] = 1.0;
            code[base + n_t + 1 + gi] = 1.0;
            code[base + n_t + 1 + n_g + static_cast<std::size_t>(slot)] = 1.0;
        }
        base += n_t + 1 + n_g + n_i;
    }
    if (space.asc_enabled && state.asc) {
        const auto slot = space.interaction_slot(state.asc->interaction);
        if (slot < 0) throw std::invalid_argument("ASC interaction outside the modelling space");
        code[base] = 1.0;
        code[base + 1 + static_cast<std::size_t>(slot)] = 1.0;
    } else if (state.asc) {
        throw std::invalid_argument("spec has an ASC but the space disables it");
    }
    return code;
}

ModelSpec decode_state(const ModellingSpace& space, const std::vector<double>& code) {
    if (code.size() != encoding_size(space)) throw std::invalid_argument("encoding has the wrong length");
    const std::size_t n_t = space.transforms.size();
    const std::size_t n_g = space.tastes.size();
    const std::size_t n_i = space.interaction_options();
    auto hot = [&](std::size_t from, std::size_t len) -> long {
        long found = -1;
        for (std::size_t i = 0; i < len; ++i) {
            if (code[from + i] == 1.0) {
                if (found >= 0) throw std::invalid_argument("one-hot block has several bits set");
                found = static_cast<long>(i);
            } else if (code[from + i] != 0.0) {
                throw std::invalid_argument("encoding must be 0/1");
            }
        }
        return found;
    };
    auto interaction_at = [&](long slot) { return slot == 0 ? kNoInteraction : space.covariates[slot - 1]; };
    ModelSpec spec;
    std::size_t base = 0;
    for (std::size_t k = 0; k < space.n_attrs; ++k) {
        const long t = hot(base, n_t + 1);
        const long g = hot(base + n_t + 1, n_g);
        const long i = hot(base + n_t + 1 + n_g, n_i);
        if (t < 0) throw std::invalid_argument("transformation block is empty");
        if (t == 0) {
            if (g >= 0 || i >= 0) throw std::invalid_argument("absent attribute carries components");
        } else {
            if (g < 0 || i < 0) throw std::invalid_argument("present attribute lacks components");
            spec.terms[k] = Term{space.transforms[static_cast<std::size_t>(t - 1)],
                                 space.tastes[static_cast<std::size_t>(g)], interaction_at(i)};
        }
        base += n_t + 1 + n_g + n_i;
    }
    if (space.asc_enabled) {
        const long present = hot(base, 1);
        const long i = hot(base + 1, n_i);
        if (present == 0) {
            if (i < 0) throw std::invalid_argument("ASC present without interaction bit");
            spec.asc = AscTerm{interaction_at(i)};
        } else if (i >= 0) {
            throw std::invalid_argument("absent ASC carries an interaction");
        }
    }
    return spec;
}

SpaceSize space_size(const ModellingSpace& space) {
    SpaceSize out{1, false};
    auto mul = [&](std::uint64_t f) {
        if (out.saturated) return;
        if (__builtin_mul_overflow(out.count, f, &out.count)) {
            out.count = UINT64_MAX;
            out.saturated = true;
        }
    };
    const std::uint64_t per_attr = 1 + space.transforms.size() * space.tastes.size() * space.interaction_options();
    for (std::size_t k = 0; k < space.n_attrs; ++k) mul(per_attr);
    if (space.asc_enabled) mul(1 + space.interaction_options());
    return out;
}

bool in_space(const ModellingSpace& space, const ModelSpec& spec) {
    if (spec.asc && (!space.asc_enabled || space.interaction_slot(spec.asc->interaction) < 0)) return false;
    for (const auto& [k, t] : spec.terms) {
        if (k >= space.n_attrs) return false;
        if (index_of(space.transforms, t.transform) >= space.transforms.size()) return false;
        if (index_of(space.tastes, t.taste) >= space.tastes.size()) return false;
        if (space.interaction_slot(t.interaction) < 0) return false;
    }
    return true;
}

}  // namespace dcmsearch
