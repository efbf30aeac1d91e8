"""Label-free coordination toolkit.

Library and CLI for finite Dec-POMDPs with symmetry machinery: automorphism
enumeration, pushforward policies, the other-play objective and its
symmetrizer, policy-gradient training, hash-based tie-breaking, and
cross-play evaluation under random relabelings.
"""

__version__ = "0.1.0"

from .core import (
    DecPomdp,
    History,
    ResourceCapError,
    TabularPolicy,
    enumerate_ao_histories,
    expected_return,
    expected_return_mc,
    history_distribution,
    sample_episode,
    validate_decpomdp,
)
from .envs import build_env, env_names, reference_policies
from .lfc import (
    PolicyClass,
    XpMatrix,
    avg_offdiag,
    cluster_policies,
    lfc_payoff,
    xp_matrix,
    xp_value,
)
from .otherplay import (
    AutoProfile,
    SymmetrizedPolicy,
    apply_profile,
    is_invariant,
    op_value,
    op_value_mc,
    policies_equivalent,
    symmetrize,
)
from .symmetry import (
    Isomorphism,
    NormalForm,
    agent_orbits,
    apply_iso,
    check_isomorphism,
    compose,
    enumerate_automorphisms,
    enumerate_isomorphisms,
    identity_iso,
    invert,
    normal_form,
    permute_agents,
    pushforward_policy,
    relabel,
    sample_labeling,
)
from .tiebreak import (
    HashNetwork,
    TieBreakConfig,
    hash_history,
    init_hash_network,
    op_with_tiebreak,
    tie_break_value,
    tie_break_value_mc,
)
from .training import (
    PolicyParams,
    TrainConfig,
    TrainResult,
    exact_op_grad,
    loss_and_grad,
    train_op,
)
