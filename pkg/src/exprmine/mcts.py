"""PUCT-guided Monte Carlo tree search over expression-building states.

Each simulation walks the tree by PUCT score, expands the first unexpanded
node, completes the expression with a prior-guided rollout, and backs the
rollout value 1 / (1 + loss) up the walked path. Visit counts at the root
become the move policy.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import TerminalStateError, UnknownVariantError
from .expr import Expression, Vocabulary
from .mdp import SearchState, apply, initial_state, is_terminal, legal_actions

PUCT_VARIANTS = ("alphazero", "appendix", "main")

ARGMAX_TEMPERATURE = 1e-6


def puct_score(q, n_parent, n_action, prior, c, variant: str = "alphazero"):
    """Exploration-adjusted action score; array inputs broadcast."""
    q = np.asarray(q, dtype=np.float64)
    n_parent = np.asarray(n_parent, dtype=np.float64)
    n_action = np.asarray(n_action, dtype=np.float64)
    prior = np.asarray(prior, dtype=np.float64)
    if variant == "alphazero":
        bonus = c * prior * np.sqrt(n_parent) / (1.0 + n_action)
    elif variant == "appendix":
        bonus = c * prior * np.sqrt(n_parent / (1.0 + n_action))
    elif variant == "main":
        bonus = c * prior * np.sqrt(np.log1p(n_parent) / (1.0 + n_action))
    else:
        raise UnknownVariantError(f"unknown PUCT variant {variant!r}")
    score = q + bonus
    if score.ndim == 0:
        return float(score)
    return score


@dataclass
class TreeNode:
    """Search-tree node; per-action statistics live in parallel arrays.

    Q is derived as W / N on read so repeated backups cannot drift away
    from the running mean of backed-up values.
    """

    state: SearchState
    actions: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    prior: np.ndarray = field(default_factory=lambda: np.empty(0))
    visits: np.ndarray = field(default_factory=lambda: np.empty(0))
    value_sum: np.ndarray = field(default_factory=lambda: np.empty(0))
    children: dict = field(default_factory=dict)
    slot: dict = field(default_factory=dict)
    expanded: bool = False

    @property
    def q_values(self) -> np.ndarray:
        return self.value_sum / np.maximum(self.visits, 1.0)

    @property
    def visit_total(self) -> float:
        return float(self.visits.sum())


def expand_node(
    node: TreeNode, prior_fn, vocab: Vocabulary, max_len: int
) -> None:
    """Attach legal actions and their prior to a leaf. One-shot per node."""
    if node.expanded:
        raise ValueError("node is already expanded")
    mask = legal_actions(node.state, vocab, max_len)
    actions = np.flatnonzero(mask).astype(np.int64)
    p = np.asarray(prior_fn(node.state, mask), dtype=np.float64)[actions]
    node.actions = actions
    node.prior = p / p.sum()
    node.visits = np.zeros(len(actions), dtype=np.float64)
    node.value_sum = np.zeros(len(actions), dtype=np.float64)
    node.children = {}
    node.slot = {int(a): k for k, a in enumerate(actions)}
    node.expanded = True


def select_path(
    root: TreeNode, vocab: Vocabulary, max_len: int, c: float, variant: str
) -> tuple[list, TreeNode]:
    """Descend by maximal PUCT until an unexpanded or terminal node.

    Returns the list of (node, action) edges walked and the leaf reached.
    Ties break toward the lowest vocabulary index (actions are ascending).
    """
    path: list[tuple[TreeNode, int]] = []
    node = root
    while node.expanded and not is_terminal(node.state):
        scores = puct_score(
            node.q_values, node.visit_total, node.visits, node.prior, c, variant
        )
        k = int(np.argmax(scores))
        action = int(node.actions[k])
        path.append((node, action))
        child = node.children.get(action)
        if child is None:
            child = TreeNode(state=apply(node.state, action, vocab, max_len))
            node.children[action] = child
        node = child
    return path, node


def rollout_value(
    state: SearchState, prior_fn, eval_fn, vocab: Vocabulary, max_len: int,
    rng: np.random.Generator,
) -> float:
    """Complete the state by sampling the prior; return 1 / (1 + loss)."""
    while not is_terminal(state):
        mask = legal_actions(state, vocab, max_len)
        p = prior_fn(state, mask)
        state = apply(state, _sample_index(rng, p), vocab, max_len)
    loss = eval_fn(state.tokens)
    return 1.0 / (1.0 + loss)


def backup_path(path: list, value: float) -> None:
    """Add one visit and the rollout value along every walked edge."""
    for node, action in path:
        k = node.slot[action]
        node.visits[k] += 1.0
        node.value_sum[k] += value


def _sample_index(rng: np.random.Generator, probs: np.ndarray) -> int:
    """Draw an index proportional to probs via one uniform variate."""
    cum = np.cumsum(probs)
    u = rng.random() * cum[-1]
    idx = int(np.searchsorted(cum, u, side="right"))
    idx = min(idx, len(probs) - 1)
    while probs[idx] == 0.0 and idx > 0:
        idx -= 1
    return idx


def visit_policy(root: TreeNode, vocab_size: int, temperature: float) -> np.ndarray:
    """Root visit counts tempered into a move distribution over the vocabulary."""
    out = np.zeros(vocab_size, dtype=np.float64)
    counts = root.visits
    if temperature < ARGMAX_TEMPERATURE:
        out[root.actions[int(np.argmax(counts))]] = 1.0
        return out
    scaled = (counts / counts.max()) ** (1.0 / temperature)
    out[root.actions] = scaled / scaled.sum()
    return out


def search(
    root_state: SearchState,
    sims: int,
    prior_fn,
    eval_fn,
    vocab: Vocabulary,
    max_len: int,
    *,
    c: float = 1.5,
    temperature: float = 1.0,
    variant: str = "alphazero",
    rng: np.random.Generator | None = None,
    return_root: bool = False,
):
    """Run sims select/expand/rollout/backup iterations from root_state.

    Returns the tempered visit distribution over the vocabulary, or a
    (distribution, root) pair when return_root is set.
    """
    if is_terminal(root_state):
        raise TerminalStateError("cannot search from a terminal state")
    if variant not in PUCT_VARIANTS:
        raise UnknownVariantError(f"unknown PUCT variant {variant!r}")
    if rng is None:
        rng = np.random.default_rng()
    root = TreeNode(state=root_state)
    expand_node(root, prior_fn, vocab, max_len)
    for _ in range(sims):
        path, leaf = select_path(root, vocab, max_len, c, variant)
        if is_terminal(leaf.state):
            value = 1.0 / (1.0 + eval_fn(leaf.state.tokens))
        else:
            expand_node(leaf, prior_fn, vocab, max_len)
            value = rollout_value(leaf.state, prior_fn, eval_fn, vocab, max_len, rng)
        backup_path(path, value)
    pi = visit_policy(root, vocab.size, temperature)
    if return_root:
        return pi, root
    return pi


@dataclass(frozen=True)
class StepRecord:
    """One move of a finished trajectory."""

    state: SearchState
    action: int
    policy: np.ndarray


@dataclass(frozen=True)
class Trajectory:
    """A completed expression with its search provenance."""

    actions: tuple[int, ...]
    expression: Expression
    loss: float
    reward: float
    steps: tuple[StepRecord, ...]


def generate_trajectory(
    prior_fn,
    eval_fn,
    vocab: Vocabulary,
    max_len: int,
    *,
    sims_per_move: int = 200,
    c: float = 1.5,
    temperature: float = 1.0,
    variant: str = "alphazero",
    seed=0,
    epsilon: float = 1e-6,
) -> Trajectory:
    """Build one expression, searching before every move.

    Moves are argmax over visit counts when temperature is below 1e-6 and
    are sampled from the tempered counts otherwise. Fully deterministic for
    a given seed.
    """
    rng = np.random.default_rng(seed)
    state = initial_state()
    steps = []
    while not is_terminal(state):
        pi = search(
            state, sims_per_move, prior_fn, eval_fn, vocab, max_len,
            c=c, temperature=temperature, variant=variant, rng=rng,
        )
        if temperature < ARGMAX_TEMPERATURE:
            action = int(np.argmax(pi))
        else:
            action = _sample_index(rng, pi)
        steps.append(StepRecord(state, action, pi))
        state = apply(state, action, vocab, max_len)
    loss = eval_fn(state.tokens)
    return Trajectory(
        actions=state.tokens,
        expression=vocab.to_expression(state.tokens),
        loss=loss,
        reward=1.0 / (loss + epsilon),
        steps=tuple(steps),
    )
