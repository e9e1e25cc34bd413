"""Prefix-order expression building as a deterministic MDP.

A state is the token sequence so far plus its count of open operand slots.
Appending token t turns pending into pending - 1 + arity(t); the walk ends
exactly when pending reaches zero. An action is legal iff the sequence can
still close every slot within the length budget:

    (len + 1) + (pending - 1 + arity(t)) <= max_len
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyMaskError, IllegalActionError, TerminalStateError
from .expr import Expression, Vocabulary


@dataclass(frozen=True)
class SearchState:
    """Partial expression: vocabulary action indices plus open slot count."""

    tokens: tuple[int, ...]
    pending: int


def initial_state() -> SearchState:
    return SearchState((), 1)


def is_terminal(state: SearchState) -> bool:
    return state.pending == 0


def legal_actions(state: SearchState, vocab: Vocabulary, max_len: int) -> np.ndarray:
    """Boolean mask over vocabulary indices; raises on terminal states."""
    if is_terminal(state):
        raise TerminalStateError("terminal state has no legal actions")
    mask = (len(state.tokens) + state.pending + vocab.arities) <= max_len
    if not mask.any():
        # unreachable from initial_state with a sane budget; guards bad callers
        raise EmptyMaskError(
            f"no legal action at length {len(state.tokens)}, pending {state.pending}"
        )
    return mask


def apply(state: SearchState, action: int, vocab: Vocabulary, max_len: int) -> SearchState:
    """Append one token, checking legality."""
    if is_terminal(state):
        raise TerminalStateError("cannot extend a terminal state")
    arity = int(vocab.arities[action])
    if len(state.tokens) + state.pending + arity > max_len:
        raise IllegalActionError(
            f"action {action} (arity {arity}) breaks the length-{max_len} budget"
        )
    return SearchState(state.tokens + (action,), state.pending - 1 + arity)


def to_expression(state: SearchState, vocab: Vocabulary) -> Expression:
    """Materialise a terminal state's tokens; raises if slots remain open."""
    if not is_terminal(state):
        raise TerminalStateError(f"state still has {state.pending} open slot(s)")
    return vocab.to_expression(state.tokens)


def random_completion(
    state: SearchState, vocab: Vocabulary, max_len: int, rng: np.random.Generator
) -> SearchState:
    """Finish a state by uniform random legal moves. Test and demo helper."""
    while not is_terminal(state):
        mask = legal_actions(state, vocab, max_len)
        choices = np.flatnonzero(mask)
        state = apply(state, int(rng.choice(choices)), vocab, max_len)
    return state
