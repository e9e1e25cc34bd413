"""Token priors: an m-gram softmax model, a uniform fallback, and a TCP client.

The trainable model conditions on the last m tokens (BOS-padded on the
left). Each context slot contributes one learned row of logits per symbol,
so the model is linear in a concatenation of m one-hot blocks of width V+1
(vocabulary plus BOS) and trains by full-batch gradient descent on mean
cross-entropy with L2 on the non-bias weights.
"""

from __future__ import annotations

import json
import logging
import socket
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigInvalidError, EmptyMaskError
from .expr import Vocabulary
from .mdp import SearchState, apply, initial_state, legal_actions

logger = logging.getLogger(__name__)

WEIGHT_CLAMP = 30.0

PriorFn = Callable[[SearchState, np.ndarray], np.ndarray]


def bos_index(vocab_size: int) -> int:
    """BOS sits one past the last vocabulary index."""
    return vocab_size


def pad_context(tokens: Sequence[int], context: int, vocab_size: int) -> tuple[int, ...]:
    """Last `context` tokens, left-padded with BOS to exactly that length."""
    tail = tuple(int(t) for t in tokens[-context:]) if context > 0 else ()
    pad = context - len(tail)
    return (bos_index(vocab_size),) * pad + tail


def encode_context(tokens: Sequence[int], context: int, vocab_size: int) -> np.ndarray:
    """One-hot context encoding: m blocks of width V+1, exactly m ones."""
    width = vocab_size + 1
    out = np.zeros(context * width, dtype=np.float64)
    for slot, sym in enumerate(pad_context(tokens, context, vocab_size)):
        out[slot * width + sym] = 1.0
    return out


@dataclass(frozen=True)
class TrainingExample:
    """One next-token observation: BOS-padded context, target, weight."""

    context: tuple[int, ...]
    target: int
    weight: float = 1.0


def trajectory_examples(
    actions: Sequence[int], context: int, vocab_size: int, weight: float = 1.0
) -> list[TrainingExample]:
    """Per-step training examples for a completed action sequence."""
    out = []
    prefix: tuple[int, ...] = ()
    for a in actions:
        out.append(TrainingExample(pad_context(prefix, context, vocab_size), int(a), weight))
        prefix += (int(a),)
    return out


def _batch_arrays(batch: Sequence[TrainingExample]):
    contexts = np.array([ex.context for ex in batch], dtype=np.int64)
    targets = np.array([ex.target for ex in batch], dtype=np.int64)
    weights = np.array([ex.weight for ex in batch], dtype=np.float64)
    return contexts, targets, weights


def policy_loss_and_grad(
    theta: np.ndarray,
    bias: np.ndarray,
    contexts: np.ndarray,
    targets: np.ndarray,
    weights: np.ndarray,
    l2: float,
):
    """Weighted-mean cross-entropy plus l2*sum(theta^2), with exact gradients.

    contexts holds BOS-padded symbol indices, shape (B, m). The bias is not
    regularised. Returns (loss, theta_grad, bias_grad).
    """
    n_rows, width = theta.shape
    m = contexts.shape[1]
    row_offsets = np.arange(m, dtype=np.int64) * (n_rows // m)
    rows = contexts + row_offsets
    logits = theta[rows].sum(axis=1) + bias

    z = logits - logits.max(axis=1, keepdims=True)
    expz = np.exp(z)
    denom = expz.sum(axis=1, keepdims=True)
    probs = expz / denom
    log_probs = z - np.log(denom)

    w_sum = float(weights.sum())
    if w_sum <= 0:
        raise ValueError("batch weights must sum to a positive value")
    w_norm = weights / w_sum

    batch = np.arange(len(targets))
    ce = -float((w_norm * log_probs[batch, targets]).sum())
    loss = ce + l2 * float((theta * theta).sum())

    g_logits = probs * w_norm[:, None]
    g_logits[batch, targets] -= w_norm

    theta_grad = np.zeros_like(theta)
    np.add.at(theta_grad, rows.ravel(), np.repeat(g_logits, m, axis=0))
    theta_grad += 2.0 * l2 * theta
    bias_grad = g_logits.sum(axis=0)
    return loss, theta_grad, bias_grad


class NGramPolicy:
    """Trainable prior over next tokens, conditioned on the last m tokens."""

    def __init__(self, vocab_size: int, context: int = 4):
        if vocab_size < 1:
            raise ConfigInvalidError(f"vocab_size must be >= 1, got {vocab_size}")
        if context < 1:
            raise ConfigInvalidError(f"context must be >= 1, got {context}")
        self.vocab_size = vocab_size
        self.context = context
        width = vocab_size + 1
        self.theta = np.zeros((context * width, vocab_size), dtype=np.float64)
        self.bias = np.zeros(vocab_size, dtype=np.float64)
        self._row_offsets = np.arange(context, dtype=np.int64) * width

    def logits(self, tokens: Sequence[int]) -> np.ndarray:
        rows = np.asarray(pad_context(tokens, self.context, self.vocab_size)) + self._row_offsets
        return self.theta[rows].sum(axis=0) + self.bias

    def prior(self, state: SearchState, mask: np.ndarray) -> np.ndarray:
        """Masked softmax over legal actions; zeros elsewhere."""
        legal = np.flatnonzero(mask)
        if len(legal) == 0:
            raise EmptyMaskError("prior needs at least one legal action")
        tokens = state.tokens if isinstance(state, SearchState) else state
        z = self.logits(tokens)[legal]
        z = z - z.max()
        w = np.exp(z)
        out = np.zeros(self.vocab_size, dtype=np.float64)
        out[legal] = w / w.sum()
        return out

    def train_step(self, batch: Sequence[TrainingExample], lr: float, l2: float) -> float:
        """One full-batch gradient step; returns the pre-update loss."""
        if not batch:
            raise ValueError("empty training batch")
        contexts, targets, weights = _batch_arrays(batch)
        loss, theta_grad, bias_grad = policy_loss_and_grad(
            self.theta, self.bias, contexts, targets, weights, l2
        )
        np.clip(self.theta - lr * theta_grad, -WEIGHT_CLAMP, WEIGHT_CLAMP, out=self.theta)
        np.clip(self.bias - lr * bias_grad, -WEIGHT_CLAMP, WEIGHT_CLAMP, out=self.bias)
        return loss

    def batch_loss(self, batch: Sequence[TrainingExample], l2: float) -> float:
        contexts, targets, weights = _batch_arrays(batch)
        loss, _, _ = policy_loss_and_grad(self.theta, self.bias, contexts, targets, weights, l2)
        return loss


class UniformPolicy:
    """Uniform prior over whatever the mask allows."""

    def prior(self, state: SearchState, mask: np.ndarray) -> np.ndarray:
        legal = np.flatnonzero(mask)
        if len(legal) == 0:
            raise EmptyMaskError("prior needs at least one legal action")
        out = np.zeros(len(mask), dtype=np.float64)
        out[legal] = 1.0 / len(legal)
        return out


class ExternalPolicy:
    """Prior served over newline-delimited JSON on a TCP socket.

    One request per prior: {"id", "context", "legal"} out, {"id", "probs"}
    back, probs aligned with the legal list. Timeouts, transport errors, and
    malformed replies fall back to the uniform prior and are logged.
    """

    def __init__(
        self,
        address: str,
        vocab: Vocabulary,
        context: int = 4,
        timeout: float = 0.1,
    ):
        host, sep, port = address.rpartition(":")
        if not sep or not host:
            raise ConfigInvalidError(f"external address must be host:port, got {address!r}")
        try:
            self._addr = (host, int(port))
        except ValueError:
            raise ConfigInvalidError(f"bad port in external address {address!r}") from None
        self._vocab = vocab
        self._context = context
        self._timeout = timeout
        self._fallback = UniformPolicy()
        self._sock: socket.socket | None = None
        self._buffer = b""
        self._next_id = 0

    def _spell(self, sym: int) -> str:
        if sym == bos_index(self._vocab.size):
            return "BOS"
        return self._vocab.spelling(sym)

    def _connect(self) -> socket.socket:
        if self._sock is None:
            self._sock = socket.create_connection(self._addr, timeout=self._timeout)
            self._sock.settimeout(self._timeout)
            self._buffer = b""
        return self._sock

    def _close(self):
        if self._sock is not None:
            try:
                self._sock.close()
            except OSError:
                pass
            self._sock = None
            self._buffer = b""

    def _read_line(self, sock: socket.socket) -> bytes:
        while b"\n" not in self._buffer:
            chunk = sock.recv(4096)
            if not chunk:
                raise ConnectionError("policy server closed the connection")
            self._buffer += chunk
        line, self._buffer = self._buffer.split(b"\n", 1)
        return line

    def _query(self, tokens: Sequence[int], legal: np.ndarray) -> np.ndarray:
        request_id = self._next_id
        self._next_id += 1
        padded = pad_context(tokens, self._context, self._vocab.size)
        request = {
            "id": request_id,
            "context": [self._spell(s) for s in padded],
            "legal": [int(a) for a in legal],
        }
        sock = self._connect()
        sock.sendall(json.dumps(request).encode() + b"\n")
        reply = json.loads(self._read_line(sock))
        if reply.get("id") != request_id:
            raise ValueError(f"reply id {reply.get('id')} does not match {request_id}")
        probs = np.asarray(reply["probs"], dtype=np.float64)
        if probs.shape != (len(legal),) or not np.isfinite(probs).all():
            raise ValueError("reply probs malformed")
        return probs

    def prior(self, state: SearchState, mask: np.ndarray) -> np.ndarray:
        legal = np.flatnonzero(mask)
        if len(legal) == 0:
            raise EmptyMaskError("prior needs at least one legal action")
        tokens = state.tokens if isinstance(state, SearchState) else state
        try:
            probs = self._query(tokens, legal)
        except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
            logger.warning("external policy fallback to uniform: %s", exc)
            self._close()
            return self._fallback.prior(state, mask)
        # a served zero would starve a legal action, so floor before renormalising
        probs = np.maximum(probs, 1e-12)
        out = np.zeros(len(mask), dtype=np.float64)
        out[legal] = probs / probs.sum()
        return out

    def close(self):
        self._close()


def cached_prior(prior_fn: PriorFn, context: int, vocab_size: int) -> PriorFn:
    """Memoise a frozen policy for one epoch of searches.

    Valid because every prior here depends only on the BOS-padded m-token
    window and the legal set, and with a fixed vocabulary and budget the
    legal set is a function of len(tokens) + pending.
    """
    cache: dict[tuple, np.ndarray] = {}

    def cached(state: SearchState, mask: np.ndarray) -> np.ndarray:
        key = (
            pad_context(state.tokens, context, vocab_size),
            len(state.tokens) + state.pending,
        )
        hit = cache.get(key)
        if hit is None:
            hit = prior_fn(state, mask)
            cache[key] = hit
        return hit

    return cached


def trajectory_log_prob(
    policy, actions: Sequence[int], vocab: Vocabulary, max_len: int
) -> float:
    """Log-probability of an action sequence under a policy's masked prior."""
    state = initial_state()
    total = 0.0
    for a in actions:
        mask = legal_actions(state, vocab, max_len)
        p = policy.prior(state, mask)
        total += float(np.log(p[a]))
        state = apply(state, int(a), vocab, max_len)
    return total
