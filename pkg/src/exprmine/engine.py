"""Epoch loop: search a batch of expressions, retrain the prior, archive.

Each epoch runs fresh MCTS searches against a minibatch of the training
data, keeps the top fraction of trajectories by loss, and takes a few
gradient passes over their state/action pairs so later epochs start from
a sharper prior. An archive of the best expressions ever seen, scored on
the full training split, carries results across epochs and decides
convergence.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .config import EvalConfig, MctsConfig, PolicyConfig, RunConfig
from .evaluation import (
    LabeledDataset,
    expression_loss,
    expression_sort_key,
    make_loss_fn,
    select_top_k,
)
from .expr import Expression, Vocabulary, format_expression
from .mcts import Trajectory, generate_trajectory
from .policy import (
    ExternalPolicy,
    NGramPolicy,
    cached_prior,
    trajectory_examples,
    trajectory_log_prob,
)

logger = logging.getLogger(__name__)

ARCHIVE_CAP = 256


@dataclass(frozen=True)
class ArchiveEntry:
    actions: tuple[int, ...]
    expression: Expression
    loss: float
    epoch: int

    def sort_key(self) -> tuple:
        return (self.loss,) + expression_sort_key(self.expression)


class Archive:
    """Best-ever expressions, deduplicated and scored on one fixed dataset."""

    def __init__(self, vocab: Vocabulary, cap: int = ARCHIVE_CAP):
        self.vocab = vocab
        self.cap = cap
        self.entries: list[ArchiveEntry] = []
        self._seen: set[tuple[int, ...]] = set()

    def update(self, trajectories: list[Trajectory], losses: list[float], epoch: int) -> None:
        for traj, loss in zip(trajectories, losses):
            if traj.actions in self._seen:
                continue
            self._seen.add(traj.actions)
            self.entries.append(
                ArchiveEntry(traj.actions, traj.expression, float(loss), epoch)
            )
        self.entries.sort(key=ArchiveEntry.sort_key)
        for dropped in self.entries[self.cap :]:
            self._seen.discard(dropped.actions)
        del self.entries[self.cap :]

    def best(self) -> ArchiveEntry:
        if not self.entries:
            raise ValueError("archive is empty")
        return self.entries[0]

    def top(self, n: int) -> list[ArchiveEntry]:
        return self.entries[:n]

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class EpochReport:
    epoch: int
    best_loss: float
    mean_loss: float
    policy_loss: float | None
    archive_best_loss: float
    top_logprob_before: float | None
    top_logprob_after: float | None
    best_expression: str
    n_selected: int


class SearchEngine:
    """Runs search epochs over one dataset with one trainable prior."""

    def __init__(
        self,
        vocab: Vocabulary,
        data: LabeledDataset,
        mcts: MctsConfig | None = None,
        policy_cfg: PolicyConfig | None = None,
        eval_cfg: EvalConfig | None = None,
    ):
        self.vocab = vocab
        self.data = data
        self.mcts = mcts or MctsConfig()
        self.policy_cfg = policy_cfg or PolicyConfig()
        self.eval_cfg = eval_cfg or EvalConfig()
        if self.policy_cfg.external_addr:
            self.policy = ExternalPolicy(
                self.policy_cfg.external_addr,
                vocab,
                context=self.policy_cfg.context,
                timeout=self.policy_cfg.timeout,
            )
            self.trainable = False
        else:
            self.policy = NGramPolicy(vocab.size, context=self.policy_cfg.context)
            self.trainable = True
        self.archive = Archive(vocab)
        # archive losses always come from the full split, so minibatch noise
        # cannot reorder it between epochs
        self._full_loss = make_loss_fn(vocab, data)

    @classmethod
    def from_run_config(cls, vocab: Vocabulary, data: LabeledDataset, cfg: RunConfig):
        return cls(vocab, data, cfg.mcts, cfg.policy, cfg.eval)

    def _epoch_data(self, rng: np.random.Generator) -> LabeledDataset:
        n = self.data.features.shape[0]
        if self.eval_cfg.minibatch >= n:
            return self.data
        idx = rng.choice(n, size=self.eval_cfg.minibatch, replace=False)
        return self.data.subset(np.sort(idx))

    def _mean_top_logprob(self, selected: list[Trajectory]) -> float:
        values = [
            trajectory_log_prob(self.policy, t.actions, self.vocab, self.mcts.max_len)
            for t in selected
        ]
        return float(np.mean(values))

    def run_epoch(self, epoch: int) -> EpochReport:
        cfg = self.mcts
        rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, epoch)))
        epoch_data = self._epoch_data(rng)
        loss_fn = make_loss_fn(self.vocab, epoch_data)
        prior = cached_prior(
            self.policy.prior, self.policy_cfg.context, self.vocab.size
        )

        trajectories = [
            generate_trajectory(
                prior,
                loss_fn,
                self.vocab,
                cfg.max_len,
                sims_per_move=cfg.sims_per_move,
                c=cfg.c,
                temperature=cfg.temperature,
                variant=cfg.variant,
                seed=np.random.SeedSequence((cfg.seed, epoch, i)),
                epsilon=self.eval_cfg.epsilon,
            )
            for i in range(cfg.n_expr)
        ]
        selected = select_top_k(trajectories, cfg.k)

        policy_loss = None
        logprob_before = None
        logprob_after = None
        if self.trainable:
            logprob_before = self._mean_top_logprob(selected)
            batch = []
            for traj in selected:
                weight = traj.reward if self.policy_cfg.reward_weighting else 1.0
                batch.extend(
                    trajectory_examples(
                        traj.actions, self.policy_cfg.context, self.vocab.size, weight
                    )
                )
            for _ in range(self.policy_cfg.passes):
                policy_loss = self.policy.train_step(
                    batch, self.policy_cfg.lr, self.policy_cfg.l2
                )
            logprob_after = self._mean_top_logprob(selected)

        self.archive.update(
            trajectories, [self._full_loss(t.actions) for t in trajectories], epoch
        )
        best = self.archive.best()
        report = EpochReport(
            epoch=epoch,
            best_loss=float(min(t.loss for t in trajectories)),
            mean_loss=float(np.mean([t.loss for t in trajectories])),
            policy_loss=policy_loss,
            archive_best_loss=best.loss,
            top_logprob_before=logprob_before,
            top_logprob_after=logprob_after,
            best_expression=self.render(best.expression),
            n_selected=len(selected),
        )
        logger.info(
            "epoch %d: best=%.6f archive=%.6f selected=%d %s",
            epoch, report.best_loss, best.loss, report.n_selected, report.best_expression,
        )
        return report

    def run(self) -> list[EpochReport]:
        """Epochs until the archive best stalls for `patience` epochs."""
        cfg = self.mcts
        history: list[EpochReport] = []
        previous = float("inf")
        stall = 0
        for epoch in range(cfg.max_epochs):
            report = self.run_epoch(epoch)
            history.append(report)
            current = report.archive_best_loss
            if np.isfinite(previous):
                improvement = (previous - current) / max(abs(previous), 1e-300)
                stall = stall + 1 if improvement < cfg.min_improvement else 0
            previous = current
            if stall >= cfg.patience:
                break
        return history

    def render(self, expression: Expression) -> str:
        return format_expression(expression, self.vocab.feature_names or None)

    def best_expression(self) -> Expression:
        return self.archive.best().expression

    def best_loss(self) -> float:
        return self.archive.best().loss

    def holdout_loss(self, data: LabeledDataset) -> float:
        return expression_loss(self.best_expression(), data)
