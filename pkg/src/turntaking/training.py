"""Model variants and maximum-likelihood fitting by block coordinate descent.

Four variants share one evaluation interface:

* ``pro``: trait-to-score networks f, g plus a learnable proclivity network.
* ``exp``: trait-to-score networks f, g with the fixed exp(-gap/2) proclivity.
* ``nm``: no memory; every member scores 1 with a zero proclivity.
* ``hm``: high memory; inherent 0.01, memory 1, fixed exp(-gap/2) proclivity.

Fitting alternates plain gradient-descent epochs on the score networks
(f, g) with epochs on the proclivity network, which sidesteps the unstable
gradients of their product. Every epoch uses full-batch gradients of the
mean per-turn negative log-likelihood over all training conversations, and
the returned parameters are the ones with the best validation loss.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .model import (
    EPS_FLOOR,
    Conversation,
    Roster,
    ScoreParams,
    gap_matrix,
)
from .neural import DenseNet, GradientSet, apply_update, backward, clip_gradients, init_net
from .proclivity import (
    DEFAULT_DELTA_SCALE,
    ExpDecayProclivity,
    LearnedProclivity,
    ZeroProclivity,
)

VARIANTS = ("pro", "exp", "nm", "hm")
LEARNABLE_VARIANTS = ("pro", "exp")

NM_INHERENT, NM_MEMORY = 1.0, 0.0
HM_INHERENT, HM_MEMORY = 1e-2, 1.0

DEFAULT_HIDDEN = (16, 16)

BLOCK_SCORES = "scores"
BLOCK_PROCLIVITY = "proclivity"


class FitDivergenceError(RuntimeError):
    """Training produced a non-finite loss or gradient."""


@dataclass(frozen=True)
class ModelBundle:
    """A score predictor pair plus a proclivity, under one of the variants."""

    variant: str
    proclivity: object
    f_net: DenseNet | None = None
    g_net: DenseNet | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.variant in LEARNABLE_VARIANTS and (self.f_net is None or self.g_net is None):
            raise ValueError(f"variant {self.variant!r} needs f and g networks")

    @classmethod
    def make(
        cls,
        variant: str,
        seed=0,
        hidden=DEFAULT_HIDDEN,
        delta_scale: float = DEFAULT_DELTA_SCALE,
        activation: str = "tanh",
    ) -> "ModelBundle":
        """Construct a variant; networks are seeded deterministically.

        ``seed`` may be an int or a numpy SeedSequence.
        """
        if variant == "nm":
            return cls(variant="nm", proclivity=ZeroProclivity())
        if variant == "hm":
            return cls(variant="hm", proclivity=ExpDecayProclivity())
        if not isinstance(seed, np.random.SeedSequence):
            seed = np.random.SeedSequence(seed)
        f_seed, g_seed, nu_seed = seed.spawn(3)
        f_net = init_net((1, *hidden, 1), f_seed, activation)
        g_net = init_net((1, *hidden, 1), g_seed, activation)
        if variant == "pro":
            prox = LearnedProclivity.fresh(
                nu_seed, hidden=hidden, delta_scale=delta_scale, activation=activation
            )
        elif variant == "exp":
            prox = ExpDecayProclivity()
        else:
            raise ValueError(f"unknown variant {variant!r}")
        return cls(variant=variant, proclivity=prox, f_net=f_net, g_net=g_net)

    @property
    def learns_proclivity(self) -> bool:
        return isinstance(self.proclivity, LearnedProclivity)


def predict_scores(bundle: ModelBundle, roster: Roster) -> ScoreParams:
    """Per-member inherent and memory scores for one roster."""
    n = roster.size
    if bundle.variant == "nm":
        return ScoreParams(np.full(n, NM_INHERENT), np.full(n, NM_MEMORY))
    if bundle.variant == "hm":
        return ScoreParams(np.full(n, HM_INHERENT), np.full(n, HM_MEMORY))
    pi = np.asarray(bundle.f_net.forward(roster.traits))
    d = np.asarray(bundle.g_net.forward(roster.traits))
    return ScoreParams(pi, d)


@dataclass(frozen=True)
class FitConfig:
    """Knobs for the block coordinate descent fit."""

    step: float = 0.05
    max_outer: int = 200
    score_epochs: int = 5
    proclivity_epochs: int = 5
    patience: int = 20
    eps: float = EPS_FLOOR
    clip_norm: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if min(self.step, self.max_outer, self.score_epochs, self.proclivity_epochs) <= 0:
            raise ValueError("step and epoch counts must be positive")
        if self.patience < 1:
            raise ValueError("patience must be at least 1")
        if self.eps <= 0 or self.clip_norm <= 0:
            raise ValueError("eps and clip_norm must be positive")


@dataclass
class TrainingSet:
    """(roster, conversation) pairs split into train and validation."""

    train: list
    val: list = field(default_factory=list)

    def __post_init__(self):
        if not self.train:
            raise ValueError("training split must be nonempty")


@dataclass
class FitResult:
    """Fitted bundle plus (outer_iter, train_loss, val_loss) history rows."""

    bundle: ModelBundle
    history: list
    best_outer: int = 0


# ---------------------------------------------------------------------------
# Vectorized likelihood engine. Conversations sharing a (turns, members)
# shape are stacked into one tensor so an epoch over all groups is a handful
# of numpy calls.


@dataclass
class _Stack:
    traits: np.ndarray  # (B, N)
    gaps: np.ndarray  # (B, T, N), 0 marks never-spoken
    eligible: np.ndarray  # (B, T, N) bool, False for the previous speaker
    s_idx: np.ndarray  # (B, T) 0-indexed observed speakers


def _build_stacks(pairs) -> list[_Stack]:
    by_shape: dict = {}
    for roster, conv in pairs:
        if roster.size != conv.group_size:
            raise ValueError("roster size and conversation group size differ")
        by_shape.setdefault((len(conv), conv.group_size), []).append((roster, conv))
    stacks = []
    for (T, N), members in by_shape.items():
        traits = np.stack([r.traits for r, _ in members])
        gaps = np.stack([gap_matrix(c) for _, c in members])
        s_idx = np.stack([c.speakers - 1 for _, c in members])
        stacks.append(
            _Stack(traits=traits, gaps=gaps, eligible=gaps != 1, s_idx=s_idx)
        )
    return stacks


def _stack_scores(bundle: ModelBundle, stack: _Stack):
    B, N = stack.traits.shape
    if bundle.variant == "nm":
        return np.full((B, N), NM_INHERENT), np.full((B, N), NM_MEMORY)
    if bundle.variant == "hm":
        return np.full((B, N), HM_INHERENT), np.full((B, N), HM_MEMORY)
    flat = stack.traits.ravel()
    pi = np.asarray(bundle.f_net.forward(flat)).reshape(B, N)
    d = np.asarray(bundle.g_net.forward(flat)).reshape(B, N)
    return pi, d


def _batch_nll(bundle: ModelBundle, stacks, eps: float, block: str | None):
    """Total NLL, total turns, and (optionally) gradients for one block.

    Gradients come back as a dict keyed by component name ("f", "g", "nu"),
    already scaled to the mean-per-turn objective; the dict is empty when the
    active block holds no learnable parameters.
    """
    max_gap = max(int(s.gaps.max(initial=0)) for s in stacks)
    table = bundle.proclivity.table(max_gap)

    total_nll = 0.0
    total_turns = 0
    want_scores = block == BLOCK_SCORES and bundle.variant in LEARNABLE_VARIANTS
    want_proclivity = block == BLOCK_PROCLIVITY and bundle.learns_proclivity
    per_stack_dpi = []
    per_stack_dd = []
    dtable = np.zeros_like(table)

    for stack in stacks:
        B, T, N = stack.gaps.shape
        pi, d = _stack_scores(bundle, stack)
        w = table[stack.gaps]
        u = np.where(stack.eligible, pi[:, None, :] + d[:, None, :] * w, 0.0)
        floored = np.where(stack.eligible, np.maximum(u, eps), 0.0)
        totals = floored.sum(axis=2)
        observed = np.take_along_axis(floored, stack.s_idx[..., None], axis=2)[..., 0]
        total_nll += float(np.log(totals).sum() - np.log(observed).sum())
        total_turns += B * T

        if not (want_scores or want_proclivity):
            continue
        dfl = stack.eligible / totals[..., None]
        at_obs = np.take_along_axis(dfl, stack.s_idx[..., None], axis=2)
        np.put_along_axis(dfl, stack.s_idx[..., None], at_obs - (1.0 / observed)[..., None], axis=2)
        du = dfl * (u > eps)
        if want_scores:
            per_stack_dpi.append(du.sum(axis=1))
            per_stack_dd.append((du * w).sum(axis=1))
        if want_proclivity:
            spoken = stack.gaps >= 1
            dtable += np.bincount(
                stack.gaps[spoken].ravel(),
                weights=(du * d[:, None, :])[spoken].ravel(),
                minlength=table.size,
            )

    grads: dict = {}
    scale = 1.0 / total_turns
    if want_scores:
        gf = GradientSet.zeros_like(bundle.f_net)
        gg = GradientSet.zeros_like(bundle.g_net)
        for stack, dpi, dd in zip(stacks, per_stack_dpi, per_stack_dd):
            flat = stack.traits.ravel()
            gf.add(backward(bundle.f_net, flat, dpi.ravel() * scale))
            gg.add(backward(bundle.g_net, flat, dd.ravel() * scale))
        grads = {"f": gf, "g": gg}
    elif want_proclivity:
        prox = bundle.proclivity
        if table.size > 1:
            inputs = np.arange(1, table.size) / prox.delta_scale
            gnu = backward(prox.net, inputs, dtable[1:] * scale)
        else:
            gnu = GradientSet.zeros_like(prox.net)
        grads = {"nu": gnu}

    return total_nll, total_turns, grads


def _mean_nll(bundle: ModelBundle, stacks, eps: float) -> float:
    nll, turns, _ = _batch_nll(bundle, stacks, eps, block=None)
    return nll / turns


def conversation_nll_gradients(
    bundle: ModelBundle,
    roster: Roster,
    conversation: Conversation,
    block: str,
    eps: float = EPS_FLOOR,
) -> dict:
    """Exact gradients of one conversation's mean per-turn NLL.

    Only the parameters of the active block are differentiated; the other
    block's outputs enter as constants. Variants without learnable
    parameters in the block yield an empty dict.
    """
    if block not in (BLOCK_SCORES, BLOCK_PROCLIVITY):
        raise ValueError(f"unknown block {block!r}")
    stacks = _build_stacks([(roster, conversation)])
    _, _, grads = _batch_nll(bundle, stacks, eps, block)
    return grads


def _descend_scores(bundle: ModelBundle, stacks, cfg: FitConfig) -> ModelBundle:
    for _ in range(cfg.score_epochs):
        _, _, grads = _batch_nll(bundle, stacks, cfg.eps, BLOCK_SCORES)
        gf, gg = clip_gradients([grads["f"], grads["g"]], cfg.clip_norm)
        bundle = replace(
            bundle,
            f_net=apply_update(bundle.f_net, gf, cfg.step),
            g_net=apply_update(bundle.g_net, gg, cfg.step),
        )
    return bundle


def _descend_proclivity(bundle: ModelBundle, stacks, cfg: FitConfig) -> ModelBundle:
    for _ in range(cfg.proclivity_epochs):
        _, _, grads = _batch_nll(bundle, stacks, cfg.eps, BLOCK_PROCLIVITY)
        (gnu,) = clip_gradients([grads["nu"]], cfg.clip_norm)
        prox = bundle.proclivity.with_net(apply_update(bundle.proclivity.net, gnu, cfg.step))
        bundle = replace(bundle, proclivity=prox)
    return bundle


def fit(bundle: ModelBundle, training_set: TrainingSet, config: FitConfig | None = None) -> FitResult:
    """Fit f, g (and the proclivity for ``pro``) by block coordinate descent.

    Each outer iteration runs ``score_epochs`` gradient steps on (f, g),
    then ``proclivity_epochs`` steps on the proclivity network, then scores
    the fit on the validation split. Stops once validation has not improved
    for ``patience`` outer iterations and returns the best validation
    snapshot. The ``nm`` and ``hm`` variants have nothing to fit and come
    back unchanged.
    """
    cfg = config or FitConfig()
    if bundle.variant not in LEARNABLE_VARIANTS:
        return FitResult(bundle=bundle, history=[])

    train_stacks = _build_stacks(training_set.train)
    val_stacks = _build_stacks(training_set.val) if training_set.val else None

    def losses(b: ModelBundle):
        train = _mean_nll(b, train_stacks, cfg.eps)
        val = _mean_nll(b, val_stacks, cfg.eps) if val_stacks else train
        return train, val

    train_loss, val_loss = losses(bundle)
    history = [(0, train_loss, val_loss)]
    best_bundle, best_val, best_outer = bundle, val_loss, 0
    stall = 0

    for outer in range(1, cfg.max_outer + 1):
        bundle = _descend_scores(bundle, train_stacks, cfg)
        if bundle.learns_proclivity:
            bundle = _descend_proclivity(bundle, train_stacks, cfg)
        train_loss, val_loss = losses(bundle)
        if not (np.isfinite(train_loss) and np.isfinite(val_loss)):
            raise FitDivergenceError(
                f"non-finite loss at outer iteration {outer} "
                f"(train={train_loss}, val={val_loss})"
            )
        history.append((outer, train_loss, val_loss))
        if val_loss < best_val:
            best_bundle, best_val, best_outer = bundle, val_loss, outer
            stall = 0
        else:
            stall += 1
            if stall >= cfg.patience:
                break

    return FitResult(bundle=best_bundle, history=history, best_outer=best_outer)
