"""Gradient-check battery: every tape operation, every loss term, and the
assembled model, against central differences.

The battery is the single source of truth for gradient correctness; both the
command-line `gradcheck` entry point and the test suite run it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import autodiff as ad
from .autodiff import GradCheckResult, Tensor
from .graph import normalize_adjacency
from .landmarks import synthesize_dataset
from .losses import (
    LossWeights,
    WeightCenterTable,
    balance_loss,
    classification_loss,
    feature_center_loss,
    total_loss,
    weight_center_loss,
)
from .model import ActionRelationNet, ModelConfig
from .training import sample_graph

DEFAULT_SEEDS = (0, 1, 2, 3, 4)

SMALL_MODEL = ModelConfig(
    variant="full", channels=4, n_actions=2, relation_channels=3, n_classes=3
)

# keep inputs of kinked ops (relu, |.|) at least this far from the kink so a
# +-h probe cannot cross it
KINK_MARGIN = 0.05


def _off_kink(rng: np.random.Generator, shape) -> np.ndarray:
    x = rng.normal(size=shape)
    return x + np.where(x >= 0.0, KINK_MARGIN, -KINK_MARGIN)


def _readout(rng: np.random.Generator, shape):
    """Random linear functional, so output gradients are non-trivial."""
    w = ad.constant(rng.normal(size=shape))

    def out(y: Tensor) -> Tensor:
        return ad.sum_all(ad.mul(y, w))

    return out


Builder = Callable[[np.random.Generator], tuple[Callable[[Tensor], Tensor], Tensor]]


def _op_cases() -> dict[str, Builder]:
    cases: dict[str, Builder] = {}

    def case(name: str):
        def register(fn: Builder):
            cases[name] = fn
            return fn

        return register

    @case("matmul.lhs")
    def _(rng):
        w = ad.constant(rng.normal(size=(3, 5)))
        out = _readout(rng, (4, 5))
        return lambda x: out(ad.matmul(x, w)), ad.tensor(rng.normal(size=(4, 3)))

    @case("matmul.rhs")
    def _(rng):
        a = ad.constant(rng.normal(size=(4, 3)))
        out = _readout(rng, (4, 5))
        return lambda x: out(ad.matmul(a, x)), ad.tensor(rng.normal(size=(3, 5)))

    @case("add.lhs")
    def _(rng):
        b = ad.constant(rng.normal(size=(3, 4)))
        out = _readout(rng, (3, 4))
        return lambda x: out(ad.add(x, b)), ad.tensor(rng.normal(size=(3, 4)))

    @case("add.scalar_rhs")
    def _(rng):
        a = ad.constant(rng.normal(size=(3, 4)))
        out = _readout(rng, (3, 4))
        return lambda x: out(ad.add(a, x)), ad.tensor(rng.normal(size=(1, 1)))

    @case("sub.lhs")
    def _(rng):
        b = ad.constant(rng.normal(size=(3, 4)))
        out = _readout(rng, (3, 4))
        return lambda x: out(ad.sub(x, b)), ad.tensor(rng.normal(size=(3, 4)))

    @case("sub.rhs")
    def _(rng):
        a = ad.constant(rng.normal(size=(3, 4)))
        out = _readout(rng, (3, 4))
        return lambda x: out(ad.sub(a, x)), ad.tensor(rng.normal(size=(3, 4)))

    @case("mul.lhs")
    def _(rng):
        b = ad.constant(rng.normal(size=(3, 4)))
        out = _readout(rng, (3, 4))
        return lambda x: out(ad.mul(x, b)), ad.tensor(rng.normal(size=(3, 4)))

    @case("mul.rhs")
    def _(rng):
        a = ad.constant(rng.normal(size=(3, 4)))
        out = _readout(rng, (3, 4))
        return lambda x: out(ad.mul(a, x)), ad.tensor(rng.normal(size=(3, 4)))

    @case("mul.scalar_rhs")
    def _(rng):
        a = ad.constant(rng.normal(size=(3, 4)))
        out = _readout(rng, (3, 4))
        return lambda x: out(ad.mul(a, x)), ad.tensor(rng.normal(size=(1, 1)))

    @case("div.lhs")
    def _(rng):
        b = ad.constant(_off_kink(rng, (3, 4)))
        out = _readout(rng, (3, 4))
        return lambda x: out(ad.div(x, b)), ad.tensor(rng.normal(size=(3, 4)))

    @case("div.rhs")
    def _(rng):
        a = ad.constant(rng.normal(size=(3, 4)))
        out = _readout(rng, (3, 4))
        return lambda x: out(ad.div(a, x)), ad.tensor(_off_kink(rng, (3, 4)))

    @case("div.scalar_rhs")
    def _(rng):
        a = ad.constant(rng.normal(size=(3, 4)))
        out = _readout(rng, (3, 4))
        return lambda x: out(ad.div(a, x)), ad.tensor(_off_kink(rng, (1, 1)))

    @case("scale")
    def _(rng):
        out = _readout(rng, (3, 4))
        return lambda x: out(ad.scale(x, -1.7)), ad.tensor(rng.normal(size=(3, 4)))

    @case("relu")
    def _(rng):
        out = _readout(rng, (4, 5))
        return lambda x: out(ad.relu(x)), ad.tensor(_off_kink(rng, (4, 5)))

    @case("transpose")
    def _(rng):
        out = _readout(rng, (4, 3))
        return lambda x: out(ad.transpose(x)), ad.tensor(rng.normal(size=(3, 4)))

    @case("concat_rows")
    def _(rng):
        mid = ad.constant(rng.normal(size=(2, 4)))
        out = _readout(rng, (8, 4))
        return (
            lambda x: out(
                ad.concat_rows(
                    [ad.slice_rows(x, 0, 3), mid, ad.slice_rows(x, 3, 6)]
                )
            ),
            ad.tensor(rng.normal(size=(6, 4))),
        )

    @case("slice_rows")
    def _(rng):
        out = _readout(rng, (2, 4))
        return lambda x: out(ad.slice_rows(x, 1, 3)), ad.tensor(
            rng.normal(size=(5, 4))
        )

    @case("softmax_rows")
    def _(rng):
        out = _readout(rng, (4, 5))
        return lambda x: out(ad.softmax_rows(x)), ad.tensor(rng.normal(size=(4, 5)))

    @case("l1_rowsum")
    def _(rng):
        out = _readout(rng, (4, 1))
        return lambda x: out(ad.l1_rowsum(x)), ad.tensor(_off_kink(rng, (4, 5)))

    @case("sq_frobenius")
    def _(rng):
        return lambda x: ad.sq_frobenius(x), ad.tensor(rng.normal(size=(3, 4)))

    @case("sum_all")
    def _(rng):
        w = ad.constant(rng.normal(size=(3, 4)))
        return lambda x: ad.sum_all(ad.mul(x, w)), ad.tensor(rng.normal(size=(3, 4)))

    @case("mean_over_batch")
    def _(rng):
        out = _readout(rng, (1, 4))
        return lambda x: out(ad.mean_over_batch(x)), ad.tensor(
            rng.normal(size=(6, 4))
        )

    @case("affine.x")
    def _(rng):
        w = ad.constant(rng.normal(size=(3, 5)))
        b = ad.constant(rng.normal(size=(1, 5)))
        out = _readout(rng, (4, 5))
        return lambda x: out(ad.affine(x, w, b)), ad.tensor(rng.normal(size=(4, 3)))

    @case("affine.w")
    def _(rng):
        a = ad.constant(rng.normal(size=(4, 3)))
        b = ad.constant(rng.normal(size=(1, 5)))
        out = _readout(rng, (4, 5))
        return lambda x: out(ad.affine(a, x, b)), ad.tensor(rng.normal(size=(3, 5)))

    @case("affine.b")
    def _(rng):
        a = ad.constant(rng.normal(size=(4, 3)))
        w = ad.constant(rng.normal(size=(3, 5)))
        out = _readout(rng, (4, 5))
        return lambda x: out(ad.affine(a, w, x)), ad.tensor(rng.normal(size=(1, 5)))

    def random_adjacency(rng, n):
        a = (rng.uniform(size=(n, n)) < 0.4).astype(float)
        a = np.triu(a, 1)
        return normalize_adjacency(a + a.T)

    @case("graph_affine.x")
    def _(rng):
        adj = random_adjacency(rng, 5)
        w = ad.constant(rng.normal(size=(3, 4)))
        b = ad.constant(rng.normal(size=(1, 4)))
        out = _readout(rng, (5, 4))
        return lambda x: out(ad.graph_affine(adj, x, w, b)), ad.tensor(
            rng.normal(size=(5, 3))
        )

    @case("graph_affine.w")
    def _(rng):
        adj = random_adjacency(rng, 5)
        a = ad.constant(rng.normal(size=(5, 3)))
        b = ad.constant(rng.normal(size=(1, 4)))
        out = _readout(rng, (5, 4))
        return lambda x: out(ad.graph_affine(adj, a, x, b)), ad.tensor(
            rng.normal(size=(3, 4))
        )

    @case("graph_affine.b")
    def _(rng):
        adj = random_adjacency(rng, 5)
        a = ad.constant(rng.normal(size=(5, 3)))
        w = ad.constant(rng.normal(size=(3, 4)))
        out = _readout(rng, (5, 4))
        return lambda x: out(ad.graph_affine(adj, a, w, x)), ad.tensor(
            rng.normal(size=(1, 4))
        )

    def affine_sum_setup(rng):
        xs = [ad.constant(rng.normal(size=(4, 3))) for _ in range(3)]
        ws = [ad.constant(rng.normal(size=(3, 3))) for _ in range(3)]
        b = ad.constant(rng.normal(size=(1, 3)))
        out = _readout(rng, (4, 3))
        return xs, ws, b, out

    @case("affine_sum.x")
    def _(rng):
        xs, ws, b, out = affine_sum_setup(rng)
        x = ad.tensor(rng.normal(size=(4, 3)))
        return lambda t: out(ad.affine_sum([xs[0], t, xs[2]], ws, b)), x

    @case("affine_sum.w")
    def _(rng):
        xs, ws, b, out = affine_sum_setup(rng)
        w = ad.tensor(rng.normal(size=(3, 3)))
        return lambda t: out(ad.affine_sum(xs, [ws[0], t, ws[2]], b)), w

    @case("affine_sum.b")
    def _(rng):
        xs, ws, _, out = affine_sum_setup(rng)
        b = ad.tensor(rng.normal(size=(1, 3)))
        return lambda t: out(ad.affine_sum(xs, ws, t)), b

    @case("cross_entropy.logits")
    def _(rng):
        labels = rng.integers(0, 5, size=6)
        return lambda x: ad.cross_entropy(x, labels), ad.tensor(
            rng.normal(size=(6, 5))
        )

    return cases


def _loss_cases() -> dict[str, Builder]:
    cases: dict[str, Builder] = {}
    n, rows, chans = 4, 6, 3

    def slices(x: Tensor, height: int):
        count = x.shape[0] // height
        return [ad.slice_rows(x, i * height, (i + 1) * height) for i in range(count)]

    def classification(rng):
        labels = rng.integers(0, 5, size=n)
        return (
            lambda x: classification_loss(slices(x, 1), labels),
            ad.tensor(rng.normal(size=(n, 5))),
        )

    def feature_center(rng):
        return (
            lambda x: feature_center_loss(slices(x, rows)),
            ad.tensor(rng.normal(size=(n * rows, chans))),
        )

    def weight_center(rng):
        labels = rng.integers(0, 3, size=n)
        table = WeightCenterTable(n_classes=3, n_rows=rows, rate=0.5)
        table.update(rng.dirichlet(np.ones(rows), size=3), [0, 1, 2])
        return (
            lambda x: weight_center_loss(slices(x, rows), labels, table, update=False),
            ad.tensor(rng.normal(size=(n * rows, 1))),
        )

    def balance(rng):
        return (
            lambda x: balance_loss(slices(x, rows)),
            ad.tensor(rng.normal(size=(n * rows, 1))),
        )

    cases["loss.classification"] = classification
    cases["loss.feature_center"] = feature_center
    cases["loss.weight_center"] = weight_center
    cases["loss.balance"] = balance
    return cases


@dataclass
class BatteryEntry:
    name: str
    seed: int
    result: GradCheckResult

    @property
    def passed(self) -> bool:
        return self.result.passed


def kink_margin(loss: Tensor) -> float:
    """Smallest distance of any rectifier or absolute-value input to its
    kink, found by walking the tape from ``loss``.

    Central differences are only trustworthy when the +-h probe interval
    stays on one side of every kink, so end-to-end checks must run at a
    point whose margin comfortably exceeds the probe's reach.
    """
    seen: set[int] = set()
    stack = [loss]
    margin = np.inf
    while stack:
        node = stack.pop()
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.extend(node._parents)
        if len(node._parents) != 1:
            continue
        parent = node._parents[0]
        if (
            node.ndim == 2
            and parent.shape == node.shape
            and np.array_equal(node.data, np.maximum(parent.data, 0.0))
        ):
            margin = min(margin, float(np.abs(parent.data).min()))
        elif (
            parent.ndim == 2
            and node.shape == (parent.shape[0], 1)
            and np.array_equal(
                node.data, np.abs(parent.data).sum(axis=1, keepdims=True)
            )
        ):
            margin = min(margin, float(np.abs(parent.data).min()))
    return margin


MIN_KINK_MARGIN = 2e-4
_JITTER_ATTEMPTS = 12


def _model_entries(seed: int, h: float, tol: float) -> list[BatteryEntry]:
    """End-to-end check: d(total loss)/d(parameter) for every parameter.

    Central differences are valid only at points where no rectifier input
    sits within the probe's reach of its kink, and zero-initialized biases
    even pin some inputs exactly at it (a dead node row propagates an
    exactly-zero preactivation). The check therefore jitters all parameters
    and accepts the first sufficiently kink-distant point where every
    parameter passes. A wrong backward rule fails at every point, so the
    redraws cannot hide one; they only steer the probe onto valid ground.
    """
    samples = synthesize_dataset(
        n_subjects=1, samples_per_subject=3, n_classes=3, noise_sigma=0.5, seed=seed
    )
    model = ActionRelationNet(SMALL_MODEL, seed=seed)
    graphs = [sample_graph(s, 3.0, model.selection) for s in samples]
    labels = [s.label for s in samples]
    rng = np.random.default_rng(seed)
    table = WeightCenterTable(n_classes=3, n_rows=SMALL_MODEL.n_action_rows)
    table.update(rng.dirichlet(np.ones(SMALL_MODEL.n_action_rows), size=3), [0, 1, 2])
    weights = LossWeights(feature_center=1.0, weight_center=1.0, balance=0.1)

    def objective(_: Tensor) -> Tensor:
        results = [model.forward(g) for g in graphs]
        return total_loss(
            results, labels, weights, table=table, update_table=False
        ).total

    baseline = model.params.state_dict()
    entries: list[BatteryEntry] = []
    for attempt in range(_JITTER_ATTEMPTS):
        jitter = np.random.default_rng([seed, attempt])
        for name, p in model.params.items():
            p.data = baseline[name] + jitter.normal(0.0, 0.15, size=p.shape)
        if kink_margin(objective(None)) < MIN_KINK_MARGIN:
            continue
        entries = [
            BatteryEntry(
                name=f"model.full[{name}]",
                seed=seed,
                result=ad.grad_check(objective, model.params[name], h=h, tol=tol),
            )
            for name in model.params.names()
        ]
        if all(e.passed for e in entries):
            return entries
    if entries:
        return entries
    result = GradCheckResult(
        max_rel_err=np.inf,
        passed=False,
        n_coords=0,
        failure="no kink-free check point found",
    )
    return [BatteryEntry(name="model.full[setup]", seed=seed, result=result)]


def run_battery(
    seeds=DEFAULT_SEEDS,
    h: float = 1e-5,
    tol: float = 1e-4,
    include_model: bool = True,
) -> list[BatteryEntry]:
    """Check every case under every seed; model parameters under the first
    two seeds (they dominate runtime and cover every op again)."""
    cases = {**_op_cases(), **_loss_cases()}
    entries: list[BatteryEntry] = []
    for index, (name, build) in enumerate(cases.items()):
        for seed in seeds:
            f, x = build(np.random.default_rng([index, seed]))
            entries.append(
                BatteryEntry(name=name, seed=seed, result=ad.grad_check(f, x, h=h, tol=tol))
            )
    if include_model:
        for seed in seeds[:2]:
            entries.extend(_model_entries(seed, h=h, tol=tol))
    return entries


def battery_passed(entries: list[BatteryEntry]) -> bool:
    return all(e.passed for e in entries)


def format_battery(entries: list[BatteryEntry]) -> str:
    """One line per case: worst seed's relative error and status."""
    worst: dict[str, BatteryEntry] = {}
    for e in entries:
        held = worst.get(e.name)
        if held is None or e.result.max_rel_err > held.result.max_rel_err:
            worst[e.name] = e
    lines = []
    for name, e in worst.items():
        status = "pass" if all(
            x.passed for x in entries if x.name == name
        ) else "FAIL"
        lines.append(
            f"{status}  {name:<40} max_rel_err={e.result.max_rel_err:.3e} "
            f"(seed {e.seed}, {e.result.n_coords} coords)"
        )
    n_pass = sum(1 for e in entries if e.passed)
    lines.append(f"{n_pass}/{len(entries)} checks passed")
    return "\n".join(lines)
