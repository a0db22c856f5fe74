"""Inference over one learned network.

Variable elimination runs as exact two-pass message passing on the tree: an
upward sweep folds each subtree into a per-class message for its parent, a
downward sweep distributes the root's restricted prior back out, and the
product at any node is its unnormalized marginal restricted to the evidence
regions.  Buckets are treated as atoms; a region that covers part of a
bucket's code span takes the proportional share of its mass.

Progressive sampling walks the attributes root-first.  The root's restricted
probability is exact; every later restricted attribute contributes the Monte
Carlo factor mean_s P(region | parent sample s), after which each sample's
own value is redrawn inside the region so deeper attributes stay conditioned
on consistent paths.  All randomness flows through one explicitly seeded
generator, so identical inputs give identical estimates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bayesnet import AttrClasses, ChowLiuNetwork
from .errors import DegenerateNetworkError
from .regions import CodeRegion


@dataclass
class Distribution:
    """Unnormalized per-class masses for one attribute: P(class AND evidence)."""

    attr: str
    classes: AttrClasses
    masses: np.ndarray

    @property
    def mass(self) -> float:
        return float(self.masses.sum())

    def support(self):
        """(kind, payload, mass) for every class with positive mass."""
        for idx, (kind, payload) in enumerate(self.classes.class_values()):
            m = float(self.masses[idx])
            if m > 0.0:
                yield kind, payload, m


@dataclass
class SubNetwork:
    """A pruned view: kept nodes, their induced tree, and the local root."""

    net: ChowLiuNetwork
    nodes: frozenset
    root: str
    parents: dict[str, str | None]

    @property
    def order(self) -> list[str]:
        return [n for n in self.net.order if n in self.nodes]

    def children(self, node: str) -> list[str]:
        return sorted(c for c, p in self.parents.items() if p == node)


def _check_usable(net: ChowLiuNetwork):
    if net.degenerate:
        raise DegenerateNetworkError(
            f"network for bubble {net.bubble_id!r} was learned from an empty bubble")


def prune_irrelevant(net: ChowLiuNetwork, targets: set[str],
                     evidence: set[str] | None = None) -> SubNetwork:
    """Keep the root plus every node on a path from the root to a marked node.

    Subtrees hanging below that skeleton carry no restriction, marginalize to
    one, and are dropped; inference over the pruned view equals inference
    over the full network.
    """
    _check_usable(net)
    marked = set(targets) | set(evidence or ())
    for attr in marked:
        if not net.has_node(attr):
            raise KeyError(f"unknown attribute {attr!r} in network {net.bubble_id!r}")

    kept = {net.root}
    for attr in marked:
        node: str | None = attr
        while node is not None and node not in kept:
            kept.add(node)
            node = net.parent(node)

    parents = {n: (net.parent(n) if net.parent(n) in kept else None) for n in kept}
    return SubNetwork(net, frozenset(kept), net.root, parents)


def _weights(net: ChowLiuNetwork, evidence: dict[str, CodeRegion]) -> dict[str, np.ndarray]:
    out = {}
    for attr, region in evidence.items():
        if not net.has_node(attr):
            raise KeyError(f"unknown attribute {attr!r} in network {net.bubble_id!r}")
        out[attr] = net.classes(attr).weight_vector(region)
    return out


def _upward(view: SubNetwork, weights: dict[str, np.ndarray]):
    """Leaf-to-root sweep: per-node restricted subtree sums and parent messages."""
    net = view.net
    beta: dict[str, np.ndarray] = {}
    messages: dict[str, np.ndarray] = {}
    for node in reversed(view.order):
        vec = weights.get(node)
        b = np.ones(net.classes(node).n_classes) if vec is None else vec.astype(float).copy()
        for child in view.children(node):
            b = b * messages[child]
        beta[node] = b
        parent = view.parents[node]
        if parent is not None:
            messages[node] = net.cpts[node].probs @ b
    return beta, messages


def variable_elimination(net: ChowLiuNetwork, target: str,
                         evidence: dict[str, CodeRegion]) -> Distribution:
    """Exact restricted marginal of ``target``: masses[c] = P(target=c AND evidence)."""
    _check_usable(net)
    view = prune_irrelevant(net, {target}, set(evidence))
    weights = _weights(net, {a: r for a, r in evidence.items() if a in view.nodes})
    beta, messages = _upward(view, weights)

    # downward pass: alpha[node][c] = P(node=c AND evidence outside node's subtree)
    alpha: dict[str, np.ndarray] = {view.root: net.marginal(view.root).copy()}
    for node in view.order:
        a = alpha[node]
        w = weights.get(node)
        kids = view.children(node)
        for child in kids:
            rest = a * (w if w is not None else 1.0)
            for sibling in kids:
                if sibling != child:
                    rest = rest * messages[sibling]
            alpha[child] = rest @ net.cpts[child].probs

    masses = alpha[target] * beta[target]
    return Distribution(target, net.classes(target), masses)


def selectivity(net: ChowLiuNetwork, evidence: dict[str, CodeRegion]) -> float:
    """P(evidence) under the network; exact, via variable elimination."""
    _check_usable(net)
    anchor = next(iter(sorted(evidence))) if evidence else net.root
    return variable_elimination(net, anchor, evidence).mass


def _sample_rows(rng: np.random.Generator, row_probs: np.ndarray) -> np.ndarray:
    """One categorical draw per row of an (S, C) matrix of unnormalized weights."""
    totals = row_probs.sum(axis=1, keepdims=True)
    cdf = np.cumsum(row_probs, axis=1)
    u = rng.random(len(row_probs)) * totals[:, 0]
    return (cdf < u[:, None]).sum(axis=1)


def _ps_walk(net: ChowLiuNetwork, evidence: dict[str, CodeRegion],
             n_samples: int, rng: np.random.Generator,
             collect: str | None = None):
    """Shared progressive-sampling walk.

    Returns (factors-product, per-class vector for ``collect`` or None).
    Samples that land on a zero-mass conditional are counted as zero in the
    step factor and then replaced by bootstrap copies of surviving samples so
    the walk can continue at full width.
    """
    _check_usable(net)
    marked = set(evidence) | ({collect} if collect else set())
    view = prune_irrelevant(net, marked or {net.root})
    weights = _weights(net, {a: r for a, r in evidence.items() if a in view.nodes})

    total = 1.0
    collected: np.ndarray | None = None
    samples: dict[str, np.ndarray] = {}

    for node in view.order:
        n_classes = net.classes(node).n_classes
        w = weights.get(node)
        parent = view.parents[node]
        if parent is None:
            base = net.marginal(view.root)
            restricted = base * w if w is not None else base.copy()
            p0 = float(restricted.sum())
            if collect is not None and node == collect:
                collected = restricted.copy()
            if w is not None:
                total *= p0
            if p0 <= 0.0:
                return 0.0, np.zeros(n_classes)
            cdf = np.cumsum(restricted / p0)
            samples[node] = np.searchsorted(cdf, rng.random(n_samples), side="right")
            samples[node] = np.minimum(samples[node], n_classes - 1)
            continue

        cond = net.cpts[node].probs[samples[parent]]
        if w is not None:
            cond = cond * w
        row_mass = cond.sum(axis=1)
        if collect is not None and node == collect:
            collected = cond.mean(axis=0)
        if w is not None:
            factor = float(row_mass.mean())
            total *= factor
            if factor <= 0.0:
                return 0.0, np.zeros(n_classes)
        dead = row_mass <= 0.0
        if dead.any():
            live = np.nonzero(~dead)[0]
            if len(live) == 0:
                return 0.0, np.zeros(n_classes)
            donors = live[rng.integers(0, len(live), size=int(dead.sum()))]
            cond[dead] = cond[donors]
        samples[node] = _sample_rows(rng, cond)

    return total, collected


def progressive_sampling(net: ChowLiuNetwork, evidence: dict[str, CodeRegion],
                         n_samples: int, seed: int | np.random.Generator = 0) -> float:
    """Monte Carlo estimate of P(evidence); exact when only the root is restricted."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    total, _ = _ps_walk(net, evidence, n_samples, rng)
    return total


def per_value_distribution(net: ChowLiuNetwork, attr: str,
                           evidence: dict[str, CodeRegion],
                           method: str = "ve", n_samples: int = 1000,
                           seed: int | np.random.Generator = 0) -> Distribution:
    """Unnormalized distribution over ``attr``: entry = P(attr=class AND evidence).

    The total mass equals the query selectivity; with no evidence this is the
    plain marginal of ``attr``.
    """
    _check_usable(net)
    if not net.has_node(attr):
        raise KeyError(f"unknown attribute {attr!r} in network {net.bubble_id!r}")
    if method == "ve":
        return variable_elimination(net, attr, evidence)
    if method == "ps":
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        total, vector = _ps_walk(net, evidence, n_samples, rng, collect=attr)
        if vector is None:
            vector = np.zeros(net.classes(attr).n_classes)
        vec_mass = float(vector.sum())
        # the walk's product already contains the collect step's own factor
        # when attr is restricted; rescale so the vector sums to the estimate
        if attr in evidence:
            scale = total / vec_mass if vec_mass > 0 else 0.0
        else:
            scale = total
        return Distribution(attr, net.classes(attr), vector * scale)
    raise ValueError(f"unknown inference method {method!r}")
