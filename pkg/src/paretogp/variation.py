"""Population initialization and the two variation operators.

Offspring that would exceed the node-count cap are discarded and replaced
by a clone of the recipient parent. Every offspring records the size of the
recipient parent that produced it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import expr
from .expr import FUNCTIONS, Node, const, var
from .fitness import MAX_TREE_SIZE, Evaluator, ObjectiveVector
from .moea_core import tournament_compare

MIN_INIT_DEPTH = 2
MAX_INIT_DEPTH = 6


@dataclass
class Individual:
    tree: Node
    error: float
    a: float
    b: float
    parent_size: int | None = None
    rank: int = 0
    crowding: float = 0.0

    @property
    def size(self) -> int:
        return self.tree.size

    @property
    def size_norm(self) -> float:
        return self.tree.size / MAX_TREE_SIZE

    @property
    def objectives(self) -> ObjectiveVector:
        return ObjectiveVector(self.error, self.size_norm)


@dataclass(frozen=True)
class Primitives:
    """Terminal-set context: feature count and the ERC sampling scale."""

    num_features: int
    erc_scale: float

    @classmethod
    def from_dataset(cls, ds) -> "Primitives":
        return cls(
            num_features=ds.X_train.shape[1],
            erc_scale=float(np.abs(ds.X_train).max()),
        )


def random_terminal(prims: Primitives, rng) -> Node:
    """Uniform draw over the terminal set {x0..x(d-1), fresh ERC}."""
    pick = int(rng.integers(prims.num_features + 1))
    if pick < prims.num_features:
        return var(pick)
    return const(rng.uniform(-5.0, 5.0) * prims.erc_scale)


def grow_tree(prims: Primitives, rng, max_depth: int) -> Node:
    """Grow method: below the depth limit each node is a function with
    probability 1/2, otherwise a terminal."""
    if max_depth == 0 or rng.random() < 0.5:
        return random_terminal(prims, rng)
    kind = FUNCTIONS[int(rng.integers(len(FUNCTIONS)))]
    children = tuple(grow_tree(prims, rng, max_depth - 1) for _ in range(expr.ARITY[kind]))
    return Node(kind, children)


def full_tree(prims: Primitives, rng, max_depth: int) -> Node:
    """Full method: functions down to the depth limit, then terminals."""
    if max_depth == 0:
        return random_terminal(prims, rng)
    kind = FUNCTIONS[int(rng.integers(len(FUNCTIONS)))]
    children = tuple(full_tree(prims, rng, max_depth - 1) for _ in range(expr.ARITY[kind]))
    return Node(kind, children)


def _capped_tree(method, prims, rng, depth, max_size, attempts=50) -> Node:
    # Rejection-sample to the size cap; if the designated method cannot fit
    # (e.g. the full method under a tiny cap), degrade to grow, which always
    # admits a bare terminal.
    for _ in range(attempts):
        tree = method(prims, rng, depth)
        if tree.size <= max_size:
            return tree
    while True:
        tree = grow_tree(prims, rng, depth)
        if tree.size <= max_size:
            return tree


def make_individual(tree: Node, evaluator: Evaluator, parent_size=None) -> Individual:
    error, scaled = evaluator.evaluate(tree)
    return Individual(tree=tree, error=error, a=scaled.a, b=scaled.b, parent_size=parent_size)


def clone_parent(parent: Individual) -> Individual:
    # Trees are immutable, so sharing the tree is a faithful clone; cached
    # objectives carry over bit-for-bit.
    return Individual(
        tree=parent.tree,
        error=parent.error,
        a=parent.a,
        b=parent.b,
        parent_size=parent.tree.size,
    )


def ramped_half_and_half(
    count: int,
    prims: Primitives,
    evaluator: Evaluator,
    rng,
    min_depth: int = MIN_INIT_DEPTH,
    max_depth: int = MAX_INIT_DEPTH,
    max_size: int = MAX_TREE_SIZE,
) -> list[Individual]:
    """Alternate full/grow per index while cycling depths min..max."""
    n_depths = max_depth - min_depth + 1
    out = []
    for i in range(count):
        depth = min_depth + (i // 2) % n_depths
        method = full_tree if i % 2 == 0 else grow_tree
        tree = _capped_tree(method, prims, rng, depth, max_size)
        out.append(make_individual(tree, evaluator))
    return out


def subtree_crossover(
    parent: Individual,
    donor: Individual,
    evaluator: Evaluator,
    rng,
    max_size: int = MAX_TREE_SIZE,
) -> Individual:
    """Clone the recipient parent and transplant a random donor subtree over
    a random subtree of the clone. Oversized offspring become parent clones.
    """
    site = expr.random_subtree_locator(parent.tree, rng)
    graft = expr.subtree_at(donor.tree, expr.random_subtree_locator(donor.tree, rng))
    child = expr.replace_subtree(parent.tree, site, graft)
    if child.size > max_size:
        return clone_parent(parent)
    return make_individual(child, evaluator, parent_size=parent.tree.size)


def subtree_mutation(
    parent: Individual,
    prims: Primitives,
    evaluator: Evaluator,
    rng,
    max_size: int = MAX_TREE_SIZE,
) -> Individual:
    """Replace a random subtree with a freshly grown one (depth 2..6)."""
    site = expr.random_subtree_locator(parent.tree, rng)
    depth = int(rng.integers(MIN_INIT_DEPTH, MAX_INIT_DEPTH + 1))
    child = expr.replace_subtree(parent.tree, site, grow_tree(prims, rng, depth))
    if child.size > max_size:
        return clone_parent(parent)
    return make_individual(child, evaluator, parent_size=parent.tree.size)


def tournament_select(pop: list[Individual], tournament_size: int, rng) -> Individual:
    """Best of `tournament_size` uniform draws by rank then crowding."""
    winner = pop[int(rng.integers(len(pop)))]
    for _ in range(tournament_size - 1):
        challenger = pop[int(rng.integers(len(pop)))]
        winner = tournament_compare(winner, challenger, rng)
    return winner


def make_offspring_population(
    pop: list[Individual],
    count: int,
    crossover_prob: float,
    tournament_size: int,
    prims: Primitives,
    evaluator: Evaluator,
    rng,
    max_size: int = MAX_TREE_SIZE,
) -> list[Individual]:
    offspring = []
    for _ in range(count):
        if rng.random() < crossover_prob:
            recipient = tournament_select(pop, tournament_size, rng)
            donor = tournament_select(pop, tournament_size, rng)
            offspring.append(subtree_crossover(recipient, donor, evaluator, rng, max_size))
        else:
            recipient = tournament_select(pop, tournament_size, rng)
            offspring.append(subtree_mutation(recipient, prims, evaluator, rng, max_size))
    return offspring
