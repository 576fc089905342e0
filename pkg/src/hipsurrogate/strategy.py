"""Surrogate substitution strategies as a two-state (new / repeat) chain.

The first mention of a chain always takes a fresh surrogate. Each later
mention takes a fresh one with probability ``p_new`` and otherwise repeats
the surrogate used immediately before it. Fresh draws are uniform over the
pool *with* replacement, so two fresh draws can coincide.

==========  =====
strategy    p_new
==========  =====
Consistent  0
Markov      0.5
Random      1
Custom      any
==========  =====

After the chain runs, the surrogates of a chain are shuffled over that
chain's mention positions so a run of identical values is not left sitting
in consecutive mentions.
"""

import re
from collections import Counter, defaultdict
from dataclasses import dataclass, field

from .surrogates import (
    OFFSET_KINDS,
    OffsetPolicy,
    match_case,
    offset_age,
    offset_date,
    offset_time,
)

STRATEGY_P_NEW = {"consistent": 0.0, "markov": 0.5, "random": 1.0}
STRATEGY_KINDS = ("consistent", "random", "markov", "custom")

# chain key used for every mention of a category when no surface is known
NO_TEXT = "⊥"

_WS_RE = re.compile(r"\s+")


@dataclass(frozen=True)
class StrategyConfig:
    kind: str = "markov"
    p_new: float | None = None
    pool_size: int = 1000
    seed: int = 0

    def __post_init__(self):
        kind = self.kind.lower()
        if kind not in STRATEGY_KINDS:
            raise ValueError(f"unknown strategy {self.kind!r}; expected one of {STRATEGY_KINDS}")
        p_new = self.p_new
        if kind == "custom":
            if p_new is None:
                raise ValueError("custom strategy requires p_new")
        else:
            fixed = STRATEGY_P_NEW[kind]
            if p_new is not None and float(p_new) != fixed:
                raise ValueError(f"{kind} strategy fixes p_new={fixed}, got {p_new}")
            p_new = fixed
        p_new = float(p_new)
        if not 0.0 <= p_new <= 1.0:
            raise ValueError(f"p_new must lie in [0, 1], got {p_new}")
        if self.pool_size < 1:
            raise ValueError("pool_size must be >= 1")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "p_new", p_new)


@dataclass(frozen=True)
class ChainKey:
    doc_id: str
    category: str
    normalized: str


def normalize_surface(surface):
    if surface is None:
        return NO_TEXT
    return _WS_RE.sub(" ", surface.strip()).casefold()


@dataclass
class ReplacementPlan:
    """Mention index -> surrogate assignments for one document.

    ``assignments`` holds ``(mention_index, ChainKey, surrogate)`` sorted by
    mention index; mention indices refer to ``bundle.annotations``.
    """

    doc_id: str
    assignments: list = field(default_factory=list)
    max_repeat_by_key: dict = field(default_factory=dict)

    def surrogates(self):
        return [s for _, _, s in self.assignments]

    def __len__(self):
        return len(self.assignments)


def _fresh_index(pool, rng, excluded):
    K = pool.K
    if excluded and len(excluded) < K:
        while True:
            i = rng.randrange(K)
            if i not in excluded:
                return i
    return rng.randrange(K)


def chain_assign_indices(n_mentions, p_new, pool, rng, exclude=None):
    """Pool indices chosen by the chain; see :func:`chain_assign`."""
    if n_mentions < 0:
        raise ValueError("n_mentions must be >= 0")
    if pool is None or pool.K == 0:
        raise ValueError("surrogate pool is empty")
    if n_mentions == 0:
        return []
    excluded = pool.indices_of(exclude) if exclude is not None else frozenset()
    current = _fresh_index(pool, rng, excluded)
    out = [current]
    random = rng.random
    for _ in range(n_mentions - 1):
        if p_new > 0.0 and (p_new >= 1.0 or random() < p_new):
            current = _fresh_index(pool, rng, excluded)
        out.append(current)
    return out


def chain_assign(n_mentions, config, pool, rng, exclude=None):
    """Run the new/repeat chain for ``n_mentions`` mentions.

    ``exclude`` is the original surface; pool values equal to it (ignoring
    case) are never drawn, so a surrogate cannot reproduce the PHI it hides.
    """
    p_new = config.p_new if isinstance(config, StrategyConfig) else float(config)
    return [pool[i] for i in chain_assign_indices(n_mentions, p_new, pool, rng, exclude)]


def max_repeat_size(values):
    """Largest number of times any single value occurs (0 for no values)."""
    if not values:
        return 0
    return max(Counter(values).values())


def disperse(values, rng):
    """Uniformly random permutation of ``values`` (the multiset is unchanged)."""
    out = list(values)
    rng.shuffle(out)
    return out


def run_lengths(values):
    """Lengths of maximal runs of equal adjacent values."""
    runs = []
    prev = object()
    for v in values:
        if runs and v == prev:
            runs[-1] += 1
        else:
            runs.append(1)
        prev = v
    return runs


def plan_document(bundle, config, pools, rng, registry=None, policy=None, notes=None,
                  dayfirst=False):
    """Assign a surrogate to every annotation of ``bundle``.

    ``pools`` is either a :class:`~hipsurrogate.surrogates.PoolCache` or a
    plain mapping ``category -> SurrogatePool``. Date, age and time mentions
    bypass the chain and are shifted with ``policy``. Categories missing from
    ``registry`` receive a ``"[LABEL]"`` placeholder and a note.
    """
    if registry is None:
        registry = getattr(pools, "registry", None)
        if registry is None:
            from .surrogates import default_registry
            registry = default_registry()

    chains = defaultdict(list)
    assigned = {}
    for idx, rec in enumerate(bundle.annotations):
        spec = registry.get(rec.category)
        key = ChainKey(bundle.doc_id, rec.category, normalize_surface(rec.surface))
        if spec is None:
            if notes is not None:
                notes.append(f"{rec.id}: unregistered category {rec.category!r}; placeholder")
            assigned[idx] = (key, f"[{rec.category}]")
            continue
        kind = spec.generator_kind
        if kind in OFFSET_KINDS and policy is None:
            policy = OffsetPolicy.draw(rng)
        if kind == "date-offset":
            assigned[idx] = (key, offset_date(rec.surface, policy, rng, dayfirst, notes))
        elif kind == "age-offset":
            assigned[idx] = (key, offset_age(rec.surface, rng, policy, notes))
        elif kind == "time-offset":
            assigned[idx] = (key, offset_time(rec.surface, policy, rng, notes))
        else:
            chains[key].append((idx, rec, spec))

    for key, members in chains.items():
        _, first, spec = members[0]
        pool = _pool_for(pools, spec, first.surface)
        values = chain_assign(len(members), config, pool, rng, exclude=first.surface)
        values = disperse(values, rng)
        for (idx, rec, spec), value in zip(members, values):
            if spec.generator_kind.endswith("-list"):
                value = match_case(value, rec.surface)
            assigned[idx] = (key, value)

    plan = ReplacementPlan(bundle.doc_id)
    by_key = defaultdict(list)
    for idx in sorted(assigned):
        key, value = assigned[idx]
        plan.assignments.append((idx, key, value))
        by_key[key].append(value)
    plan.max_repeat_by_key = {k: max_repeat_size(v) for k, v in by_key.items()}
    return plan


def _pool_for(pools, spec, original):
    if hasattr(pools, "pool_for"):
        return pools.pool_for(spec, original)
    try:
        return pools[spec.category]
    except KeyError:
        raise KeyError(f"no surrogate pool for category {spec.category!r}") from None

