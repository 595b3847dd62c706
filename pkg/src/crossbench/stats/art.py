"""Aligned-rank-transform factorial ANOVA with permutation p-values.

For every effect the response is aligned (cell residual plus that effect's
estimated contribution from marginal means), ranked, and run through a
full-factorial OLS fit whose Type III F statistic for the effect is kept.
The null distribution comes from permuting the raw response across rows and
repeating the whole procedure, so all effects share the same permutations.

Alignment, ranking and F are all linear-algebra on a (rows x permutations)
matrix: the alignment and projection matrices are built once per design,
which makes tens of thousands of permutations cheap.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from ..errors import DesignError

EXHAUSTIVE_LIMIT = 10
CHUNK = 2048
_ROUND = 10


@dataclass(frozen=True)
class Effect:
    name: str
    factors: tuple[str, ...]
    f: float
    p: float
    df_effect: int
    df_resid: int
    exceed: int

    def to_dict(self) -> dict:
        return {
            "effect": self.name,
            "F": None if not math.isfinite(self.f) else self.f,
            "p": self.p,
            "df_effect": self.df_effect,
            "df_resid": self.df_resid,
        }


@dataclass(frozen=True)
class EffectsTable:
    effects: tuple[Effect, ...]
    n_perm: int
    seed: int | None
    mode: str
    n_obs: int
    factors: tuple[str, ...] = field(default=())

    def __getitem__(self, name: str) -> Effect:
        for e in self.effects:
            if e.name == name:
                return e
        raise KeyError(name)

    def names(self) -> list[str]:
        return [e.name for e in self.effects]

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "n_perm": self.n_perm,
            "seed": self.seed,
            "n_obs": self.n_obs,
            "factors": list(self.factors),
            "effects": [e.to_dict() for e in self.effects],
        }


def _sum_contrasts(codes: np.ndarray, n_levels: int) -> np.ndarray:
    out = np.zeros((codes.size, n_levels - 1))
    for j in range(n_levels - 1):
        out[codes == j, j] = 1.0
    out[codes == n_levels - 1, :] = -1.0
    return out


def _averaging_operator(keys: np.ndarray) -> np.ndarray:
    """Matrix replacing each row's value by the mean of rows sharing its key."""
    same = (keys[:, None] == keys[None, :]).astype(float)
    return same / same.sum(axis=1, keepdims=True)


def _projection(X: np.ndarray) -> tuple[np.ndarray, int]:
    if X.shape[1] == 0:
        return np.zeros((X.shape[0], X.shape[0])), 0
    u, s, _ = np.linalg.svd(X, full_matrices=False)
    rank = int((s > s.max() * 1e-10).sum())
    q = u[:, :rank]
    return q @ q.T, rank


class ARTDesign:
    """Precomputed alignment and projection matrices for one factorial layout."""

    def __init__(self, factors: dict[str, list]):
        if not factors:
            raise DesignError("need at least one factor")
        self.names = tuple(factors)
        cols = [list(v) for v in factors.values()]
        n = len(cols[0])
        if any(len(c) != n for c in cols):
            raise DesignError("factor columns differ in length")
        self.n = n
        self.codes, self.levels = [], []
        for name, col in zip(self.names, cols):
            levels = sorted(set(col), key=str)
            if len(levels) < 2:
                raise DesignError(f"factor {name!r} has a single level ({levels[0] if levels else 'none'})")
            lookup = {v: i for i, v in enumerate(levels)}
            self.codes.append(np.array([lookup[v] for v in col]))
            self.levels.append(levels)
        k = len(self.names)
        cell = np.zeros(n, dtype=np.int64)
        for codes, levels in zip(self.codes, self.levels):
            cell = cell * len(levels) + codes
        self.cells = cell
        n_cells = math.prod(len(l) for l in self.levels)
        if len(set(cell.tolist())) < n_cells:
            present = set(cell.tolist())
            missing = []
            for combo in itertools.product(*[range(len(l)) for l in self.levels]):
                key = 0
                for c, l in zip(combo, self.levels):
                    key = key * len(l) + c
                if key not in present:
                    missing.append("/".join(str(l[c]) for c, l in zip(combo, self.levels)))
            raise DesignError(f"empty design cells: {', '.join(missing)}")

        self.effect_sets = [s for size in range(1, k + 1) for s in itertools.combinations(range(k), size)]
        self.effect_names = ["×".join(self.names[i] for i in s) for s in self.effect_sets]

        contrasts = [_sum_contrasts(c, len(l)) for c, l in zip(self.codes, self.levels)]
        blocks = {}
        for s in self.effect_sets:
            block = np.ones((n, 1))
            for i in s:
                block = np.einsum("ra,rb->rab", block, contrasts[i]).reshape(n, -1)
            blocks[s] = block
        X = np.hstack([np.ones((n, 1))] + [blocks[s] for s in self.effect_sets])
        p_full, rank_full = _projection(X)
        self.df_resid = n - rank_full
        if self.df_resid < 1:
            raise DesignError(
                f"no residual degrees of freedom ({n} observations, {rank_full} model parameters); "
                "replicate at least one cell"
            )
        self.resid_op = np.eye(n) - p_full
        self.effect_ops, self.df_effects = [], []
        for s in self.effect_sets:
            reduced = np.hstack([np.ones((n, 1))] + [blocks[t] for t in self.effect_sets if t != s])
            p_red, rank_red = _projection(reduced)
            self.effect_ops.append(p_full - p_red)
            self.df_effects.append(rank_full - rank_red)

        keys_for = {}
        for size in range(0, k + 1):
            for s in itertools.combinations(range(k), size):
                key = np.zeros(n, dtype=np.int64)
                for i in s:
                    key = key * len(self.levels[i]) + self.codes[i]
                keys_for[s] = _averaging_operator(key)
        full = tuple(range(k))
        self.align_ops = []
        for s in self.effect_sets:
            op = np.eye(n) - keys_for[full]
            for size in range(0, len(s) + 1):
                for t in itertools.combinations(s, size):
                    op = op + (-1) ** (len(s) - size) * keys_for[t]
            self.align_ops.append(op)

    def f_statistics(self, Y: np.ndarray) -> np.ndarray:
        """F for every effect, for each column of ``Y`` (rows x B) -> (effects x B)."""
        Y = np.asarray(Y, dtype=float)
        if Y.ndim == 1:
            Y = Y[:, None]
        scale = max(1.0, float(np.abs(Y).max()))
        out = np.empty((len(self.effect_sets), Y.shape[1]))
        for e, (align, proj, df_e) in enumerate(zip(self.align_ops, self.effect_ops, self.df_effects)):
            aligned = np.round((align @ Y) / scale, _ROUND)
            r = rankdata(aligned, axis=0)
            ss_e = np.einsum("ib,ib->b", r, proj @ r)
            ss_r = np.einsum("ib,ib->b", r, self.resid_op @ r)
            tol = 1e-10 * np.einsum("ib,ib->b", r, r)
            with np.errstate(divide="ignore", invalid="ignore"):
                f = (ss_e / df_e) / (ss_r / self.df_resid)
            f = np.where(ss_e <= tol, 0.0, np.where(ss_r <= tol, np.inf, f))
            out[e] = f
        return out


def _at_least(perm_f: np.ndarray, obs_f: np.ndarray) -> np.ndarray:
    """Count, per effect, permuted F values >= observed (relative tolerance 1e-9)."""
    obs = obs_f[:, None]
    finite = np.isfinite(obs)
    thresh = np.where(finite, obs - 1e-9 * np.maximum(1.0, np.abs(np.where(finite, obs, 0))), obs)
    return (perm_f >= thresh).sum(axis=1)


def distinct_assignments(cells: np.ndarray):
    """Yield row-index arrays assigning response values to rows, one per
    distinct split of values into cells (within-cell order ignored)."""
    n = cells.size
    slots = [np.flatnonzero(cells == c) for c in np.unique(cells)]

    def rec(ci: int, remaining: tuple[int, ...], acc: list[tuple[tuple[int, ...], np.ndarray]]):
        if ci == len(slots):
            perm = np.empty(n, dtype=np.int64)
            for chosen, rows in acc:
                perm[rows] = chosen
            yield perm
            return
        rows = slots[ci]
        for chosen in itertools.combinations(remaining, rows.size):
            rest = tuple(v for v in remaining if v not in chosen)
            acc.append((chosen, rows))
            yield from rec(ci + 1, rest, acc)
            acc.pop()

    yield from rec(0, tuple(range(n)), [])


def n_distinct_assignments(cells: np.ndarray) -> int:
    counts = np.unique(cells, return_counts=True)[1]
    out = math.factorial(int(cells.size))
    for c in counts:
        out //= math.factorial(int(c))
    return out


def rank_permutation_anova(y, factors: dict[str, list], n_perm: int = 4999, seed: int | None = 0,
                           mode: str = "sampled") -> EffectsTable:
    """ART factorial ANOVA; p = (1 + #{F* >= F}) / (1 + n_perm) in sampled mode.

    ``exhaustive`` enumerates every distinct assignment of the observed
    values to design cells (each equally likely under full exchangeability)
    and reports the exact fraction with F* >= F.
    """
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or not np.isfinite(y).all():
        raise ValueError("response must be a finite 1-D array")
    design = ARTDesign(factors)
    if design.n != y.size:
        raise DesignError("response and factor columns differ in length")
    obs = design.f_statistics(y)[:, 0]

    if mode == "exhaustive":
        if y.size > EXHAUSTIVE_LIMIT:
            raise DesignError(f"exhaustive mode supports at most {EXHAUSTIVE_LIMIT} observations")
        counts = np.zeros(len(obs), dtype=np.int64)
        total = 0
        batch = []
        for perm in distinct_assignments(design.cells):
            batch.append(perm)
            if len(batch) == 8 * CHUNK:
                counts += _at_least(design.f_statistics(y[np.array(batch)].T), obs)
                total += len(batch)
                batch = []
        if batch:
            counts += _at_least(design.f_statistics(y[np.array(batch)].T), obs)
            total += len(batch)
        pvals = counts / total
        n_used, seed_used = total, None
    elif mode == "sampled":
        if n_perm < 1:
            raise ValueError("n_perm must be >= 1")
        counts = np.zeros(len(obs), dtype=np.int64)
        n_chunks = math.ceil(n_perm / CHUNK)
        streams = np.random.SeedSequence(seed).spawn(n_chunks)
        for i, ss in enumerate(streams):
            size = min(CHUNK, n_perm - i * CHUNK)
            rng = np.random.default_rng(ss)
            idx = rng.permuted(np.tile(np.arange(y.size), (size, 1)), axis=1)
            counts += _at_least(design.f_statistics(y[idx].T), obs)
        pvals = (1 + counts) / (1 + n_perm)
        n_used, seed_used = n_perm, seed
    else:
        raise ValueError(f"unknown mode {mode!r}")

    effects = tuple(
        Effect(name, tuple(design.names[i] for i in s), float(f), float(p), int(df), design.df_resid, int(c))
        for name, s, f, p, df, c in zip(
            design.effect_names, design.effect_sets, obs, pvals, design.df_effects, counts
        )
    )
    return EffectsTable(effects, n_used, seed_used, mode, int(y.size), design.names)
