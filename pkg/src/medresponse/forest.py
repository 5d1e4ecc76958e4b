"""Binary random forest with Gini splits and mean-decrease-in-impurity importance.

Random streams: the root ``np.random.SeedSequence(seed)`` spawns one child
per tree; each child spawns two grandchildren, the first drives a PCG64
bootstrap draw and the second seeds a splitmix64 stream used for per-node
feature sampling inside the compiled tree builder. Trees therefore do not
depend on build order or thread count.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import NamedTuple, Optional

import numba
import numpy as np

FOREST_SCHEMA_VERSION = 1
MIN_GAIN = 1e-12


@dataclass(frozen=True, eq=False)
class Dataset:
    matrix: np.ndarray
    labels: np.ndarray  # 0 = baseline, 1 = treatment
    feature_ids: tuple = ()
    groups: Optional[np.ndarray] = None  # participant id per row

    def __post_init__(self):
        X = np.ascontiguousarray(self.matrix, dtype=np.float64)
        y = np.asarray(self.labels)
        if X.ndim != 2:
            raise ValueError("matrix must be two-dimensional")
        if len(y) != X.shape[0]:
            raise ValueError("labels and matrix rows differ")
        if X.shape[0] < 2:
            raise ValueError("need at least 2 instances")
        if not np.all(np.isfinite(X)):
            raise ValueError("matrix contains non-finite values")
        if not np.all((y == 0) | (y == 1)):
            raise ValueError("labels must be 0 or 1")
        ids = tuple(self.feature_ids) or tuple(f"f{i}" for i in range(X.shape[1]))
        if len(ids) != X.shape[1]:
            raise ValueError("feature_ids length differs from matrix width")
        object.__setattr__(self, "matrix", X)
        object.__setattr__(self, "labels", y.astype(np.int64))
        object.__setattr__(self, "feature_ids", ids)
        if self.groups is not None:
            object.__setattr__(self, "groups", np.asarray(self.groups))

    @property
    def n_features(self):
        return self.matrix.shape[1]

    def __len__(self):
        return self.matrix.shape[0]

    def subset(self, rows):
        return Dataset(self.matrix[rows], self.labels[rows], self.feature_ids,
                       None if self.groups is None else self.groups[rows])

    def require_both_classes(self):
        n1 = int(self.labels.sum())
        if n1 == 0 or n1 == len(self.labels):
            raise ValueError("training data contains a single class")


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 500
    mtry: Optional[int] = None  # None: floor(sqrt(n_features))
    min_split: int = 2
    max_depth: Optional[int] = None
    seed: int = 0

    def resolved_mtry(self, n_features):
        if self.mtry is None:
            return max(1, math.isqrt(n_features))
        return self.mtry


def gini(counts) -> float:
    n0, n1 = counts
    total = n0 + n1
    if total < 1:
        raise ValueError("gini: empty node")
    p0, p1 = n0 / total, n1 / total
    return 1.0 - p0 * p0 - p1 * p1


# --- compiled kernels ------------------------------------------------

@numba.njit(cache=True)
def _splitmix_next(state):
    state[0] += np.uint64(0x9E3779B97F4A7C15)
    z = state[0]
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@numba.njit(cache=True, nogil=True)
def _grow_tree(XT, order_all, y, sample, mtry, min_split, max_depth, rng_state, min_gain):
    # XT is feature-major (n_features, n_rows); order_all[f] lists rows by
    # ascending XT[f]. Large nodes scan that presorted order, small ones sort.
    n = sample.shape[0]
    d = XT.shape[0]
    n_rows = XT.shape[1]
    mult = np.zeros(n_rows, np.int64)
    cap = 2 * n + 1
    feat = np.full(cap, -1, np.int32)
    thr = np.zeros(cap)
    left = np.full(cap, -1, np.int32)
    right = np.full(cap, -1, np.int32)
    prob = np.zeros(cap)
    imp = np.zeros(d)
    work = sample.copy()
    vals = np.empty(n)
    ylab = np.empty(n, np.int64)
    perm = np.arange(d)
    st_node = np.empty(cap, np.int64)
    st_lo = np.empty(cap, np.int64)
    st_hi = np.empty(cap, np.int64)
    st_depth = np.empty(cap, np.int64)
    st_node[0] = 0
    st_lo[0] = 0
    st_hi[0] = n
    st_depth[0] = 0
    sp = 1
    n_nodes = 1
    while sp > 0:
        sp -= 1
        node = st_node[sp]
        lo = st_lo[sp]
        hi = st_hi[sp]
        depth = st_depth[sp]
        m = hi - lo
        n1 = 0
        for i in range(lo, hi):
            n1 += y[work[i]]
        n0 = m - n1
        prob[node] = n1 / m
        if n0 == 0 or n1 == 0 or m < min_split or (max_depth >= 0 and depth >= max_depth):
            continue
        g_node = 1.0 - (n0 * n0 + n1 * n1) / (m * m)
        for i in range(mtry):
            j = i + np.int64(_splitmix_next(rng_state) % np.uint64(d - i))
            tmp = perm[i]
            perm[i] = perm[j]
            perm[j] = tmp
        chosen = np.sort(perm[:mtry])
        best_gain = min_gain
        best_f = -1
        best_t = 0.0
        use_scan = 16.0 * m * np.log2(m) > n_rows
        if use_scan:
            for i in range(lo, hi):
                mult[work[i]] += 1
        for f in chosen:
            row = XT[f]
            if use_scan:
                # walk rows in global value order, skipping rows outside the node
                nl = 0
                l1 = 0
                a = 0.0
                started = False
                for k in range(n_rows):
                    r = order_all[f, k]
                    c = mult[r]
                    if c == 0:
                        continue
                    b = row[r]
                    if started and a < b:
                        nr = m - nl
                        l0 = nl - l1
                        r1 = n1 - l1
                        r0 = nr - r1
                        gl = 1.0 - (l0 * l0 + l1 * l1) / (nl * nl)
                        gr = 1.0 - (r0 * r0 + r1 * r1) / (nr * nr)
                        gain = g_node - (nl * gl + nr * gr) / m
                        if gain > best_gain:
                            best_gain = gain
                            best_f = f
                            t = 0.5 * (a + b)
                            best_t = t if t < b else a
                    nl += c
                    l1 += c * y[r]
                    a = b
                    started = True
                continue
            for i in range(m):
                vals[i] = row[work[lo + i]]
                ylab[i] = y[work[lo + i]]
            order = np.argsort(vals[:m])
            l1 = 0
            for i in range(m - 1):
                a = vals[order[i]]
                l1 += ylab[order[i]]
                b = vals[order[i + 1]]
                if a < b:
                    nl = i + 1
                    nr = m - nl
                    l0 = nl - l1
                    r1 = n1 - l1
                    r0 = nr - r1
                    gl = 1.0 - (l0 * l0 + l1 * l1) / (nl * nl)
                    gr = 1.0 - (r0 * r0 + r1 * r1) / (nr * nr)
                    gain = g_node - (nl * gl + nr * gr) / m
                    if gain > best_gain:
                        best_gain = gain
                        best_f = f
                        t = 0.5 * (a + b)
                        best_t = t if t < b else a
        if use_scan:
            for i in range(lo, hi):
                mult[work[i]] = 0
        if best_f < 0:
            continue
        # partition work[lo:hi] so rows with x <= threshold come first
        row = XT[best_f]
        i = lo
        j = hi - 1
        while i <= j:
            if row[work[i]] <= best_t:
                i += 1
            else:
                tmp = work[i]
                work[i] = work[j]
                work[j] = tmp
                j -= 1
        feat[node] = best_f
        thr[node] = best_t
        imp[best_f] += m * best_gain / n
        lnode = n_nodes
        rnode = n_nodes + 1
        n_nodes += 2
        left[node] = lnode
        right[node] = rnode
        st_node[sp] = rnode
        st_lo[sp] = i
        st_hi[sp] = hi
        st_depth[sp] = depth + 1
        sp += 1
        st_node[sp] = lnode
        st_lo[sp] = lo
        st_hi[sp] = i
        st_depth[sp] = depth + 1
        sp += 1
    return (feat[:n_nodes].copy(), thr[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), prob[:n_nodes].copy(), imp)


@numba.njit(cache=True, nogil=True)
def _predict_proba(X, feat, thr, left, right, prob, roots):
    n = X.shape[0]
    out = np.zeros(n)
    n_trees = roots.shape[0]
    for r in range(n):
        acc = 0.0
        for t in range(n_trees):
            node = roots[t]
            while feat[node] >= 0:
                if X[r, feat[node]] <= thr[node]:
                    node = left[node]
                else:
                    node = right[node]
            acc += prob[node]
        out[r] = acc / n_trees
    return out


# --- Python surface --------------------------------------------------

class Tree(NamedTuple):
    """Flat arrays; ``feature == -1`` marks a leaf, ``value`` is P(class 1)."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self):
        return len(self.feature)

    def apply(self, X):
        X = np.atleast_2d(X)
        out = np.empty(len(X), dtype=np.int64)
        for r, row in enumerate(X):
            node = 0
            while self.feature[node] >= 0:
                node = self.left[node] if row[self.feature[node]] <= self.threshold[node] \
                    else self.right[node]
            out[r] = node
        return out


def tree_seed_streams(seed, n_trees):
    """Per-tree (bootstrap, feature-sampling) seed sequences."""
    return [child.spawn(2) for child in np.random.SeedSequence(seed).spawn(n_trees)]


def _build_one(XT, order_all, y, streams, mtry, min_split, max_depth):
    boot_seq, feat_seq = streams
    n = XT.shape[1]
    sample = np.random.Generator(np.random.PCG64(boot_seq)).integers(0, n, n)
    state = feat_seq.generate_state(1, np.uint64).copy()
    tree = _grow_tree(XT, order_all, y, sample, mtry, min_split, max_depth, state, MIN_GAIN)
    return sample, tree


@dataclass(frozen=True, eq=False)
class Forest:
    trees: tuple
    importance: np.ndarray
    config: ForestConfig
    feature_ids: tuple
    n_features: int
    oob_score: Optional[float] = None
    _flat: tuple = field(default=None, repr=False)

    def __post_init__(self):
        offsets = np.cumsum([0] + [t.n_nodes for t in self.trees])
        shift = lambda a, off: np.where(a >= 0, a + off, -1)  # noqa: E731
        flat = (
            np.concatenate([t.feature for t in self.trees]).astype(np.int32),
            np.concatenate([t.threshold for t in self.trees]).astype(np.float64),
            np.concatenate([shift(t.left, o) for t, o in zip(self.trees, offsets)]).astype(np.int32),
            np.concatenate([shift(t.right, o) for t, o in zip(self.trees, offsets)]).astype(np.int32),
            np.concatenate([t.value for t in self.trees]).astype(np.float64),
            offsets[:-1].astype(np.int64),
        )
        object.__setattr__(self, "_flat", flat)

    @property
    def n_trees(self):
        return len(self.trees)

    @property
    def seed(self):
        return self.config.seed

    def predict_proba(self, X):
        X = np.ascontiguousarray(np.atleast_2d(X), dtype=np.float64)
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        if not np.all(np.isfinite(X)):
            raise ValueError("non-finite feature values")
        return _predict_proba(X, *self._flat)

    def predict(self, X):
        """Class labels; a probability of exactly 0.5 goes to class 1."""
        return (self.predict_proba(X) >= 0.5).astype(np.int64)

    def predict_one(self, row):
        p = float(self.predict_proba(np.asarray(row, dtype=np.float64)[None, :])[0])
        return int(p >= 0.5), p

    def ranking(self):
        """Feature ids by decreasing importance (stable for ties)."""
        order = np.argsort(-self.importance, kind="stable")
        return [(self.feature_ids[i], float(self.importance[i])) for i in order]

    # --- serialization
    def to_dict(self):
        from .features.registry import registry_hash
        return {
            "schema_version": FOREST_SCHEMA_VERSION,
            "config": asdict(self.config),
            "seed": self.config.seed,
            "n_features": self.n_features,
            "feature_ids": list(self.feature_ids),
            "feature_registry_hash": registry_hash(self.feature_ids),
            "importance": self.importance.tolist(),
            "oob_score": self.oob_score,
            "trees": [
                {"feature": t.feature.tolist(), "threshold": t.threshold.tolist(),
                 "left": t.left.tolist(), "right": t.right.tolist(),
                 "value": t.value.tolist()}
                for t in self.trees
            ],
        }

    @classmethod
    def from_dict(cls, d):
        from .features.registry import registry_hash
        if d.get("schema_version") != FOREST_SCHEMA_VERSION:
            raise ValueError(f"unsupported model schema {d.get('schema_version')!r}")
        ids = tuple(d["feature_ids"])
        if registry_hash(ids) != d["feature_registry_hash"]:
            raise ValueError("model feature registry hash mismatch")
        trees = tuple(
            Tree(np.array(t["feature"], dtype=np.int32), np.array(t["threshold"], dtype=np.float64),
                 np.array(t["left"], dtype=np.int32), np.array(t["right"], dtype=np.int32),
                 np.array(t["value"], dtype=np.float64))
            for t in d["trees"]
        )
        return cls(trees, np.array(d["importance"], dtype=np.float64),
                   ForestConfig(**d["config"]), ids, int(d["n_features"]), d.get("oob_score"))

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, separators=(",", ":"))

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def train(data: Dataset, config: ForestConfig = ForestConfig(), threads=1,
          compute_oob=False) -> Forest:
    """Fit a forest of bootstrap-sampled, fully grown Gini trees."""
    data.require_both_classes()
    d = data.n_features
    mtry = config.resolved_mtry(d)
    if mtry < 1:
        raise ValueError("mtry must be at least 1")
    mtry = min(mtry, d)
    if config.n_trees < 1:
        raise ValueError("n_trees must be at least 1")
    max_depth = -1 if config.max_depth is None else int(config.max_depth)
    X, y = data.matrix, data.labels
    XT = np.ascontiguousarray(X.T)
    order_all = np.argsort(XT, axis=1, kind="stable")
    streams = tree_seed_streams(config.seed, config.n_trees)

    def build(s):
        return _build_one(XT, order_all, y, s, mtry, int(config.min_split), max_depth)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            built = list(pool.map(build, streams))
    else:
        built = [build(s) for s in streams]

    trees = tuple(Tree(*b[1][:5]) for b in built)
    total = np.zeros(d)
    for b in built:
        total += b[1][5]
    s = total.sum()
    importance = total / s if s > 0 else total

    oob = None
    if compute_oob:
        votes = np.zeros(len(y))
        counts = np.zeros(len(y))
        for (sample, _), tree in zip(built, trees):
            out = np.ones(len(y), dtype=bool)
            out[sample] = False
            rows = np.flatnonzero(out)
            if len(rows):
                votes[rows] += tree.value[tree.apply(X[rows])]
                counts[rows] += 1
        seen = counts > 0
        if seen.any():
            pred = (votes[seen] / counts[seen] >= 0.5).astype(np.int64)
            oob = float(np.mean(pred == y[seen]))
    return Forest(trees, importance, config, data.feature_ids, d, oob)


def random_classifier(proportions, n, seed):
    """``n`` seeded draws from the class distribution (p_baseline, p_treatment)."""
    p0, p1 = (float(p) for p in proportions)
    if p0 < 0 or p1 < 0 or not math.isclose(p0 + p1, 1.0, abs_tol=1e-9):
        raise ValueError("class proportions must be non-negative and sum to 1")
    rng = np.random.Generator(np.random.PCG64(seed))
    return (rng.random(n) < p1).astype(np.int64)
