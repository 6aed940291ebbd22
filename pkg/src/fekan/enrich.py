"""Feature enrichment: the fixed map applied to inputs before the first layer.

Every output term depends on exactly one input coordinate, which keeps the
jet lift cheap: the batched path stores one derivative column per term plus
a source-dimension index instead of dense per-dimension Jacobians. The map
owns no trainable parameters; random-Fourier frequencies are drawn once
from a seed and frozen.
"""

from __future__ import annotations

import numpy as np

from .jets import Jet2, jet_univariate

__all__ = [
    "FeatureMap",
    "build_deterministic",
    "build_rff",
    "identity_map",
    "apply",
    "apply_jet",
]


class FeatureMap:
    """Ordered term lists per input dimension.

    Terms are tuples: ("one",), ("id",), ("cos", a), ("sin", a). Dimensions
    not in enrich_dims carry the single identity term (raw pass-through).
    """

    def __init__(self, per_dim, enrich_dims, mode="deterministic", rff_params=None):
        self.per_dim = [list(terms) for terms in per_dim]
        self.enrich_dims = tuple(sorted(enrich_dims))
        self.mode = mode
        self.rff_params = rff_params  # (sigma, m, seed) when mode == "rff"
        for d, terms in enumerate(self.per_dim):
            if not terms:
                raise ValueError(f"empty term list for dim {d}")
        # Source dim of each output slot, in declared order.
        self.src = np.asarray(
            [d for d, terms in enumerate(self.per_dim) for _ in terms], dtype=np.int64
        )

    @property
    def ndim(self) -> int:
        return len(self.per_dim)

    @property
    def width(self) -> int:
        return sum(len(t) for t in self.per_dim)

    @property
    def is_identity(self) -> bool:
        return all(terms == [("id",)] for terms in self.per_dim)

    def to_dict(self) -> dict:
        if self.mode == "rff":
            sigma, m, seed = self.rff_params
            freqs = {"sigma": sigma, "m": m, "seed": seed}
        else:
            freqs = []
            for d, terms in enumerate(self.per_dim):
                if d in self.enrich_dims:
                    freqs.append([t[1] for t in terms if t[0] == "cos"])
        return {
            "mode": self.mode,
            "freqs": freqs,
            "enrich_dims": list(self.enrich_dims),
            "ndim": self.ndim,
            "include_one": any(t == ("one",) for terms in self.per_dim for t in terms),
            "include_identity": any(
                d in self.enrich_dims and ("id",) in self.per_dim[d] for d in range(self.ndim)
            ),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureMap":
        if d["mode"] == "rff":
            f = d["freqs"]
            return build_rff(f["sigma"], f["m"], ndim=d["ndim"],
                             enrich_dims=d["enrich_dims"], seed=f["seed"])
        freqs = d["freqs"]
        if not d["enrich_dims"]:
            return identity_map(d["ndim"])
        return build_deterministic(
            freqs if len(freqs) > 1 else freqs[0],
            ndim=d["ndim"],
            include_one=d.get("include_one", True),
            include_identity=d.get("include_identity", False),
            enrich_dims=d["enrich_dims"],
        )


def _terms_from_freqs(freqs, include_one, include_identity):
    terms = []
    if include_identity:
        terms.append(("id",))
    if include_one:
        terms.append(("one",))
    for a in freqs:
        terms.append(("cos", float(a)))
        terms.append(("sin", float(a)))
    return terms


def build_deterministic(freqs, ndim=1, include_one=True, include_identity=False,
                        enrich_dims=None) -> FeatureMap:
    """Published-order deterministic map: constant first, then cos/sin pairs
    with ascending frequency. `freqs` is one list shared by every enriched
    dim, or a list of per-dim lists."""
    if enrich_dims is None:
        enrich_dims = range(ndim)
    enrich_dims = set(enrich_dims)
    per_dim_freqs = freqs if freqs and isinstance(freqs[0], (list, tuple)) else None
    per_dim = []
    it = iter(per_dim_freqs or [])
    for d in range(ndim):
        if d in enrich_dims:
            f = next(it) if per_dim_freqs is not None else freqs
            t = _terms_from_freqs(f, include_one, include_identity)
            if not t:
                raise ValueError(f"enriched dim {d} has no terms")
            per_dim.append(t)
        else:
            per_dim.append([("id",)])
    return FeatureMap(per_dim, enrich_dims)


def build_rff(sigma, m, ndim=1, enrich_dims=None, seed=0) -> FeatureMap:
    """Random Fourier map: 2m+1 terms per enriched dim, a_j ~ N(0, sigma^2)
    drawn once from the seed and frozen."""
    if sigma < 0 or m < 1:
        raise ValueError("need sigma >= 0 and m >= 1")
    if enrich_dims is None:
        enrich_dims = range(ndim)
    enrich_dims = set(enrich_dims)
    rng = np.random.Generator(np.random.PCG64(seed))
    per_dim = []
    for d in range(ndim):
        if d in enrich_dims:
            a = rng.normal(0.0, sigma, size=m)
            per_dim.append(_terms_from_freqs(a, True, False))
        else:
            per_dim.append([("id",)])
    return FeatureMap(per_dim, enrich_dims, mode="rff", rff_params=(float(sigma), int(m), int(seed)))


def identity_map(ndim: int) -> FeatureMap:
    """The degenerate map: every dim passes through raw. FEKAN with this
    map is exactly a KAN."""
    return FeatureMap([[("id",)] for _ in range(ndim)], enrich_dims=())


def _term_columns(term, x):
    """(value, d1, d2) columns of one term over a 1-D array of inputs."""
    kind = term[0]
    if kind == "one":
        one = np.ones_like(x)
        zero = np.zeros_like(x)
        return one, zero, zero
    if kind == "id":
        return x, np.ones_like(x), np.zeros_like(x)
    a = term[1]
    if kind == "cos":
        return np.cos(a * x), -a * np.sin(a * x), -a * a * np.cos(a * x)
    if kind == "sin":
        return np.sin(a * x), a * np.cos(a * x), -a * a * np.sin(a * x)
    raise ValueError(f"unknown term {term!r}")


def apply_batch(fmap: FeatureMap, X: np.ndarray) -> np.ndarray:
    """Map (N, ndim) points to (N, width) enriched points."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != fmap.ndim:
        raise ValueError(f"expected (N, {fmap.ndim}) input, got {X.shape}")
    cols = []
    for d, terms in enumerate(fmap.per_dim):
        for t in terms:
            cols.append(_term_columns(t, X[:, d])[0])
    return np.stack(cols, axis=1)


def apply_jet_batch(fmap: FeatureMap, X: np.ndarray):
    """Batched jet lift in compact form.

    Returns (E0, E1, E2, src): value/first/second derivative columns of
    each output term with respect to its single source coordinate, plus
    the source index array.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != fmap.ndim:
        raise ValueError(f"expected (N, {fmap.ndim}) input, got {X.shape}")
    v, g, h = [], [], []
    for d, terms in enumerate(fmap.per_dim):
        for t in terms:
            c0, c1, c2 = _term_columns(t, X[:, d])
            v.append(c0)
            g.append(c1)
            h.append(c2)
    return np.stack(v, axis=1), np.stack(g, axis=1), np.stack(h, axis=1), fmap.src


def apply(fmap: FeatureMap, x) -> np.ndarray:
    """Enrich a single point."""
    x = np.asarray(x, dtype=float).reshape(1, -1)
    return apply_batch(fmap, x)[0]


def apply_jet(fmap: FeatureMap, jets):
    """Enrich a vector of jets, one output jet per term."""
    if len(jets) != fmap.ndim:
        raise ValueError(f"expected {fmap.ndim} jets, got {len(jets)}")
    out = []
    for d, terms in enumerate(fmap.per_dim):
        xj = jets[d]
        for t in terms:
            c0, c1, c2 = (float(c[0]) for c in _term_columns(t, np.asarray([xj.value])))
            out.append(jet_univariate(xj, lambda _v, p=c0: p, lambda _v, p=c1: p, lambda _v, p=c2: p))
    return out
