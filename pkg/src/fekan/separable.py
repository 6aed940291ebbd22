"""Separable networks: one small body per axis, rank-summed products.

The surrogate is u(x) = sum_j prod_k f_k[j](x_k), so a tensor-product grid
with axis sizes N_1..N_d never costs N_1*...*N_d network evaluations: each
body runs once per axis point and everything else is tensor contraction.
Derivatives factor the same way, axis by axis.

Bodies are ordinary FekanModel instances with a single raw input. An axis
may carry an affine normalization (center, halfwidth) applied before the
body; derivative stacks returned here are always with respect to the raw
axis coordinate.
"""

from __future__ import annotations

import numpy as np

from .model import FekanModel, ParamGrads

__all__ = ["SeparableModel", "SepEval", "SepCotangents"]

def _fold_columns(cols):
    """Row-major Khatri-Rao fold: (n_0...n_{m-1}, j) from per-axis (n_i, j)."""
    acc = cols[0]
    for c in cols[1:]:
        acc = (acc[:, None, :] * c[None, :, :]).reshape(-1, acc.shape[1])
    return acc


def _product_tensor(cols):
    shape = tuple(c.shape[0] for c in cols)
    if len(cols) == 1:
        return cols[0].sum(axis=1)
    return (_fold_columns(cols[:-1]) @ cols[-1].T).reshape(shape)


def _complement_contract(tbar, cols, skip):
    d = len(cols)
    if d == 1:
        # u(a) = sum_j col[a, j]: every rank channel sees the same cotangent
        return np.repeat(tbar[:, None], cols[0].shape[1], axis=1)
    others = [cols[l] for l in range(d) if l != skip]
    t = np.moveaxis(tbar, skip, 0).reshape(tbar.shape[skip], -1)
    return t @ _fold_columns(others)


class SepEval:
    """Per-axis body evaluations over one grid, reused by every tensor."""

    def __init__(self, grids, stacks, caches, chains):
        self.grids = grids
        self.stacks = stacks  # per axis: [B0] or [B0, B1, B2], raw-coordinate
        self.caches = caches
        self.chains = chains

    @property
    def shape(self):
        return tuple(len(g) for g in self.grids)


class SepCotangents:
    """Accumulates cotangents per axis and derivative order."""

    def __init__(self, ev: SepEval, rank: int):
        self.slots = [[None, None, None] for _ in ev.grids]
        self._shapes = [(len(g), rank) for g in ev.grids]

    def add(self, axis: int, order: int, value: np.ndarray):
        if self.slots[axis][order] is None:
            self.slots[axis][order] = np.zeros(self._shapes[axis])
        self.slots[axis][order] += value


class SeparableModel:
    """d bodies of rank r. eval_count tracks total body evaluations, which
    a grid pass grows by sum of axis sizes, never the product."""

    def __init__(self, bodies, affines=None):
        self.bodies = list(bodies)
        if affines is None:
            affines = [None] * len(bodies)
        self.affines = list(affines)
        r = bodies[0].out_dim
        for b in bodies:
            if b.out_dim != r:
                raise ValueError("all bodies must share the same rank")
            if b.in_dim != 1:
                raise ValueError("bodies take a single raw coordinate")
        self.rank = r
        self.eval_count = 0

    @classmethod
    def init(cls, spec, widths, fmaps, seed=0, affines=None, base_path=None):
        """One body per entry of fmaps; widths is the shared hidden shape
        ending in the rank, with widths[0] replaced per body by its map
        width."""
        bodies = []
        for axis, fmap in enumerate(fmaps):
            w = [fmap.width] + list(widths[1:])
            ss = np.random.SeedSequence((seed, axis))
            bodies.append(FekanModel.init(w, spec, fmap, seed=ss, base_path=base_path))
        return cls(bodies, affines)

    @property
    def ndim(self) -> int:
        return len(self.bodies)

    def param_count(self) -> int:
        return sum(b.param_count() for b in self.bodies)

    def _to_body(self, axis: int, t: np.ndarray):
        aff = self.affines[axis]
        if aff is None:
            return t, 1.0
        center, half = aff
        return (t - center) / half, 1.0 / half

    def eval_grid(self, grids, order: int = 0, with_cache: bool = False) -> SepEval:
        """Run every body over its axis. order 0 caches values only;
        order 2 adds first and second raw-coordinate derivatives."""
        stacks, caches, chains = [], [], []
        for axis, grid in enumerate(grids):
            t = np.asarray(grid, dtype=float)
            if t.ndim != 1 or (t.size > 1 and not np.all(np.diff(t) > 0)):
                raise ValueError(f"axis {axis} grid must be 1-D increasing")
            u, alpha = self._to_body(axis, t)
            x = u[:, None]
            body = self.bodies[axis]
            self.eval_count += len(t)
            if order == 0:
                stacks.append([body.forward_batch(x)])
                caches.append(None)
            elif with_cache:
                v, g, h, cache = body.forward_jet_batch(x, with_cache=True)
                stacks.append([v, g[:, :, 0] * alpha, h[:, :, 0] * alpha * alpha])
                caches.append(cache)
            else:
                v, g, h = body.forward_jet_batch(x)
                stacks.append([v, g[:, :, 0] * alpha, h[:, :, 0] * alpha * alpha])
                caches.append(None)
            chains.append(alpha)
        return SepEval([np.asarray(g, dtype=float) for g in grids], stacks, caches, chains)

    def tensor(self, ev: SepEval, orders=None) -> np.ndarray:
        """Grid tensor of the surrogate or one of its factored derivatives.
        orders gives the per-axis derivative order (default all zero)."""
        if orders is None:
            orders = (0,) * self.ndim
        return _product_tensor([ev.stacks[k][orders[k]] for k in range(self.ndim)])

    def tensor_backward(self, tbar: np.ndarray, ev: SepEval, orders, cot: SepCotangents):
        """Scatter a tensor cotangent onto per-axis stack cotangents."""
        cols = [ev.stacks[k][orders[k]] for k in range(self.ndim)]
        for k in range(self.ndim):
            cot.add(k, orders[k], _complement_contract(tbar, cols, k))

    def grads(self, ev: SepEval, cot: SepCotangents):
        """Close the reverse pass: per-body parameter gradients."""
        out = []
        for axis, body in enumerate(self.bodies):
            n = len(ev.grids[axis])
            alpha = ev.chains[axis]
            vbar, g1, g2 = cot.slots[axis]
            if vbar is None:
                vbar = np.zeros((n, self.rank))
            gbar = np.zeros((n, self.rank, 1))
            hbar = np.zeros((n, self.rank, 1))
            if g1 is not None:
                gbar[:, :, 0] = g1 * alpha
            if g2 is not None:
                hbar[:, :, 0] = g2 * alpha * alpha
            out.append(body.backward_jet_batch(ev.caches[axis], vbar, gbar, hbar))
        return out

    # -- convenience surface ----------------------------------------------

    def forward_grid(self, grids) -> np.ndarray:
        return self.tensor(self.eval_grid(grids, order=0))

    def derivative_grid(self, grids, axis: int, order: int) -> np.ndarray:
        if not 0 <= order <= 2:
            raise ValueError("derivative order must be 0, 1 or 2")
        ev = self.eval_grid(grids, order=2 if order else 0)
        o = [0] * self.ndim
        o[axis] = order
        return self.tensor(ev, tuple(o))

    def forward_points(self, x: np.ndarray) -> np.ndarray:
        """Evaluate at scattered points (N, d); costs d*N body evaluations."""
        x = np.asarray(x, dtype=float)
        n = x.shape[0]
        acc = np.ones((n, self.rank))
        for axis, body in enumerate(self.bodies):
            u, _ = self._to_body(axis, x[:, axis])
            self.eval_count += n
            acc *= body.forward_batch(u[:, None])
        return acc.sum(axis=1)
