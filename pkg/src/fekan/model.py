"""KAN layers and the enriched network, with hand-rolled differentiation.

Three coupled transport problems live here and nowhere else:

* plain forward/backward for regression losses,
* second-order jet forward (value, per-input gradient, diagonal second)
  for residual losses,
* reverse mode through the jet forward for parameter gradients of
  residual losses. That pass touches third derivatives of the basis
  functions at hidden layers, which is why the basis stacks go to
  order 3.

All heavy contractions are reshaped into matmuls; the per-element work
is broadcasting only. Arrays are float64 throughout and nothing here
owns a tape: each layer caches exactly what its backward needs.
"""

from __future__ import annotations

import json

import numpy as np

from .basis import BasisSpec, eval_stack, psi_stack
from .enrich import FeatureMap, apply_batch, apply_jet_batch, identity_map
from .jets import Jet2

__all__ = ["KanLayer", "FekanModel", "ParamGrads"]


def _silu_stack(v: np.ndarray, order: int):
    # tanh form of the logistic avoids exp overflow at large |v|
    sig = 0.5 * (1.0 + np.tanh(0.5 * v))
    out = [v * sig]
    if order >= 1:
        sig1 = sig * (1.0 - sig)
        out.append(sig + v * sig1)
    if order >= 2:
        sig2 = sig1 * (1.0 - 2.0 * sig)
        out.append(2.0 * sig1 + v * sig2)
    if order >= 3:
        sig3 = sig2 * (1.0 - 2.0 * sig) - 2.0 * sig1 * sig1
        out.append(3.0 * sig2 + v * sig3)
    return out


class ParamGrads:
    """Gradient container mirroring the model's parameter tree."""

    def __init__(self, layers):
        self.layers = layers  # list of dicts name -> array

    @classmethod
    def zeros_like(cls, model: "FekanModel") -> "ParamGrads":
        out = []
        for layer in model.layers:
            g = {"coeff": np.zeros_like(layer.coeff)}
            if layer.base_weight is not None:
                g["base_weight"] = np.zeros_like(layer.base_weight)
            if layer.is_wavelet:
                g["tau"] = np.zeros_like(layer.tau)
                g["s"] = np.zeros_like(layer.s)
            out.append(g)
        return cls(out)

    def add_(self, other: "ParamGrads", scale: float = 1.0) -> "ParamGrads":
        for mine, theirs in zip(self.layers, other.layers):
            for name, arr in theirs.items():
                mine[name] += scale * arr
        return self

    def scale_(self, factor: float) -> "ParamGrads":
        for g in self.layers:
            for arr in g.values():
                arr *= factor
        return self

    def flatten(self) -> np.ndarray:
        parts = []
        for g in self.layers:
            for name in ("coeff", "base_weight", "tau", "s"):
                if name in g:
                    parts.append(g[name].ravel())
        return np.concatenate(parts)


class KanLayer:
    """One layer: every edge is a weighted sum of shared basis functions,
    optionally plus a learned multiple of silu on the raw pre-activation.

    coeff has shape (out_width, in_width, cardinality). Wavelet layers add
    per-edge translation tau and dilation s, both (out_width, in_width).
    """

    def __init__(self, in_width, out_width, spec: BasisSpec, coeff,
                 base_weight=None, tau=None, s=None):
        self.in_width = in_width
        self.out_width = out_width
        self.spec = spec
        self.coeff = coeff
        self.base_weight = base_weight
        self.tau = tau
        self.s = s
        assert coeff.shape == (out_width, in_width, spec.cardinality)

    @property
    def is_wavelet(self) -> bool:
        return self.spec.kind == "wavelet_dog"

    def param_count(self) -> int:
        n = self.coeff.size
        if self.base_weight is not None:
            n += self.base_weight.size
        if self.is_wavelet:
            n += self.tau.size + self.s.size
        return n

    def _wflat(self):
        j, i, b = self.coeff.shape
        return self.coeff.transpose(1, 2, 0).reshape(i * b, j)

    # -- plain value transport ------------------------------------------

    def forward(self, v: np.ndarray, need_input_grad: bool):
        n, i = v.shape
        if self.is_wavelet:
            z = (v[:, None, :] - self.tau[None]) / self.s[None]
            psi = psi_stack(z, 1 if need_input_grad else 0)
            y = np.einsum("nji,ji->nj", psi[0], self.coeff[:, :, 0])
            return y, {"v": v, "z": z, "psi": psi}
        order = 1 if need_input_grad or self.base_weight is not None else 0
        phi = eval_stack(self.spec, v, order)
        y = phi[0].reshape(n, -1) @ self._wflat()
        cache = {"v": v, "phi": phi}
        if self.base_weight is not None:
            cache["silu"] = _silu_stack(v, order)
            y = y + cache["silu"][0] @ self.base_weight.T
        return y, cache

    def backward(self, cache, ybar: np.ndarray, need_input_grad: bool):
        n = ybar.shape[0]
        if self.is_wavelet:
            z, psi = cache["z"], cache["psi"]
            c = self.coeff[:, :, 0]
            g = {"coeff": np.einsum("nj,nji->ji", ybar, psi[0])[:, :, None]}
            common = ybar[:, :, None] * c[None] * psi[1]
            g["tau"] = -(common / self.s[None]).sum(axis=0)
            g["s"] = -(common * z / self.s[None]).sum(axis=0)
            vbar = (common / self.s[None]).sum(axis=1) if need_input_grad else None
            return vbar, g
        phi = cache["phi"]
        i, b = self.in_width, self.spec.cardinality
        gwflat = phi[0].reshape(n, -1).T @ ybar
        g = {"coeff": gwflat.reshape(i, b, -1).transpose(2, 0, 1)}
        if self.base_weight is not None:
            g["base_weight"] = ybar.T @ cache["silu"][0]
        vbar = None
        if need_input_grad:
            c1 = (ybar @ self._wflat().T).reshape(n, i, b)
            vbar = (c1 * phi[1]).sum(axis=-1)
            if self.base_weight is not None:
                vbar = vbar + (ybar @ self.base_weight) * cache["silu"][1]
        return vbar, g

    # -- jet transport ---------------------------------------------------

    def forward_jet(self, v, gv, hv, need_input_bars: bool):
        """Push (value, grad, diag2) channels through the layer.

        gv/hv are (N, in_width, K) where K is the raw input dimension.
        Caches basis stacks to order 3 when a later reverse pass will need
        gradients with respect to this layer's inputs.
        """
        n, i = v.shape
        k = gv.shape[2]
        if self.is_wavelet:
            z = (v[:, None, :] - self.tau[None]) / self.s[None]
            # tau/s gradients in the reverse pass touch psi''' even at the
            # first layer, so the full stack is always cached
            psi = psi_stack(z, 3)
            c = self.coeff[:, :, 0][None]
            f1 = c * psi[1] / self.s[None]
            f2 = c * psi[2] / self.s[None] ** 2
            # same expression as forward() so the value channel is bitwise equal
            y = np.einsum("nji,ji->nj", psi[0], self.coeff[:, :, 0])
            gy = np.einsum("nji,nik->njk", f1, gv)
            hy = np.einsum("nji,nik->njk", f2, gv * gv) + np.einsum("nji,nik->njk", f1, hv)
            cache = {"v": v, "gv": gv, "hv": hv, "z": z, "psi": psi}
            return y, gy, hy, cache
        order = 3 if need_input_bars else 2
        phi = eval_stack(self.spec, v, order)
        wf = self._wflat()
        p1 = (phi[1][:, :, :, None] * gv[:, :, None, :]).reshape(n, -1, k)
        p2 = (phi[2][:, :, :, None] * (gv * gv)[:, :, None, :]
              + phi[1][:, :, :, None] * hv[:, :, None, :]).reshape(n, -1, k)
        y = phi[0].reshape(n, -1) @ wf
        gy = np.tensordot(p1, wf, axes=([1], [0])).transpose(0, 2, 1)
        hy = np.tensordot(p2, wf, axes=([1], [0])).transpose(0, 2, 1)
        cache = {"v": v, "gv": gv, "hv": hv, "phi": phi, "p1": p1, "p2": p2}
        if self.base_weight is not None:
            sl = _silu_stack(v, 3 if need_input_bars else 2)
            bg = sl[1][:, :, None] * gv
            bh = sl[2][:, :, None] * (gv * gv) + sl[1][:, :, None] * hv
            y = y + sl[0] @ self.base_weight.T
            gy = gy + np.tensordot(bg, self.base_weight, axes=([1], [1])).transpose(0, 2, 1)
            hy = hy + np.tensordot(bh, self.base_weight, axes=([1], [1])).transpose(0, 2, 1)
            cache.update(silu=sl, bg=bg, bh=bh)
        return y, gy, hy, cache

    def backward_jet(self, cache, ybar, gbar, hbar, need_input_bars: bool):
        """Reverse through forward_jet. Upstream cotangents arrive on all
        three channels; returns cotangents for this layer's input channels
        plus parameter gradients."""
        v, gv, hv = cache["v"], cache["gv"], cache["hv"]
        n, i = v.shape
        k = gv.shape[2]
        if self.is_wavelet:
            z, psi = cache["z"], cache["psi"]
            c = self.coeff[:, :, 0][None]
            s = self.s[None]
            t1 = np.einsum("njk,nik->nji", gbar, gv)
            t2g = np.einsum("njk,nik->nji", hbar, gv * gv)
            t2h = np.einsum("njk,nik->nji", hbar, hv)
            up0 = ybar[:, :, None]
            gc = (up0 * psi[0] + t1 * psi[1] / s + t2g * psi[2] / s ** 2
                  + t2h * psi[1] / s).sum(axis=0)
            dldz = c * (up0 * psi[1] + t1 * psi[2] / s + t2g * psi[3] / s ** 2
                        + t2h * psi[2] / s)
            g = {"coeff": gc[:, :, None],
                 "tau": -(dldz / s).sum(axis=0),
                 "s": (-(dldz * z / s)
                       - c * (t1 * psi[1] / s ** 2 + 2 * t2g * psi[2] / s ** 3
                              + t2h * psi[1] / s ** 2)).sum(axis=0)}
            if not need_input_bars:
                return None, None, None, g
            f1 = c * psi[1] / s
            f2 = c * psi[2] / s ** 2
            vbar = (dldz / s).sum(axis=1)
            gbar_in = (np.einsum("njk,nji->nik", gbar, f1)
                       + 2.0 * gv * np.einsum("njk,nji->nik", hbar, f2))
            hbar_in = np.einsum("njk,nji->nik", hbar, f1)
            return vbar, gbar_in, hbar_in, g
        phi, p1, p2 = cache["phi"], cache["p1"], cache["p2"]
        b = self.spec.cardinality
        wf = self._wflat()
        gwflat = (phi[0].reshape(n, -1).T @ ybar
                  + np.tensordot(p1, gbar, axes=([0, 2], [0, 2]))
                  + np.tensordot(p2, hbar, axes=([0, 2], [0, 2])))
        g = {"coeff": gwflat.reshape(i, b, -1).transpose(2, 0, 1)}
        if self.base_weight is not None:
            sl, bg, bh = cache["silu"], cache["bg"], cache["bh"]
            g["base_weight"] = (ybar.T @ sl[0]
                                + np.tensordot(gbar, bg, axes=([0, 2], [0, 2]))
                                + np.tensordot(hbar, bh, axes=([0, 2], [0, 2])))
        if not need_input_bars:
            return None, None, None, g
        a0 = (ybar @ wf.T).reshape(n, i, b)
        a1 = np.tensordot(gbar, wf, axes=([1], [1])).transpose(0, 2, 1).reshape(n, i, b, k)
        a2 = np.tensordot(hbar, wf, axes=([1], [1])).transpose(0, 2, 1).reshape(n, i, b, k)
        s1g = (a1 * gv[:, :, None, :]).sum(axis=-1)
        s2g2 = (a2 * (gv * gv)[:, :, None, :]).sum(axis=-1)
        s2h = (a2 * hv[:, :, None, :]).sum(axis=-1)
        vbar = (a0 * phi[1] + s1g * phi[2] + s2g2 * phi[3] + s2h * phi[2]).sum(axis=-1)
        gbar_in = ((a1 * phi[1][:, :, :, None]).sum(axis=2)
                   + 2.0 * gv * (a2 * phi[2][:, :, :, None]).sum(axis=2))
        hbar_in = (a2 * phi[1][:, :, :, None]).sum(axis=2)
        if self.base_weight is not None:
            sl = cache["silu"]
            ab0 = ybar @ self.base_weight
            ab1 = np.tensordot(gbar, self.base_weight, axes=([1], [0])).transpose(0, 2, 1)
            ab2 = np.tensordot(hbar, self.base_weight, axes=([1], [0])).transpose(0, 2, 1)
            vbar = vbar + (ab0 * sl[1] + (ab1 * gv).sum(-1) * sl[2]
                           + (ab2 * gv * gv).sum(-1) * sl[3] + (ab2 * hv).sum(-1) * sl[2])
            gbar_in = gbar_in + ab1 * sl[1][:, :, None] + 2.0 * gv * ab2 * sl[2][:, :, None]
            hbar_in = hbar_in + ab2 * sl[1][:, :, None]
        return vbar, gbar_in, hbar_in, g


class FekanModel:
    """Feature map followed by a stack of KAN layers.

    widths[0] is the post-enrichment width and must match the map. With an
    identity map the network is a plain KAN, and forward/backward agree
    bitwise with one built that way from the same seed.
    """

    def __init__(self, widths, spec: BasisSpec, fmap: FeatureMap, layers):
        self.widths = list(widths)
        self.spec = spec
        self.fmap = fmap
        self.layers = layers

    @classmethod
    def init(cls, widths, spec: BasisSpec, fmap: FeatureMap = None, seed: int = 0,
             base_path=None) -> "FekanModel":
        """Build with fresh parameters.

        Coefficients start N(0, (0.1/sqrt(cardinality))^2); base weights,
        used only when base_path is on (default: spline layers), start
        Xavier-uniform. tau starts at 0 and dilation at 1 for wavelets.
        """
        if fmap is None:
            fmap = identity_map(widths[0])
        if fmap.width != widths[0]:
            raise ValueError(f"widths[0]={widths[0]} but map width is {fmap.width}")
        if base_path is None:
            base_path = spec.kind == "spline"
        if base_path and spec.kind == "wavelet_dog":
            # wavelet edges own tau/s already; the silu residual branch is
            # not wired through the wavelet kernels, so refuse rather than
            # carry dead parameters
            raise ValueError("base_path is not supported with wavelet_dog")
        rng = np.random.Generator(np.random.PCG64(seed))
        card = spec.cardinality
        layers = []
        for i_w, o_w in zip(widths[:-1], widths[1:]):
            coeff = rng.normal(0.0, 0.1 / np.sqrt(card), size=(o_w, i_w, card))
            bw = None
            if base_path:
                lim = np.sqrt(6.0 / (i_w + o_w))
                bw = rng.uniform(-lim, lim, size=(o_w, i_w))
            tau = s = None
            if spec.kind == "wavelet_dog":
                tau = np.zeros((o_w, i_w))
                s = np.ones((o_w, i_w))
            layers.append(KanLayer(i_w, o_w, spec, coeff, bw, tau, s))
        return cls(widths, spec, fmap, layers)

    @property
    def in_dim(self) -> int:
        return self.fmap.ndim

    @property
    def out_dim(self) -> int:
        return self.widths[-1]

    def param_count(self) -> int:
        return sum(layer.param_count() for layer in self.layers)

    def params(self):
        for li, layer in enumerate(self.layers):
            yield li, "coeff", layer.coeff
            if layer.base_weight is not None:
                yield li, "base_weight", layer.base_weight
            if layer.is_wavelet:
                yield li, "tau", layer.tau
                yield li, "s", layer.s

    # -- batched paths (training) ----------------------------------------

    def forward_batch(self, x: np.ndarray) -> np.ndarray:
        v = apply_batch(self.fmap, x)
        for layer in self.layers:
            v, _ = layer.forward(v, need_input_grad=False)
        return v

    def forward_cached(self, x: np.ndarray):
        v = apply_batch(self.fmap, x)
        caches = []
        for layer in self.layers:
            v, cache = layer.forward(v, need_input_grad=True)
            caches.append(cache)
        return v, caches

    def backward_cached(self, caches, ybar: np.ndarray) -> ParamGrads:
        grads = [None] * len(self.layers)
        bar = ybar
        for li in range(len(self.layers) - 1, -1, -1):
            need = li > 0
            bar, grads[li] = self.layers[li].backward(caches[li], bar, need)
        return ParamGrads(grads)

    def forward_jet_batch(self, x: np.ndarray, with_cache: bool = False):
        """Returns (V, G, H) of the outputs with respect to the raw input
        coordinates: V (N, out), G and H (N, out, in_dim)."""
        e0, e1, e2, src = apply_jet_batch(self.fmap, x)
        n, w = e0.shape
        k = self.fmap.ndim
        gv = np.zeros((n, w, k))
        hv = np.zeros((n, w, k))
        idx = np.arange(w)
        gv[:, idx, src] = e1
        hv[:, idx, src] = e2
        v = e0
        caches = []
        for li, layer in enumerate(self.layers):
            v, gv, hv, cache = layer.forward_jet(v, gv, hv, need_input_bars=(li > 0) and with_cache)
            caches.append(cache)
        if with_cache:
            return v, gv, hv, caches
        return v, gv, hv

    def backward_jet_batch(self, caches, vbar, gbar, hbar) -> ParamGrads:
        grads = [None] * len(self.layers)
        for li in range(len(self.layers) - 1, -1, -1):
            need = li > 0
            vbar, gbar, hbar, grads[li] = self.layers[li].backward_jet(
                caches[li], vbar, gbar, hbar, need)
        return ParamGrads(grads)

    # -- single-point contract surface -----------------------------------

    def forward(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(1, -1)
        v = apply_batch(self.fmap, x)
        for li, layer in enumerate(self.layers):
            v, _ = layer.forward(v, need_input_grad=False)
            if not np.all(np.isfinite(v)):
                raise FloatingPointError(f"non-finite activation after layer {li}")
        return v[0]

    def forward_jet(self, x):
        """Jets of every output at one point, as Jet2 objects over the raw
        input coordinates."""
        x = np.asarray(x, dtype=float).reshape(1, -1)
        v, g, h = self.forward_jet_batch(x)
        return [Jet2(v[0, j], g[0, j], h[0, j]) for j in range(self.out_dim)]

    def backward(self, x, upstream=None) -> ParamGrads:
        x = np.asarray(x, dtype=float).reshape(1, -1)
        y, caches = self.forward_cached(x)
        if upstream is None:
            upstream = np.ones(self.out_dim)
        ybar = np.asarray(upstream, dtype=float).reshape(1, -1)
        return self.backward_cached(caches, ybar)

    def backward_through_jets(self, x, channel="value", index=0, output=0,
                              upstream=1.0) -> ParamGrads:
        """Parameter gradients of one jet channel of one output.

        channel is "value", "grad" or "diag2"; index picks the raw input
        coordinate for the derivative channels.
        """
        x = np.asarray(x, dtype=float).reshape(1, -1)
        _, _, _, caches = self.forward_jet_batch(x, with_cache=True)
        m, k = self.out_dim, self.in_dim
        vbar = np.zeros((1, m))
        gbar = np.zeros((1, m, k))
        hbar = np.zeros((1, m, k))
        if channel == "value":
            vbar[0, output] = upstream
        elif channel == "grad":
            gbar[0, output, index] = upstream
        elif channel == "diag2":
            hbar[0, output, index] = upstream
        else:
            raise ValueError(f"unknown channel {channel!r}")
        return self.backward_jet_batch(caches, vbar, gbar, hbar)

    # -- persistence ------------------------------------------------------

    def save(self, path: str) -> None:
        """Checkpoint as JSON. Layer arrays are stored in declaration
        order: coeff, then base_weight, tau, s where present."""
        blob = {
            "widths": self.widths,
            "spec": self.spec.to_dict(),
            "map": self.fmap.to_dict(),
            "layers": [],
        }
        for layer in self.layers:
            entry = {"coeff": layer.coeff.tolist()}
            if layer.base_weight is not None:
                entry["base_weight"] = layer.base_weight.tolist()
            if layer.is_wavelet:
                entry["tau"] = layer.tau.tolist()
                entry["s"] = layer.s.tolist()
            blob["layers"].append(entry)
        with open(path, "w") as fh:
            json.dump(blob, fh)

    @classmethod
    def load(cls, path: str) -> "FekanModel":
        with open(path) as fh:
            blob = json.load(fh)
        spec = BasisSpec.from_dict(blob["spec"])
        fmap = FeatureMap.from_dict(blob["map"])
        widths = blob["widths"]
        layers = []
        for i_w, o_w, entry in zip(widths[:-1], widths[1:], blob["layers"]):
            coeff = np.asarray(entry["coeff"], dtype=float)
            bw = np.asarray(entry["base_weight"], dtype=float) if "base_weight" in entry else None
            tau = np.asarray(entry["tau"], dtype=float) if "tau" in entry else None
            s = np.asarray(entry["s"], dtype=float) if "s" in entry else None
            layers.append(KanLayer(i_w, o_w, spec, coeff, bw, tau, s))
        return cls(widths, spec, fmap, layers)
