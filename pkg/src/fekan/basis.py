"""The seven univariate basis families.

Each family evaluates its basis vector phi together with analytic
derivatives up to third order. Third derivatives look extravagant but are
required: reverse-mode differentiation *through* a second-order jet forward
pass touches d3phi of every hidden layer.

Batched evaluation (`eval_stack`) is the workhorse used by the layer
engine; `eval_basis`/`eval_basis_jet` are the scalar views of the same
arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from .jets import Jet2, jet_univariate

__all__ = [
    "BasisSpec",
    "BasisValues",
    "KINDS",
    "CLAMPED_KINDS",
    "spline_knots",
    "eval_basis",
    "eval_basis_jet",
    "eval_stack",
    "psi_stack",
]

KINDS = ("spline", "fourier", "chebyshev", "rbf", "relu", "hrelu", "wavelet_dog")

# Compact-support families clamp out-of-domain inputs to the domain edge;
# hidden activations may wander outside [-1, 1] and must stay NaN-free.
CLAMPED_KINDS = frozenset({"spline", "rbf", "relu", "hrelu"})


@dataclass(frozen=True)
class BasisSpec:
    """One basis family plus its internal parameters.

    k: polynomial order (spline, chebyshev, relu, hrelu)
    G: grid size (spline, relu, hrelu)
    N: term count (fourier, cardinality 2N+1)
    N_f: center count (rbf)
    n: outer power (hrelu, n >= 2)
    """

    kind: str
    k: int = 0
    G: int = 0
    N: int = 0
    N_f: int = 0
    n: int = 0
    domain_lo: float = -1.0
    domain_hi: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unsupported basis kind {self.kind!r}")
        if not self.domain_lo < self.domain_hi:
            raise ValueError("domain_lo must be < domain_hi")
        kind = self.kind
        if kind == "spline" and (self.G < 1 or self.k < 1):
            raise ValueError("spline needs G >= 1 and k >= 1")
        if kind == "fourier" and self.N < 1:
            raise ValueError("fourier needs N >= 1")
        if kind == "chebyshev" and self.k < 1:
            raise ValueError("chebyshev needs k >= 1")
        if kind == "rbf" and self.N_f < 2:
            raise ValueError("rbf needs N_f >= 2")
        if kind in ("relu", "hrelu") and (self.G < 1 or self.k < 1):
            raise ValueError(f"{kind} needs G >= 1 and k >= 1")
        if kind == "relu" and self.n not in (0, 2):
            raise ValueError("relu fixes n = 2; use hrelu for other powers")
        if kind == "hrelu" and self.n < 2:
            raise ValueError("hrelu needs n >= 2")

    @property
    def cardinality(self) -> int:
        kind = self.kind
        if kind == "spline":
            return self.G + self.k
        if kind == "fourier":
            return 2 * self.N + 1
        if kind == "chebyshev":
            return self.k + 1
        if kind == "rbf":
            return self.N_f
        if kind in ("relu", "hrelu"):
            return self.G + self.k
        return 1  # wavelet_dog: one mother wavelet per edge

    @property
    def power(self) -> int:
        """Outer exponent of the relu-family profile."""
        return 2 if self.kind == "relu" else self.n

    # --- constructors used by presets ---

    @classmethod
    def spline(cls, k=3, G=5, lo=-1.0, hi=1.0):
        return cls("spline", k=k, G=G, domain_lo=lo, domain_hi=hi)

    @classmethod
    def fourier(cls, N=5, lo=-1.0, hi=1.0):
        return cls("fourier", N=N, domain_lo=lo, domain_hi=hi)

    @classmethod
    def chebyshev(cls, k=4):
        return cls("chebyshev", k=k)

    @classmethod
    def rbf(cls, N_f=8, lo=-1.0, hi=1.0):
        return cls("rbf", N_f=N_f, domain_lo=lo, domain_hi=hi)

    @classmethod
    def relu(cls, k=2, G=5, lo=-1.0, hi=1.0):
        return cls("relu", k=k, G=G, n=2, domain_lo=lo, domain_hi=hi)

    @classmethod
    def hrelu(cls, k=2, G=5, n=3, lo=-1.0, hi=1.0):
        return cls("hrelu", k=k, G=G, n=n, domain_lo=lo, domain_hi=hi)

    @classmethod
    def wavelet_dog(cls):
        return cls("wavelet_dog")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "BasisSpec":
        return cls(**d)


@dataclass
class BasisValues:
    phi: np.ndarray
    dphi: np.ndarray
    d2phi: np.ndarray


def spline_knots(G: int, k: int, lo: float, hi: float) -> np.ndarray:
    """Uniform knots on [lo, hi], extended k knots each side; length G+2k+1."""
    if G < 1 or k < 1:
        raise ValueError("need G >= 1 and k >= 1")
    if not lo < hi:
        raise ValueError("need lo < hi")
    h = (hi - lo) / G
    return lo + h * (np.arange(G + 2 * k + 1) - k)


def eval_basis(spec: BasisSpec, x: float) -> BasisValues:
    """Scalar evaluation: phi, dphi, d2phi at one point."""
    if not np.isfinite(x):
        raise ValueError(f"non-finite input {x}")
    stack = eval_stack(spec, np.asarray([float(x)]), order=2)
    return BasisValues(stack[0][0], stack[1][0], stack[2][0])


def eval_basis_jet(spec: BasisSpec, x: Jet2):
    """Lift eval_basis through the chain rule; one jet per basis function."""
    vals = eval_basis(spec, x.value)
    out = []
    for b in range(vals.phi.size):
        p0, p1, p2 = vals.phi[b], vals.dphi[b], vals.d2phi[b]
        out.append(jet_univariate(x, lambda _v, p=p0: p, lambda _v, p=p1: p, lambda _v, p=p2: p))
    return out


def eval_stack(spec: BasisSpec, x: np.ndarray, order: int = 2):
    """Evaluate phi and derivatives 1..order (order <= 3), batched.

    Returns a list of order+1 arrays shaped x.shape + (cardinality,).
    Out-of-domain points of clamped families evaluate at the clamped
    location with zero derivatives. Non-finite inputs yield NaN rows
    rather than raising; the training loop owns divergence handling.
    """
    if order < 0 or order > 3:
        raise ValueError("order must be in 0..3")
    x = np.asarray(x, dtype=float)
    shape = x.shape
    xf = x.reshape(-1)
    kind = spec.kind

    if kind in CLAMPED_KINDS:
        xc = np.clip(xf, spec.domain_lo, spec.domain_hi)
        inside = (xf >= spec.domain_lo) & (xf <= spec.domain_hi)
    else:
        xc = xf
        inside = None

    if kind == "spline":
        stacks = _spline_stack(spec, xc, order)
    elif kind == "fourier":
        stacks = _fourier_stack(spec, xc, order)
    elif kind == "chebyshev":
        stacks = _chebyshev_stack(spec, xc, order)
    elif kind == "rbf":
        stacks = _rbf_stack(spec, xc, order)
    elif kind in ("relu", "hrelu"):
        stacks = _relu_stack(spec, xc, order)
    else:
        stacks = psi_stack(xc[:, None], order)

    if inside is not None and order >= 1:
        # Clamped evaluation is constant outside the domain.
        dead = ~inside
        if dead.any():
            for r in range(1, order + 1):
                stacks[r][dead, :] = 0.0
    return [s.reshape(shape + (spec.cardinality,)) for s in stacks]


def _spline_stack(spec, xc, order):
    """Cox-de Boor triangle on the knot window containing each point.

    Only the k+1 bases supported on a point's interval are nonzero, so the
    recursion runs on that window and the result is scattered into the
    dense (P, G+k) arrays the layer contractions consume. Derivative order
    r uses the degree k-r window through the standard difference identity.
    """
    G, k = spec.G, spec.k
    lo, hi = spec.domain_lo, spec.domain_hi
    t = spline_knots(G, k, lo, hi)
    h = (hi - lo) / G
    P = xc.size

    safe = np.where(np.isfinite(xc), xc, lo)
    mu = k + np.clip(np.floor((safe - lo) / h).astype(np.int64), 0, G - 1)

    # windows[m][:, a] = B_{mu-m+a, m}(x), a = 0..m
    windows = [np.ones((P, 1))]
    for m in range(1, k + 1):
        old = windows[-1]
        new = np.zeros((P, m + 1))
        for a in range(m + 1):
            i = mu - m + a
            if a > 0:
                left = (xc - t[i]) / (t[i + m] - t[i])
                new[:, a] += left * old[:, a - 1]
            if a < m:
                right = (t[i + m + 1] - xc) / (t[i + m + 1] - t[i + 1])
                new[:, a] += right * old[:, a]
        windows.append(new)

    binom = {1: [1.0, -1.0], 2: [1.0, -2.0, 1.0], 3: [1.0, -3.0, 3.0, -1.0]}
    cols = mu[:, None] - k + np.arange(k + 1)[None, :]
    rows = np.arange(P)[:, None]
    out = []
    for r in range(order + 1):
        dense = np.zeros((P, G + k))
        if r == 0:
            win = windows[k]
        elif r > k:
            out.append(dense)
            continue
        else:
            low = windows[k - r]  # degree k-r window, positions 0..k-r
            win = np.zeros((P, k + 1))
            scale = 1.0
            for m in range(k, k - r, -1):
                scale *= m / (m * h)  # = 1/h per derivative order, kept in Cox-de Boor form
            for a in range(k + 1):
                acc = np.zeros(P)
                for s, c in enumerate(binom[r]):
                    pos = a + s - r
                    if 0 <= pos <= k - r:
                        acc += c * low[:, pos]
                win[:, a] = acc * scale
        dense[rows, cols] = win
        out.append(dense)
    return out


def _fourier_stack(spec, xc, order):
    N = spec.N
    span = spec.domain_hi - spec.domain_lo
    freqs = np.arange(1, N + 1) * np.pi * (2.0 / span)
    P = xc.size
    arg = xc[:, None] * freqs[None, :]
    c, s = np.cos(arg), np.sin(arg)
    out = []
    for r in range(order + 1):
        dense = np.zeros((P, 2 * N + 1))
        if r == 0:
            dense[:, 0] = 1.0
        fr = freqs ** r
        # d/dx cycles cos -> -sin -> -cos -> sin; sin -> cos -> -sin -> -cos
        cos_cycle = [c, -s, -c, s][r % 4]
        sin_cycle = [s, c, -s, -c][r % 4]
        dense[:, 1::2] = fr * cos_cycle
        dense[:, 2::2] = fr * sin_cycle
        out.append(dense)
    return out


def _chebyshev_stack(spec, xc, order):
    """cos(j arccos(tanh x)) and chain-rule derivatives.

    The chain is evaluated in factored form: d(arccos)/dt = -1/sqrt(1-t^2)
    times dt/dx = 1-t^2. In float64 tanh saturates to exactly +-1 around
    |x| ~ 19, where the factors become inf*0 = NaN. That is the documented
    behavior of this construction under gradient training and the
    divergence experiments depend on it, so the factors are not simplified.
    """
    kdeg = spec.k
    t = np.tanh(xc)
    theta = np.arccos(t)
    jj = np.arange(kdeg + 1)
    ang = theta[:, None] * jj[None, :]
    cosang, sinang = np.cos(ang), np.sin(ang)
    out = [cosang.copy()]
    if order == 0:
        return out

    with np.errstate(divide="ignore", invalid="ignore"):
        tp = 1.0 - t * t
        tpp = -2.0 * t * tp
        tppp = tp * (6.0 * t * t - 2.0)
        om = 1.0 - t * t
        w1 = -1.0 / np.sqrt(om)
        w2 = -t / om ** 1.5
        w3 = -(1.0 + 2.0 * t * t) / om ** 2.5
        th1 = w1 * tp
        th2 = w2 * tp * tp + w1 * tpp
        th3 = w3 * tp ** 3 + 3.0 * w2 * tp * tpp + w1 * tppp

        dphi = -jj * sinang  # d/dtheta
        d2phi = -(jj ** 2) * cosang
        d3phi = (jj ** 3) * sinang

        out.append(dphi * th1[:, None])
        if order >= 2:
            out.append(d2phi * th1[:, None] ** 2 + dphi * th2[:, None])
        if order >= 3:
            out.append(
                d3phi * th1[:, None] ** 3
                + 3.0 * d2phi * (th1 * th2)[:, None]
                + dphi * th3[:, None]
            )
    return out


def _rbf_stack(spec, xc, order):
    centers = np.linspace(spec.domain_lo, spec.domain_hi, spec.N_f)
    h = (spec.domain_hi - spec.domain_lo) / (spec.N_f - 1)
    z = (xc[:, None] - centers[None, :]) / h
    e = np.exp(-z * z)
    out = [e]
    if order >= 1:
        out.append(-2.0 * z * e / h)
    if order >= 2:
        out.append((4.0 * z * z - 2.0) * e / (h * h))
    if order >= 3:
        out.append((12.0 * z - 8.0 * z ** 3) * e / (h ** 3))
    return out


def _relu_stack(spec, xc, order):
    """Overlapping squared-relu phases; hrelu swaps the outer power."""
    G, k, n = spec.G, spec.k, spec.power
    lo, hi = spec.domain_lo, spec.domain_hi
    span = hi - lo
    b = np.arange(G + k)
    s_b = lo + (b - k) * span / G
    e_b = s_b + (k + 1) * span / G
    m = 4.0 / (e_b - s_b) ** 2

    X = xc[:, None]
    active = (X >= s_b[None, :]) & (X <= e_b[None, :])
    p = np.where(active, (X - s_b) * (e_b - X) * m, 0.0)
    p1 = np.where(active, m * (e_b + s_b - 2.0 * X), 0.0)
    p2 = np.where(active, -2.0 * m * np.ones_like(X), 0.0)

    out = [p ** n]
    if order >= 1:
        out.append(n * p ** (n - 1) * p1)
    if order >= 2:
        out.append(n * (n - 1) * p ** (n - 2) * p1 ** 2 + n * p ** (n - 1) * p2)
    if order >= 3:
        third = 3.0 * n * (n - 1) * p ** (n - 2) * p1 * p2
        if n >= 3:
            third = third + n * (n - 1) * (n - 2) * p ** (n - 3) * p1 ** 3
        out.append(third)
    return out


def psi_stack(z: np.ndarray, order: int = 2):
    """Derivative-of-Gaussian mother wavelet psi(z) = -z exp(-z^2/2).

    Returns [psi, psi', ...] up to `order`, shaped like z. Scale and
    translation live on the model edges, so this sees already-normalized
    arguments.
    """
    e = np.exp(-0.5 * z * z)
    out = [-z * e]
    if order >= 1:
        out.append((z * z - 1.0) * e)
    if order >= 2:
        out.append(z * (3.0 - z * z) * e)
    if order >= 3:
        out.append((z ** 4 - 6.0 * z * z + 3.0) * e)
    return out
