"""Adam, training loops, multi-seed aggregation, phased boundary feeding.

Everything trains full-batch: collocation sets are fixed per run and the
paper-style per-iteration timing only makes sense without minibatching.
Divergence means a non-finite loss or a loss above 1e12; a diverged run
stops updating and is reported, never averaged into error statistics.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import physics as ph
from .model import FekanModel, ParamGrads
from .separable import SeparableModel

__all__ = [
    "AdamState", "TrainConfig", "adam_step", "is_diverged",
    "train_regression", "train_pinn", "train_separable",
    "train_lorenz_onestep", "train_lorenz_pi",
    "phase_schedule", "train_phased", "run_multiseed", "truncate_curves",
]

DIVERGENCE_CAP = 1e12


@dataclass
class AdamState:
    m: list
    v: list
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, arrays, lr=1e-3) -> "AdamState":
        return cls(m=[np.zeros_like(a) for a in arrays],
                   v=[np.zeros_like(a) for a in arrays], lr=lr)


def adam_step(params, grads, state: AdamState) -> AdamState:
    """Bias-corrected Adam update, in place on the parameter arrays."""
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return state


def is_diverged(loss: float) -> bool:
    return not np.isfinite(loss) or loss > DIVERGENCE_CAP


@dataclass
class TrainConfig:
    epochs: int = 1000
    lr: float = 1e-3
    log_every: int = 100
    early_stop: Optional[tuple] = None  # (patience, min improvement) on loss
    divergence_policy: str = "halt"  # halt | record
    lambdas: Optional[tuple] = None
    n_res: Optional[int] = None
    n_bc: Optional[int] = None
    n_ic: Optional[int] = None

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.divergence_policy not in ("halt", "record"):
            raise ValueError("divergence_policy must be 'halt' or 'record'")


def _record(records, epoch, loss, parts, rel_l2, elapsed, iters, diverged=False):
    records.append({
        "epoch": epoch,
        "loss": loss,
        "l_res": parts.get("l_res", 0.0),
        "l_bc": parts.get("l_bc", 0.0),
        "l_ic": parts.get("l_ic", 0.0),
        "rel_l2": rel_l2,
        "sec_per_iter": elapsed / max(iters, 1),
        "diverged": int(diverged),
    })


def _model_arrays(model):
    if isinstance(model, SeparableModel):
        return [arr for body in model.bodies for _, _, arr in body.params()]
    return [arr for _, _, arr in model.params()]


def _grad_arrays(grads):
    if isinstance(grads, ParamGrads):
        grads = [grads]
    out = []
    for pg in grads:
        for layer in pg.layers:
            for name in ("coeff", "base_weight", "tau", "s"):
                if name in layer:
                    out.append(layer[name])
    return out


def _loop(model, cfg: TrainConfig, loss_and_grads, eval_rel_l2):
    """Shared trainer skeleton: full-batch step, logging, divergence and
    optional early stopping on the training loss."""
    params = _model_arrays(model)
    state = AdamState.for_params(params, lr=cfg.lr)
    records = []
    t0 = time.perf_counter()
    best = np.inf
    stale = 0
    diverged_at = None
    for e in range(cfg.epochs):
        loss, parts, grads = loss_and_grads()
        if is_diverged(loss):
            # nothing recovers from non-finite parameters, so both policies
            # stop the loop; "record" only signals that the run should be
            # counted rather than treated as an error by the caller
            diverged_at = e
            _record(records, e, loss, parts, np.nan,
                    time.perf_counter() - t0, e + 1, diverged=True)
            break
        adam_step(params, _grad_arrays(grads), state)
        done = e + 1 == cfg.epochs
        if (e + 1) % cfg.log_every == 0 or done:
            rel = eval_rel_l2() if eval_rel_l2 is not None else np.nan
            _record(records, e + 1, loss, parts, rel,
                    time.perf_counter() - t0, e + 1)
        if cfg.early_stop is not None:
            patience, min_delta = cfg.early_stop
            if loss < best - min_delta:
                best, stale = loss, 0
            else:
                stale += 1
                if stale >= patience:
                    break
    return records, diverged_at


def train_regression(model: FekanModel, target, points, cfg: TrainConfig):
    """Full-batch MSE on fixed points. target is a callable on (N, d)
    points or a TargetFunction; outputs may be vector-valued."""
    x = np.asarray(points, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if isinstance(target, ph.TargetFunction):
        y = ph.target_eval(target, x[:, 0])
    else:
        y = np.asarray(target(x), dtype=float)
    y = y.reshape(len(x), -1)
    n = len(x)

    def loss_and_grads():
        pred, caches = model.forward_cached(x)
        err = pred - y
        loss = float(np.sum(err ** 2) / n)
        grads = model.backward_cached(caches, 2.0 * err / n)
        return loss, {"l_res": loss}, grads

    def eval_rel():
        return ph.relative_l2(model.forward_batch(x), y)

    records, _ = _loop(model, cfg, loss_and_grads, eval_rel)
    return model, records


def train_pinn(model: FekanModel, problem: ph.PdeProblem, cfg: TrainConfig, seed: int = 0,
               eval_set=None):
    """Physics-informed training on a fixed collocation sample."""
    batches = ph.sample_collocation(problem, seed, cfg.n_res, cfg.n_bc, cfg.n_ic)
    lam = cfg.lambdas if cfg.lambdas is not None else problem.weights
    if eval_set is None and problem.exact is not None:
        eval_set = problem.eval_set()

    def loss_and_grads():
        return ph.pinn_loss(model, problem, batches, lam)

    eval_rel = None
    if eval_set is not None:
        xe, ye = eval_set

        def eval_rel():
            return ph.relative_l2(model.forward_batch(xe)[:, 0], ye)

    records, _ = _loop(model, cfg, loss_and_grads, eval_rel)
    return model, records


def train_separable(model: SeparableModel, problem: ph.SeparableProblem,
                    cfg: TrainConfig, grids=None):
    if grids is None:
        grids = problem.grids()
    exact = problem.exact_grid(grids) if problem.exact_grid is not None else None
    lam = cfg.lambdas if cfg.lambdas is not None else problem.weights

    def loss_and_grads():
        return ph.separable_pinn_loss(model, problem, grids, lam)

    eval_rel = None
    if exact is not None:
        def eval_rel():
            return ph.relative_l2(model.forward_grid(grids), exact)

    records, _ = _loop(model, cfg, loss_and_grads, eval_rel)
    return model, records


def train_lorenz_onestep(model: FekanModel, trajectories, cfg: TrainConfig,
                         holdout=None, norm=None):
    """One-step state map: epoch e fits trajectory e mod count, full batch.
    Evaluation rolls the map out autoregressively from the holdout start.
    norm = (center, halfwidth) arrays mapping raw states into the model's
    working box; predictions are de-normalized before scoring."""
    if norm is None:
        norm = (np.array([0.0, 0.0, 25.0]), np.array([20.0, 25.0, 25.0]))
    c, w = norm

    def enc(s):
        return (s - c) / w

    def dec(s):
        return s * w + c

    data = [(enc(tr[:-1]), enc(tr[1:])) for tr in trajectories]
    params = _model_arrays(model)
    state = AdamState.for_params(params, lr=cfg.lr)
    records = []
    t0 = time.perf_counter()

    def rollout_rel():
        if holdout is None:
            return np.nan
        s = enc(np.asarray(holdout[0], dtype=float))
        pred = [s]
        for _ in range(len(holdout) - 1):
            s = model.forward_batch(s[None, :])[0]
            pred.append(s)
        return ph.relative_l2(dec(np.asarray(pred)), holdout)

    for e in range(cfg.epochs):
        x, y = data[e % len(data)]
        pred, caches = model.forward_cached(x)
        err = pred - y
        loss = float(np.sum(err ** 2) / len(x))
        if is_diverged(loss):
            _record(records, e, loss, {}, np.nan, time.perf_counter() - t0, e + 1, True)
            break
        adam_step(params, _grad_arrays(model.backward_cached(caches, 2.0 * err / len(x))), state)
        if (e + 1) % cfg.log_every == 0 or e + 1 == cfg.epochs:
            _record(records, e + 1, loss, {}, rollout_rel(), time.perf_counter() - t0, e + 1)
    return model, records


def train_lorenz_pi(model: FekanModel, problem: ph.LorenzPiProblem, cfg: TrainConfig,
                    seed: int = 0, epochs_per_window=None, n_res_window=50,
                    norm=None):
    """Sequential window training of t -> (x,y,z).

    Each window gets its own collocation points; its soft initial condition
    is the model's frozen prediction at the window start (the true initial
    state for the first window). Optimizer moments carry across windows.
    The model works in normalized time/state coordinates.
    """
    if norm is None:
        norm = (np.array([0.0, 0.0, 25.0]), np.array([20.0, 25.0, 25.0]))
    c, w = norm
    t_mid, t_half = problem.t_end / 2.0, problem.t_end / 2.0

    def enc_t(t):
        return (t - t_mid) / t_half

    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, 0x10))))
    windows = problem.windows
    if epochs_per_window is None:
        epochs_per_window = [cfg.epochs // len(windows)] * len(windows)
    params = _model_arrays(model)
    state = AdamState.for_params(params, lr=cfg.lr)
    records = []
    t_ref, traj_ref = problem.reference()
    t0 = time.perf_counter()
    total = 0
    loss, l_res, l_ic = np.nan, np.nan, np.nan

    target0 = (np.asarray(problem.ic) - c) / w
    for wi, (ta, tb) in enumerate(windows):
        ts = np.sort(rng.uniform(ta, tb, size=n_res_window))
        x = enc_t(ts)[:, None]
        x_ic = np.array([[enc_t(ta)]])
        if wi > 0:
            target0 = model.forward_batch(x_ic)[0]
        for _ in range(epochs_per_window[wi]):
            vm, gm, hm, caches = model.forward_jet_batch(x, with_cache=True)
            s_raw = vm * w + c
            ds_dt = gm[:, :, 0] * w / t_half
            res = ds_dt - problem.rhs(s_raw)
            jac = problem.rhs_jacobian(s_raw)
            l_res = float(np.mean(res ** 2))
            v_ic = model.forward_batch(x_ic)
            e_ic = v_ic[0] - target0
            l_ic = float(np.sum(e_ic ** 2))
            loss = l_res + l_ic
            if is_diverged(loss):
                _record(records, total, loss, {"l_res": l_res, "l_ic": l_ic},
                        np.nan, time.perf_counter() - t0, total + 1, True)
                return model, records
            scale = 2.0 / res.size
            vbar = -scale * np.einsum("nm,nmj,j->nj", res, jac, w)
            gbar = (scale * res * w / t_half)[:, :, None]
            grads = model.backward_jet_batch(caches, vbar, gbar, np.zeros_like(gbar))
            _, ci = model.forward_cached(x_ic)
            grads.add_(model.backward_cached(ci, (2.0 * e_ic)[None, :]))
            adam_step(params, _grad_arrays(grads), state)
            total += 1
            if total % cfg.log_every == 0:
                pred = model.forward_batch(enc_t(t_ref[::100])[:, None]) * w + c
                rel = ph.relative_l2(pred, traj_ref[::100])
                _record(records, total, loss, {"l_res": l_res, "l_ic": l_ic},
                        rel, time.perf_counter() - t0, total)
    pred = model.forward_batch(enc_t(t_ref[::100])[:, None]) * w + c
    rel = ph.relative_l2(pred, traj_ref[::100])
    _record(records, total, loss, {"l_res": l_res, "l_ic": l_ic},
            rel, time.perf_counter() - t0, max(total, 1))
    return model, records


# -- phased boundary feeding ------------------------------------------------

def phase_schedule(problem: ph.PdeProblem, seed: int = 0, n_bc=None,
                   epochs=(20000, 20000, 20000, 45000)):
    """Four phases over the four faces of a rectangle: phase i carries the
    full sample of face i plus exactly one anchor point on every other
    face. Anchors are deterministic per seed."""
    if problem.d != 2 or len(problem.bc_faces) != 4:
        raise ValueError("phase schedule needs a rectangular 2-D problem with 4 faces")
    n_bc = n_bc or problem.n_bc
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, 0xFACE))))
    full = [ph._face_points(rng, problem, d, s, n_bc) for d, s in problem.bc_faces]
    anchors = [ph._face_points(rng, problem, d, s, 1) for d, s in problem.bc_faces]
    phases = []
    for i in range(4):
        parts = [full[i]] + [anchors[j] for j in range(4) if j != i]
        phases.append({
            "bc": np.concatenate(parts, axis=0),
            "active_face": i,
            "epochs": epochs[i],
        })
    return phases


def face_mse(model: FekanModel, problem: ph.PdeProblem, n_dense: int = 200):
    """Dense per-face boundary MSE, the retention metric."""
    out = []
    for dim, side in problem.bc_faces:
        x = np.empty((n_dense, problem.d))
        free = 1 - dim
        x[:, free] = np.linspace(problem.lo[free], problem.hi[free], n_dense)
        x[:, dim] = problem.hi[dim] if side else problem.lo[dim]
        err = model.forward_batch(x)[:, 0] - problem.bc_value(x)
        out.append(float(np.mean(err ** 2)))
    return out


def train_phased(model: FekanModel, problem: ph.PdeProblem, cfg: TrainConfig,
                 seed: int = 0, epochs=None):
    """Phase-wise boundary introduction. Residual batch is fixed across
    phases; optimizer moments carry over. Returns per-phase records and the
    retention table (per-face MSE at the end of every phase)."""
    if epochs is None:
        epochs = (20000, 20000, 20000, 45000)
    phases = phase_schedule(problem, seed=seed, n_bc=cfg.n_bc, epochs=epochs)
    batches = ph.sample_collocation(problem, seed, cfg.n_res, cfg.n_bc, cfg.n_ic)
    lam = cfg.lambdas if cfg.lambdas is not None else problem.weights
    params = _model_arrays(model)
    state = AdamState.for_params(params, lr=cfg.lr)
    records = []
    retention = []
    t0 = time.perf_counter()
    total = 0
    for phase in phases:
        b = {"res": batches["res"], "bc": phase["bc"]}
        for _ in range(phase["epochs"]):
            loss, parts, grads = ph.pinn_loss(model, problem, b, lam)
            if is_diverged(loss):
                _record(records, total, loss, parts, np.nan,
                        time.perf_counter() - t0, total + 1, True)
                return model, records, retention
            adam_step(params, _grad_arrays(grads), state)
            total += 1
            if total % cfg.log_every == 0:
                _record(records, total, loss, parts, np.nan,
                        time.perf_counter() - t0, total)
        retention.append(face_mse(model, problem))
    return model, records, retention


# -- multi-seed aggregation ---------------------------------------------------

def run_multiseed(run_fn, seeds):
    """run_fn(seed) -> dict with at least rel_l2 (final) and diverged flag,
    optionally records. Aggregates mean/std (population, over completed
    runs only) and the divergence count."""
    per_seed = []
    for s in seeds:
        out = run_fn(s)
        out["seed"] = s
        per_seed.append(out)
    completed = [r["rel_l2"] for r in per_seed if not r.get("diverged")]
    diverged = sum(1 for r in per_seed if r.get("diverged"))
    summary = {
        "n_seeds": len(seeds),
        "diverged_count": diverged,
        "per_seed": per_seed,
    }
    if completed:
        arr = np.asarray(completed, dtype=float)
        summary["rel_l2_mean"] = float(arr.mean())
        summary["rel_l2_std"] = float(arr.std())  # population convention
    else:
        summary["rel_l2_mean"] = None
        summary["rel_l2_std"] = None
    return summary


def truncate_curves(records_list):
    """For plotting across seeds with divergences: cut every record stream
    at the earliest divergence epoch observed in any stream."""
    cut = None
    for recs in records_list:
        for r in recs:
            if r["diverged"]:
                cut = r["epoch"] if cut is None else min(cut, r["epoch"])
                break
    if cut is None:
        return records_list
    return [[r for r in recs if r["epoch"] <= cut] for recs in records_list]
