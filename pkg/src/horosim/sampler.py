"""Markov chains for the t-field marginal ``exp(-E(t))``.

Two kernels, both followed by an exact global-shift move:

``Kernel.GIBBS``
    Draw s exactly from its Gaussian conditional, then Metropolis-update
    every t_i under the joint (t, s) density, colour class by colour class
    (sites in one class share no bond, so a class is updated at once).

``Kernel.LANGEVIN``
    Metropolis-adjusted Langevin proposal on the marginal, drift from
    ``grad_effective_action``.

The global move maps ``(t, s) -> (t + g, exp(-g) s)`` with symmetric
Gaussian ``g``.  It is the one direction the local updates cannot move
through quickly: at h = 0 it is an exact symmetry, so only the h-terms
(and the Jacobian of the s rescaling) enter its acceptance ratio.

Random numbers come from PCG64.  Chain ``k`` of a run with seed ``seed``
uses ``np.random.SeedSequence(seed).spawn(num_chains)[k]``.  Step sizes are
adapted only during burn-in and frozen afterwards.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ObservableError
from .lattice import LatticeShape
from .model import Ensemble, ModelParams, effective_action, effective_action_and_grad
from .sfield import SFieldGaussian
from .stats import Estimate, batch_means, merge_estimates

TARGET_ACCEPT = 0.55


class Kernel(str, enum.Enum):
    GIBBS = "gibbs"
    LANGEVIN = "langevin"


@dataclass(frozen=True)
class ChainConfig:
    num_sweeps: int = 20000
    burn_in: int = 2000
    step_size: float = 0.5
    seed: int = 0
    kernel: Kernel = Kernel.GIBBS
    thin: int = 1
    shift_step: float = 0.5
    adapt: bool = True

    def __post_init__(self):
        object.__setattr__(self, "kernel", Kernel(self.kernel))
        if not 0 <= self.burn_in < self.num_sweeps:
            raise ValueError(f"need 0 <= burn_in < num_sweeps, got {self.burn_in}, {self.num_sweeps}")
        if not self.step_size > 0 or not self.shift_step > 0:
            raise ValueError("step sizes must be positive")
        if self.thin < 1:
            raise ValueError(f"thin must be >= 1, got {self.thin}")


def chain_rng(seed: int, index: int = 0, num_chains: int = 1) -> np.random.Generator:
    child = np.random.SeedSequence(int(seed)).spawn(num_chains)[index]
    return np.random.Generator(np.random.PCG64(child))


def sample_s_given_t(t, params: ModelParams, shape: LatticeShape, rng, size: int | None = None) -> np.ndarray:
    """Exact draw(s) of s from its Gaussian conditional at fixed t."""
    return SFieldGaussian(np.asarray(t, dtype=float), shape, params).sample(rng, size)


# ---------------------------------------------------------------- local energies


def local_energy(sites, x, t, s, params: ModelParams, shape: LatticeShape) -> np.ndarray:
    """Part of ``-log p(t, s)`` that depends on ``t_i = x`` for each i in ``sites``.

    Neighbours of a site are read from ``t`` and ``s``; infinite energies
    (overflow) are returned as ``inf``.
    """
    nbr, mask = shape.neighbor_table
    nb = nbr[sites]
    m = mask[sites]
    tj = t[nb]
    ds2 = (s[sites][:, None] - s[nb]) ** 2
    with np.errstate(over="ignore", invalid="ignore"):
        bond = np.cosh(x[:, None] - tj) + 0.5 * ds2 * np.exp(x[:, None] + tj)
        e = params.beta * np.where(m, bond, 0.0).sum(axis=1) + params.h * np.cosh(x) - x
        if params.ensemble is Ensemble.HMASS:
            e = e + 0.5 * params.h * s[sites] ** 2 * np.exp(x)
    return np.where(np.isnan(e), np.inf, e)


def shift_log_ratio(gamma: float, t, s, params: ModelParams) -> float:
    """Log acceptance ratio of ``(t, s) -> (t + gamma, exp(-gamma) s)``, Jacobian included."""
    n = len(t)
    with np.errstate(over="ignore", invalid="ignore"):
        d_site = params.h * np.sum(np.cosh(t + gamma) - np.cosh(t))
        if params.ensemble is Ensemble.HMASS:
            d_site += 0.5 * params.h * np.sum(s * s * np.exp(t)) * (math.exp(-gamma) - 1.0)
            s_dim = n
        else:
            s_dim = n - 1
    out = -d_site + n * gamma - s_dim * gamma
    return out if np.isfinite(out) else -np.inf


def marginal_shift_log_ratio(gamma: float, t, params: ModelParams, shape: LatticeShape) -> float:
    """Same move on the marginal alone: ``E(t) - E(t + gamma)``."""
    if params.ensemble is Ensemble.DELTA:
        with np.errstate(over="ignore", invalid="ignore"):
            out = gamma - params.h * np.sum(np.cosh(t + gamma) - np.cosh(t))
        return out if np.isfinite(out) else -np.inf
    return effective_action(t, params, shape) - effective_action(t + gamma, params, shape)


def langevin_log_ratio(t, t_new, e_old, g_old, e_new, g_new, step: float) -> float:
    """MALA log acceptance ratio; zero for a null proposal."""
    eps2 = step * step

    def log_q(to, frm, g):
        d = to - frm + 0.5 * eps2 * g
        return -float(d @ d) / (2.0 * eps2)

    return -(e_new - e_old) + log_q(t, t_new, g_new) - log_q(t_new, t, g_old)


# ---------------------------------------------------------------- observables


@dataclass
class ChainState:
    t: np.ndarray
    s: np.ndarray
    params: ModelParams
    shape: LatticeShape
    gauss: SFieldGaussian | None = None
    _c00: float | None = None

    @property
    def c00(self) -> float:
        """``<s_0^2>`` given t (the s-covariance at the origin)."""
        if self._c00 is None:
            if self.gauss is None:
                self.gauss = SFieldGaussian(self.t, self.shape, self.params)
            self._c00 = self.gauss.variance(0)
        return self._c00


def _theorem1(st: ChainState) -> float:
    t0 = st.t[0]
    c = st.c00
    ch, e = math.cosh(t0), math.exp(t0)
    return 4 * ch * ch + 4 * ch * e * c + 3 * e * e * c * c


def _theorem1_raw(st: ChainState) -> float:
    return (2 * math.cosh(st.t[0]) + st.s[0] ** 2 * math.exp(st.t[0])) ** 2


OBSERVABLES = {
    "t0": lambda st: float(st.t[0]),
    "sinh_t0": lambda st: math.sinh(st.t[0]),
    "exp_t0": lambda st: math.exp(st.t[0]),
    "t_mean": lambda st: float(st.t.mean()),
    "ward": lambda st: float(st.params.h * np.sinh(st.t).sum()),
    "theorem1": _theorem1,
    "theorem1_raw": _theorem1_raw,
    "s0_sq": lambda st: st.c00,
    "s0_sq_raw": lambda st: float(st.s[0] ** 2),
    "s0_4_wick": lambda st: 3.0 * st.c00**2,
    "s0_4_raw": lambda st: float(st.s[0] ** 4),
    "dinv00": lambda st: st.c00,
    "dinv00_sq": lambda st: st.c00**2,
}
"""Per-sweep observables; ``theorem1`` integrates s_0 analytically."""


# ---------------------------------------------------------------- the chain


@dataclass
class AcceptanceStats:
    proposed: int = 0
    accepted: int = 0

    @property
    def rate(self) -> float:
        return self.accepted / self.proposed if self.proposed else float("nan")


class Chain:
    """A single Markov chain; strictly sequential, owns its RNG and state."""

    def __init__(self, params: ModelParams, shape: LatticeShape, config: ChainConfig, rng=None, t0=None):
        if params.ensemble is Ensemble.DELTA and params.h == 0:
            raise ValueError("the delta-constrained marginal is not normalizable at h = 0")
        self.params = params
        self.shape = shape
        self.config = config
        self.rng = rng if rng is not None else chain_rng(config.seed)
        n = shape.num_sites
        self.t = np.zeros(n) if t0 is None else np.array(t0, dtype=float)
        self.s = np.zeros(n)
        self.step = float(config.step_size)
        self.shift_step = float(config.shift_step)
        self.local = AcceptanceStats()
        self.shift = AcceptanceStats()
        self.sweeps_done = 0
        self.proposal_log: list | None = None
        self._eg = None  # cached (E, grad) for the Langevin kernel

    # -- kernels

    def _gibbs_sites(self) -> None:
        t, s = self.t, self.s
        for cls in self.shape.color_classes:
            x_old = t[cls]
            x_new = x_old + self.step * self.rng.standard_normal(len(cls))
            e_old = local_energy(cls, x_old, t, s, self.params, self.shape)
            e_new = local_energy(cls, x_new, t, s, self.params, self.shape)
            log_a = -(e_new - e_old)
            u = self.rng.random(len(cls))
            acc = np.log(u) < log_a
            if self.proposal_log is not None:
                for k, site in enumerate(cls):
                    self.proposal_log.append((int(site), t.copy(), s.copy(), float(x_new[k]), float(log_a[k])))
            t[cls] = np.where(acc, x_new, x_old)
            self.local.proposed += len(cls)
            self.local.accepted += int(acc.sum())

    def _langevin(self) -> bool:
        if self._eg is None:
            self._eg = effective_action_and_grad(self.t, self.params, self.shape)
        e_old, g_old = self._eg
        eps = self.step
        prop = self.t - 0.5 * eps * eps * g_old + eps * self.rng.standard_normal(len(self.t))
        try:
            e_new, g_new = effective_action_and_grad(prop, self.params, self.shape)
            log_a = langevin_log_ratio(self.t, prop, e_old, g_old, e_new, g_new, eps)
        except (ArithmeticError, np.linalg.LinAlgError):
            log_a = -np.inf
        acc = math.log(self.rng.random()) < log_a
        if acc:
            self.t = prop
            self._eg = (e_new, g_new)
        self.local.proposed += 1
        self.local.accepted += int(acc)
        return acc

    def _global_shift(self) -> None:
        gamma = self.shift_step * self.rng.standard_normal()
        if self.config.kernel is Kernel.GIBBS:
            log_a = shift_log_ratio(gamma, self.t, self.s, self.params)
        else:
            log_a = marginal_shift_log_ratio(gamma, self.t, self.params, self.shape)
        acc = math.log(self.rng.random()) < log_a
        if acc:
            self.t = self.t + gamma
            self.s = self.s * math.exp(-gamma)
            self._eg = None
        self.shift.proposed += 1
        self.shift.accepted += int(acc)

    def sweep(self, gauss: SFieldGaussian | None = None) -> None:
        """One full update of the state."""
        if self.config.kernel is Kernel.GIBBS:
            if gauss is None:
                gauss = SFieldGaussian(self.t, self.shape, self.params)
            self.s = gauss.sample(self.rng)
            self._gibbs_sites()
        else:
            self._langevin()
        self._global_shift()
        self.sweeps_done += 1

    def _adapt(self, k: int) -> None:
        rate = 1.0 / (k + 10) ** 0.6
        if self.local.proposed:
            self.step *= math.exp(rate * (self.local.rate - TARGET_ACCEPT))
        if self.shift.proposed:
            self.shift_step *= math.exp(rate * (self.shift.rate - 0.5))

    def run(self, observables=("t0", "ward", "theorem1"), store_fields: bool = False, trace_path=None):
        """Run burn-in plus sampling; returns a ``ChainResult``."""
        names = list(observables)
        unknown = [o for o in names if o not in OBSERVABLES]
        if unknown:
            raise ValueError(f"unknown observables {unknown}; available: {sorted(OBSERVABLES)}")
        cfg = self.config
        n_keep = (cfg.num_sweeps - cfg.burn_in + cfg.thin - 1) // cfg.thin
        traces = {o: np.empty(n_keep) for o in names}
        fields = np.empty((n_keep, self.shape.num_sites)) if store_fields else None
        kept = 0
        for k in range(cfg.num_sweeps):
            if k == cfg.burn_in:
                self.local = AcceptanceStats()
                self.shift = AcceptanceStats()
            record = k >= cfg.burn_in and (k - cfg.burn_in) % cfg.thin == 0
            gauss = None
            if cfg.kernel is Kernel.GIBBS or record:
                gauss = SFieldGaussian(self.t, self.shape, self.params)
            if record:
                if cfg.kernel is Kernel.LANGEVIN:
                    self.s = gauss.sample(self.rng)
                st = ChainState(self.t, self.s, self.params, self.shape, gauss)
                for o in names:
                    v = OBSERVABLES[o](st)
                    if not math.isfinite(v):
                        raise ObservableError(o, k)
                    traces[o][kept] = v
                if fields is not None:
                    fields[kept] = self.t
                kept += 1
            self.sweep(gauss if cfg.kernel is Kernel.GIBBS else None)
            if cfg.adapt and k < cfg.burn_in:
                self._adapt(k)
                if (k + 1) % 50 == 0:
                    self.local = AcceptanceStats()
                    self.shift = AcceptanceStats()
        result = ChainResult(
            estimates={o: batch_means(traces[o]) for o in names},
            traces=traces,
            fields=fields,
            acceptance=self.local.rate,
            shift_acceptance=self.shift.rate,
            step_size=self.step,
            shift_step=self.shift_step,
            config=cfg,
        )
        if trace_path is not None:
            write_trace(trace_path, result, cfg)
        return result


@dataclass
class ChainResult:
    estimates: dict[str, Estimate]
    traces: dict[str, np.ndarray]
    fields: np.ndarray | None
    acceptance: float
    shift_acceptance: float
    step_size: float
    shift_step: float
    config: ChainConfig
    extra: dict = field(default_factory=dict)

    def diagnostics(self) -> dict:
        return {
            "acceptance": self.acceptance,
            "shift_acceptance": self.shift_acceptance,
            "step_size": self.step_size,
            "shift_step": self.shift_step,
            "tau_int": {k: e.tau_int for k, e in self.estimates.items()},
        }


def mcmc_step_t(t, params: ModelParams, shape: LatticeShape, config: ChainConfig, rng, s=None):
    """One sweep from ``t``; returns ``(t_new, accepted)``.

    ``accepted`` is True when any proposal inside the sweep was taken.
    """
    chain = Chain(params, shape, config, rng=rng, t0=t)
    if s is not None:
        chain.s = np.array(s, dtype=float)
    chain.sweep()
    return chain.t, bool(chain.local.accepted or chain.shift.accepted)


def run_chain(params: ModelParams, shape: LatticeShape, config: ChainConfig, observables=("t0", "ward", "theorem1"), store_fields=False, trace_path=None):
    return Chain(params, shape, config).run(observables, store_fields=store_fields, trace_path=trace_path)


def _run_one(args):
    params, shape, config, index, num_chains, observables, store_fields = args
    rng = chain_rng(config.seed, index, num_chains)
    return Chain(params, shape, config, rng=rng).run(observables, store_fields=store_fields)


def run_chains(params, shape, config, observables=("t0", "ward", "theorem1"), num_chains: int = 1, workers: int = 1, store_fields=False):
    """Independent chains from split seeds, merged by inverse-variance weighting.

    Returns ``(merged_estimates, results)``.  The merge is deterministic for a
    given seed regardless of ``workers``.
    """
    jobs = [(params, shape, config, k, num_chains, tuple(observables), store_fields) for k in range(num_chains)]
    if workers > 1 and num_chains > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]
    merged = {o: merge_estimates(r.estimates[o] for r in results) for o in observables}
    return merged, results


def write_trace(path, result: ChainResult, config: ChainConfig) -> None:
    """CSV trace: sample index, sweep number, then one column per observable."""
    names = list(result.traces)
    n = len(result.traces[names[0]]) if names else 0
    with open(path, "w", newline="") as fh:
        fh.write(f"# chain: {config}\n")
        w = csv.writer(fh)
        w.writerow(["sample", "sweep"] + names)
        for k in range(n):
            row = [k, config.burn_in + k * config.thin]
            w.writerow(row + [repr(float(result.traces[o][k])) for o in names])
