"""Command-line runner.

    horosim <subcommand> --config PATH [--seed N] [--out DIR]

The output directory is, in order of precedence, ``--out``, the
``HOROSIM_OUT`` environment variable, the config's ``out_dir``, and the
current directory.  Each subcommand writes ``<subcommand>.csv`` (a
``#``-comment header line carrying the resolved config and seed, then
one header row) and ``<subcommand>.json`` (config, seed, checks, and
``passed``).  Exit status: 0 when every asserted check passes, 1 when a
check fails, 2 for an invalid config, 3 for a runtime error; on a
non-zero status a JSON failure record is written to ``failure.json`` and
to stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .config import SUBCOMMANDS, ConfigError, RunConfig, parse_config
from .errors import HorosimError
from .hessian import hessian_effective
from .lattice import build_lattice
from .model import ModelParams
from .observables import (
    STUDY_COLUMNS,
    brascamp_lieb_suite,
    green_diagonal,
    symmetry_breaking_study,
    ward_check,
)
from .rmt import (
    BandEnsembleSpec,
    build_J,
    deformed_average_B1,
    expected_ratio_n1,
    pushforward_check,
    resolvent_stats,
    saddle_params,
)
from .sampler import ChainConfig, chain_rng, run_chains, write_trace

OUT_ENV = "HOROSIM_OUT"
log = logging.getLogger("horosim")


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _header(cfg: RunConfig, seed: int) -> dict:
    return {"version": __version__, "seed": seed, "config": cfg.model_dump(mode="json")}


def write_csv(path: Path, columns, rows, cfg: RunConfig, seed: int) -> None:
    buf = io.StringIO(newline="")
    buf.write("# " + json.dumps(_header(cfg, seed), sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row[c]) for c in columns])
    path.write_text(buf.getvalue())


def write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.bool_):
        return bool(x)
    raise TypeError(f"not serializable: {type(x)}")


def _chain_config(cfg: RunConfig, seed: int) -> ChainConfig:
    c = cfg.chain
    return ChainConfig(
        num_sweeps=c.num_sweeps,
        burn_in=c.burn_in,
        step_size=c.step_size,
        seed=seed,
        kernel=c.kernel,
        thin=c.thin,
        shift_step=c.shift_step,
    )


def _setup(cfg: RunConfig, beta: float | None = None):
    shape = build_lattice(cfg.d, cfg.sides)
    params = ModelParams(cfg.beta if beta is None else beta, cfg.resolved_h, cfg.ensemble)
    return shape, params


# ---------------------------------------------------------------- subcommands
# each returns (columns, rows, checks, extra) with checks a list of dicts
# carrying at least "name" and "passed"


def cmd_simulate(cfg: RunConfig, seed: int, out: Path):
    shape, params = _setup(cfg)
    chain = _chain_config(cfg, seed)
    obs = tuple(cfg.simulate.observables)
    merged, results = run_chains(params, shape, chain, obs, num_chains=cfg.chain.num_chains, workers=cfg.chain.workers)
    if cfg.chain.write_traces:
        for k, r in enumerate(results):
            write_trace(out / f"trace_chain{k}.csv", r, chain)
    cols = ["observable", "mean", "std_error", "n_effective", "n_samples", "tau_int"]
    rows = [{"observable": o, **merged[o].as_dict()} for o in obs]
    extra = {"diagnostics": [r.diagnostics() for r in results]}
    return cols, rows, [], extra


def cmd_certify(cfg: RunConfig, seed: int, out: Path):
    betas = cfg.certify.betas or [cfg.beta]
    cols = [
        "seed", "beta", "config_index", "lambda_min", "k_nonnegative", "row_sum_ok",
        "schwarz_ok", "bond_bound_ok", "r_bound_ok", "certified",
    ]
    rows, checks = [], []
    for beta in betas:
        shape, params = _setup(cfg, beta)
        merged, results = run_chains(params, shape, _chain_config(cfg, seed), ("t0",), store_fields=True)
        fields = results[0].fields
        idx = np.linspace(0, len(fields) - 1, cfg.certify.num_configs).round().astype(int)
        guaranteed = beta >= 1.5
        lemmas_apply = cfg.ensemble == "delta"
        for k, i in enumerate(idx):
            rep = hessian_effective(fields[i], params, shape)
            lemmas = [rep.k_nonnegative, rep.row_sum_ok, rep.schwarz_ok, rep.bond_bound_ok, rep.r_bound_ok]
            row = dict(zip(cols, [seed, beta, k, rep.lambda_min, *lemmas, rep.lambda_min >= -1e-8]))
            rows.append(row)
            if guaranteed:
                checks.append({"name": f"certificate_beta{beta:g}_cfg{k}", "value": rep.lambda_min, "passed": bool(row["certified"])})
            if lemmas_apply:
                checks.append({"name": f"identities_beta{beta:g}_cfg{k}", "passed": bool(all(lemmas))})
    return cols, rows, checks, {}


def cmd_ward(cfg: RunConfig, seed: int, out: Path):
    shape, params = _setup(cfg)
    chain = _chain_config(cfg, seed)
    merged, results = run_chains(params, shape, chain, ("t0", "ward"), num_chains=cfg.chain.num_chains, workers=cfg.chain.workers)
    g00 = green_diagonal(shape, params.beta, params.h)
    trace = np.concatenate([r.traces["t0"] for r in results])
    checks = [ward_check(merged["ward"])] + brascamp_lieb_suite(trace, g00, cfg.ward.alphas, cfg.ward.rhos)
    cols = ["name", "lhs", "rhs", "slack", "mc_error", "passed"]
    rows = [c.as_dict() for c in checks]
    extra = {"green00": g00, "ward": merged["ward"].as_dict(), "t0": merged["t0"].as_dict()}
    return cols, rows, rows, extra


def cmd_study(cfg: RunConfig, seed: int, out: Path):
    rows = symmetry_breaking_study(
        cfg.d,
        cfg.study.sizes,
        cfg.beta,
        _chain_config(cfg, seed),
        num_chains=cfg.chain.num_chains,
        reweight=cfg.study.reweight,
        reweight_samples=cfg.study.reweight_samples,
        workers=cfg.chain.workers,
    )
    checks = [{"name": f"ward_L{r['L']}", "passed": bool(r["ward_ok"])} for r in rows]
    if cfg.study.reweight:
        checks += [{"name": f"reweight_ess_L{r['L']}", "value": r["hmass_ess_fraction"], "passed": bool(r["hmass_ess_fraction"] > 0.1)} for r in rows]
    return list(STUDY_COLUMNS), rows, checks, {}


def cmd_rmt(cfg: RunConfig, seed: int, out: Path):
    r = cfg.rmt
    shape = build_lattice(cfg.d, cfg.sides)
    profile = build_J(r.profile, shape, W=r.W, J0=r.J0, J1=r.J1, cube_side=r.cube_side, matrix=r.matrix)
    spec = BandEnsembleSpec(shape, r.N, profile)
    rng = chain_rng(seed)
    x = r.site * r.N
    dens, sq = resolvent_stats(spec, r.energy, r.epsilon, x, x, r.mc_draws, rng)
    b1, ess = deformed_average_B1(spec, r.energy, r.epsilon, r.site, r.mc_draws, rng)
    cols = ["quantity", "value", "std_error"]
    rows = [
        {"quantity": "density", "value": dens.value.mean, "std_error": dens.value.std_error},
        {"quantity": "green_sq", "value": sq.value.mean, "std_error": sq.value.std_error},
        {"quantity": "B1", "value": b1.mean, "std_error": b1.std_error},
        {"quantity": "B1_ess", "value": ess, "std_error": 0.0},
    ]
    extra = {"profile_psd": profile.is_psd, "profile_min_eigenvalue": profile.min_eigenvalue}
    if r.profile == "cubes" and r.J0 is not None and r.energy**2 <= 4 * r.N * r.J0:
        rho, beta, h = saddle_params(r.N, r.J0, r.J1, r.energy, r.epsilon)
        rows += [
            {"quantity": "saddle_rho", "value": rho, "std_error": 0.0},
            {"quantity": "saddle_beta", "value": beta, "std_error": 0.0},
            {"quantity": "saddle_h", "value": h, "std_error": 0.0},
        ]
    return cols, rows, [], extra


def cmd_pushforward(cfg: RunConfig, seed: int, out: Path):
    p = cfg.pushforward
    table, diffs = pushforward_check(p.n, p.N, mc_draws=p.mc_draws, rng=chain_rng(seed), lebesgue=p.lebesgue)
    cols = ["test_function", "lhs", "lhs_se", "rhs", "ratio", "ratio_se", "lebesgue"]
    rows = [
        {
            "test_function": t.name,
            "lhs": t.lhs.mean,
            "lhs_se": t.lhs.std_error,
            "rhs": t.rhs,
            "ratio": t.ratio.mean,
            "ratio_se": t.ratio.std_error,
            "lebesgue": t.lebesgue,
        }
        for t in table
    ]
    checks = [
        {"name": f"constant_{k}", "value": d.mean, "mc_error": d.std_error, "passed": bool(abs(d.mean) <= 5 * d.std_error + 1e-12 * abs(table[0].ratio.mean))}
        for k, d in diffs.items()
    ]
    if p.n == 1:
        target = expected_ratio_n1(p.N)
        for t in table:
            ok = abs(t.ratio.mean - target) <= 5 * t.ratio.std_error + 1e-12 * target
            checks.append({"name": f"ratio_{t.name}", "value": t.ratio.mean, "expected": target, "passed": bool(ok)})
    return cols, rows, checks, {}


COMMANDS = {
    "simulate": cmd_simulate,
    "certify": cmd_certify,
    "ward": cmd_ward,
    "study": cmd_study,
    "rmt": cmd_rmt,
    "pushforward": cmd_pushforward,
}


def resolve_out_dir(arg: str | None, cfg: RunConfig | None) -> Path:
    if arg:
        return Path(arg)
    if os.environ.get(OUT_ENV):
        return Path(os.environ[OUT_ENV])
    if cfg is not None and cfg.out_dir:
        return Path(cfg.out_dir)
    return Path(".")


def dispatch(cfg: RunConfig, seed: int, out: Path) -> int:
    out.mkdir(parents=True, exist_ok=True)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", category=UserWarning)
        cols, rows, checks, extra = COMMANDS[cfg.subcommand](cfg, seed, out)
    checks = [c.as_dict() if hasattr(c, "as_dict") else c for c in checks]
    passed = all(c["passed"] for c in checks)
    write_csv(out / f"{cfg.subcommand}.csv", cols, rows, cfg, seed)
    write_json(out / f"{cfg.subcommand}.json", {**_header(cfg, seed), "checks": checks, "passed": passed, **extra})
    if not passed:
        failed = [c["name"] for c in checks if not c["passed"]]
        _fail(out, {"status": "checks_failed", "subcommand": cfg.subcommand, "failed": failed, **_header(cfg, seed)})
        return 1
    return 0


def _fail(out: Path | None, record: dict) -> None:
    text = json.dumps(record, indent=2, sort_keys=True, default=_json_default)
    if out is not None:
        try:
            out.mkdir(parents=True, exist_ok=True)
            (out / "failure.json").write_text(text + "\n")
        except OSError:
            pass
    print(text, file=sys.stderr)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="horosim", description="H^2 sigma-model simulations and checks")
    ap.add_argument("subcommand", choices=SUBCOMMANDS)
    ap.add_argument("--config", required=True, help="TOML run configuration")
    ap.add_argument("--seed", type=int, default=None, help="override the config seed")
    ap.add_argument("--out", default=None, help=f"output directory (overrides ${OUT_ENV})")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        text = Path(args.config).read_text()
        cfg, notes = parse_config(text, args.subcommand)
    except (OSError, ConfigError) as exc:
        problems = getattr(exc, "problems", [str(exc)])
        _fail(resolve_out_dir(args.out, None), {"status": "invalid_config", "problems": problems})
        return 2
    for note in notes:
        log.warning(note)
    seed = cfg.seed if args.seed is None else args.seed
    if seed is not None and not 0 <= seed < 2**64:
        _fail(resolve_out_dir(args.out, cfg), {"status": "invalid_config", "problems": [f"seed {seed} out of range"]})
        return 2
    if args.seed is not None:
        cfg = cfg.model_copy(update={"seed": seed})
    out = resolve_out_dir(args.out, cfg)
    try:
        return dispatch(cfg, seed, out)
    except (HorosimError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        _fail(out, {"status": "error", "error": type(exc).__name__, "message": str(exc), **_header(cfg, seed)})
        return 3


if __name__ == "__main__":
    sys.exit(main())
