"""Command-line harness: plant instances, run pipelines, join reports with truth.

Exit codes: 0 success, 2 validation error, 3 pipeline ran but raised flags,
4 internal error.
"""
from __future__ import annotations

import csv
import json
import os
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import click
import numpy as np

from .core import EntryOracle, FourierToeplitz, SignalOracle, SparseSignal, SymToeplitz, spawn, wrap_dist
from .covariance import covariance_estimate, default_sample_count, sample_gaussian_toeplitz
from .oracle import DENSE_CAP, best_rank_k, frob_error
from .recovery import LowRankConfig, robust_lowrank
from .sfft import RecoveryConfig, sparse_recover

EXIT_OK, EXIT_INVALID, EXIT_DEGRADED, EXIT_INTERNAL = 0, 2, 3, 4
RUN_KEYS = ("seed", "d", "k", "delta", "epsilon", "noise", "samples", "floor", "kind", "on_grid")
MAX_WORKERS = 4


class ValidationError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    seed: int = 0
    d: int = 1024
    k: int = 2
    delta: float = 1e-3
    epsilon: float = 0.1
    noise: float = 0.0
    samples: int = 0
    floor: float = 0.0
    kind: str = "matrix"
    on_grid: bool = False
    input: str = ""
    out: str = ""
    pipeline: dict = field(default_factory=dict)

    def with_seed(self, seed):
        return RunConfig(**{**asdict(self), "seed": int(seed)})


def _read_config(path):
    if not path:
        return {}
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except json.JSONDecodeError as e:
        raise ValidationError(f"{path}:{e.lineno}: {e.msg}") from None
    except OSError as e:
        raise ValidationError(str(e)) from None
    if not isinstance(obj, dict):
        raise ValidationError(f"{path}: config must be a JSON object")
    return obj


def build_run(command, config_path, **flags):
    """Flags first, then the config file overrides them key by key.

    Keys that are not run settings form the pipeline config.
    """
    obj = _read_config(config_path)
    run = {k: v for k, v in flags.items() if v is not None}
    run.update({k: obj[k] for k in RUN_KEYS if k in obj})
    pipeline = {k: v for k, v in obj.items() if k not in RUN_KEYS}
    return RunConfig(command=command, pipeline=pipeline, **run)


def _write_atomic(path, text):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _noise_matrix(d, scale, rng):
    if d > DENSE_CAP:
        raise ValidationError(f"entrywise noise needs a dense matrix; d={d} exceeds {DENSE_CAP}")
    E = rng.standard_normal((d, d))
    E = (E + E.T) / 2
    return E * (scale / np.linalg.norm(E))


# ---------------------------------------------------------------- pipelines

def run_gen(run: RunConfig):
    rng = np.random.default_rng(run.seed)
    d, k = run.d, run.k
    os.makedirs(run.out or ".", exist_ok=True)
    out = run.out or "."
    truth = {"kind": run.kind, "d": d, "k": k, "seed": run.seed}
    if run.kind == "signal":
        f = rng.integers(0, d, k) / d if run.on_grid else rng.random(k)
        a = np.exp(2j * np.pi * rng.random(k)) * (1 + rng.random(k))
        x = SparseSignal(f, a, d)
        path = os.path.join(out, "signal.json")
        _write_atomic(path, json.dumps(x.to_json()))
        truth.update({"freqs": x.freqs.tolist(), "file": path})
    elif run.kind == "matrix":
        n_pairs, has_zero = k // 2, k % 2
        if run.on_grid:
            reps = list(rng.integers(1, d // 2, n_pairs) / d)
        else:
            reps = list(rng.random(n_pairs) * 0.5)
        if has_zero:
            reps.append(0.0)
        w = 0.5 + rng.random(len(reps))
        F = FourierToeplitz.closed(np.array(reps), w, d)
        col = F.first_column()
        # a PSD floor: weight `floor` on every on-grid frequency adds floor*d to the diagonal
        col[0] += run.floor * d
        T = SymToeplitz(col)
        path = os.path.join(out, "matrix.txt")
        fd, tmp = tempfile.mkstemp(dir=out, prefix=".tmp-")
        os.close(fd)
        T.save(tmp)
        os.replace(tmp, path)
        tail = best_rank_k(T, k)[1] if d <= DENSE_CAP else None
        truth.update({"freqs": F.freqs.tolist(), "weights": F.weights.tolist(), "floor": run.floor,
                      "frob_norm": T.frob_norm(), "tail_frob": tail, "file": path})
    else:
        raise ValidationError(f"unknown instance kind {run.kind!r}")
    _write_atomic(os.path.join(out, "truth.json"), json.dumps(truth, indent=1))
    return {"run": asdict(run), "flags": [], "truth": truth}


def run_sfft(run: RunConfig):
    x = _load(SparseSignal.load, run.input)
    run.d = x.d
    rng = np.random.default_rng(run.seed)
    rng_noise, rng_alg = spawn(rng, 2)
    s = x.samples()
    if run.noise > 0:
        g = rng_noise.standard_normal(x.d) + 1j * rng_noise.standard_normal(x.d)
        s = s + g * np.sqrt(run.noise * np.sum(np.abs(s) ** 2) / np.sum(np.abs(g) ** 2))
    cfg = _cfg(RecoveryConfig, {"k": run.k, "delta": run.delta, **run.pipeline})
    t0 = time.perf_counter()
    L = sparse_recover(SignalOracle.from_array(s), cfg, rng_alg)
    good = L.good()
    bad = [fl for fl in L.flags if fl not in ("", "degraded", "superseded")]
    return {
        "run": asdict(run),
        "freqs": good.tolist(),
        "window": L.window,
        "flags": sorted(set(bad)),
        "reads": L.reads,
        "list": L.to_json(),
        "seconds": time.perf_counter() - t0,
    }


def run_lowrank(run: RunConfig):
    T = _load(SymToeplitz.load, run.input)
    run.d = T.d
    rng = np.random.default_rng(run.seed)
    rng_noise, rng_alg = spawn(rng, 2)
    E = _noise_matrix(T.d, run.noise * T.frob_norm(), rng_noise) if run.noise > 0 else None
    cfg = _cfg(LowRankConfig, run.pipeline)
    O = EntryOracle.from_toeplitz(T, noise=E)
    rep = robust_lowrank(O, run.k, run.delta, cfg, rng_alg)
    out = {"run": asdict(run), **rep.to_json()}
    out["error_rel"] = _rel_error(T, rep.output)
    return out


def run_covest(run: RunConfig):
    T = _load(SymToeplitz.load, run.input)
    run.d = T.d
    rng = np.random.default_rng(run.seed)
    rng_samp, rng_alg = spawn(rng, 2)
    s = run.samples or default_sample_count(run.k, run.epsilon)
    if s < 1:
        raise ValidationError("need at least one sample")
    try:
        X = sample_gaussian_toeplitz(T, s, rng_samp)
    except ValueError as e:
        raise ValidationError(str(e)) from None
    cfg = _cfg(LowRankConfig, run.pipeline)
    rep = covariance_estimate(X, run.k, run.epsilon, cfg, rng_alg)
    out = {"run": {**asdict(run), "samples": s}, **rep.to_json()}
    out["error_rel"] = _rel_error(T, rep.output)
    return out


def _rel_error(T, out):
    n = T.frob_norm()
    return frob_error(T, out) / n if n > 0 else float(frob_error(T, out))


def _load(loader, path):
    if not path:
        raise ValidationError("missing input file")
    try:
        return loader(path)
    except (OSError, ValueError, KeyError, TypeError) as e:
        raise ValidationError(str(e)) from None


def _cfg(cls, obj):
    try:
        return cls.from_dict(obj)
    except (TypeError, ValueError) as e:
        raise ValidationError(f"config: {e}") from None


PIPELINES = {"gen": run_gen, "sfft": run_sfft, "lowrank": run_lowrank, "covest": run_covest}


def _execute(run: RunConfig):
    """Run one trial and write its report; returns (exit code, report or message)."""
    try:
        rep = PIPELINES[run.command](run)
    except ValidationError as e:
        return EXIT_INVALID, str(e)
    except Exception as e:  # noqa: BLE001 - reported as an internal failure
        return EXIT_INTERNAL, f"{type(e).__name__}: {e}"
    if run.command != "gen" and run.out:
        _write_atomic(os.path.join(run.out, f"{run.command}_seed{run.seed}.json"),
                      json.dumps(rep, indent=1, default=_json_default))
    return (EXIT_DEGRADED if rep.get("flags") else EXIT_OK), rep


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o).__name__)


def _dispatch(run: RunConfig, trials: int):
    if trials < 1:
        click.echo("error: --trials must be >= 1", err=True)
        sys.exit(EXIT_INVALID)
    runs = [run.with_seed(run.seed + t) for t in range(trials)]
    if trials == 1:
        results = [_execute(runs[0])]
    else:
        with ProcessPoolExecutor(max_workers=min(MAX_WORKERS, trials, os.cpu_count() or 1)) as ex:
            results = list(ex.map(_execute, runs))
    worst = EXIT_OK
    for r, (code, rep) in zip(runs, results):
        if code in (EXIT_INVALID, EXIT_INTERNAL):
            click.echo(f"seed {r.seed}: error: {rep}", err=True)
        elif not r.out:
            click.echo(json.dumps(rep, indent=1, default=_json_default))
        worst = max(worst, code)
    sys.exit(worst)


# ---------------------------------------------------------------- click

def _common(f):
    opts = [
        click.option("--seed", type=int, default=None, help="Seed of the first trial."),
        click.option("--d", "d", type=int, default=None, help="Matrix or signal dimension."),
        click.option("--k", "k", type=int, default=None, help="Target rank or sparsity."),
        click.option("--delta", type=float, default=None),
        click.option("--epsilon", type=float, default=None),
        click.option("--noise", type=float, default=None, help="Relative noise level."),
        click.option("--samples", type=int, default=None, help="Vector samples for covest."),
        click.option("--config", "config", type=click.Path(), default=None, help="JSON config overriding flags."),
        click.option("--out", type=click.Path(), default=None, help="Output directory."),
        click.option("--trials", type=int, default=1, help="Seeds seed..seed+trials-1."),
    ]
    for o in reversed(opts):
        f = o(f)
    return f


@click.group()
def main():
    """Sublinear-query Toeplitz low-rank approximation toolkit."""


def _run_command(name, config, trials, **flags):
    try:
        run = build_run(name, config, **flags)
    except ValidationError as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(EXIT_INVALID)
    except TypeError as e:
        click.echo(f"error: config: {e}", err=True)
        sys.exit(EXIT_INVALID)
    _dispatch(run, trials)


@main.command()
@_common
@click.option("--kind", type=click.Choice(["matrix", "signal"]), default=None)
@click.option("--floor", type=float, default=None, help="PSD noise floor weight per grid frequency.")
@click.option("--on-grid", "on_grid", is_flag=True, default=None, help="Plant frequencies on multiples of 1/d.")
def gen(config, trials, **flags):
    """Plant a synthetic instance and its ground truth."""
    _run_command("gen", config, trials, **flags)


@main.command()
@click.argument("signal", type=click.Path())
@_common
def sfft(signal, config, trials, **flags):
    """Recover the frequencies of a sparse signal file."""
    _run_command("sfft", config, trials, input=signal, **flags)


@main.command()
@click.argument("matrix", type=click.Path())
@_common
def lowrank(matrix, config, trials, **flags):
    """Low-rank Toeplitz approximation from entry queries."""
    _run_command("lowrank", config, trials, input=matrix, **flags)


@main.command()
@click.argument("matrix", type=click.Path())
@_common
def covest(matrix, config, trials, **flags):
    """Covariance estimate from Gaussian samples of a Toeplitz matrix."""
    _run_command("covest", config, trials, input=matrix, **flags)


EVAL_FIELDS = ["report", "command", "seed", "d", "k", "error_rel", "queries", "reads", "success", "flags"]


def eval_rows(reports, truth):
    """Join report dicts with a truth dict; nothing is recomputed."""
    rows = []
    for name, rep in reports:
        run = rep.get("run", {})
        row = {"report": name, "command": run.get("command", ""), "seed": run.get("seed", ""),
               "d": run.get("d", ""), "k": run.get("k", ""), "error_rel": rep.get("error_rel", ""),
               "queries": rep.get("queries_used", ""), "reads": rep.get("reads", ""),
               "flags": ";".join(rep.get("flags", []))}
        if "freqs" in rep and truth and truth.get("freqs") is not None:
            got = np.asarray(rep["freqs"], dtype=float)
            want = np.asarray(truth["freqs"], dtype=float)
            win = rep.get("window", 0.0)
            row["success"] = bool(got.size and all(wrap_dist(got, f).min() <= win for f in want)) or not want.size
        elif "error_rel" in rep:
            row["success"] = not rep.get("flags")
        else:
            row["success"] = ""
        rows.append(row)
    return rows


@main.command("eval")
@click.argument("reports", nargs=-1, type=click.Path())
@click.option("--truth", type=click.Path(), default=None)
@click.option("--out", type=click.Path(), default=None, help="CSV path (stdout when omitted).")
def eval_cmd(reports, truth, out):
    """CSV of errors, query counts and success flags for a set of reports."""
    try:
        tr = json.load(open(truth)) if truth else None
        reps = [(p, json.load(open(p))) for p in reports]
    except (OSError, json.JSONDecodeError) as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(EXIT_INVALID)
    rows = eval_rows(reps, tr)
    fh = open(out, "w", newline="") if out else sys.stdout
    w = csv.DictWriter(fh, fieldnames=EVAL_FIELDS)
    w.writeheader()
    w.writerows(rows)
    if out:
        fh.close()


if __name__ == "__main__":
    main()
