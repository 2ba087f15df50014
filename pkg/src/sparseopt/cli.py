"""Command-line front end.

Subcommands: ``project``, ``solve-knapsack``, ``stationarity``, ``estimate``,
``train``, ``hp-train``, ``asymptotic``.  Run configuration lives in a flat
``key=value`` spec file (comments start with ``#``, unknown keys are
rejected); vectors are one decimal per line with 17 significant digits.  All
paths inside a spec file resolve relative to the file's directory.  Exit
codes: 0 ok, 2 parse failure, 3 infeasible configuration, 4 missing file,
5 invalid instance or problem error.
"""

from __future__ import annotations

import argparse
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .constraint import BoxParams, GroupPartition, is_feasible, project, stationarity_distance
from .estimation import default_pairing_radius, delta_bound, estimate_delta, estimate_l0_q
from .knapsack import read_instance, solve_bnb
from .oracles import builtin_problem
from .smoothing import StreamTree, derive_seed
from .spa import (
    Targets,
    derive_params,
    evaluate_stationarity,
    geometric_schedule,
    initialize_feasible,
    meta_from_problem,
    run_asymptotic,
    run_high_probability,
    run_spa,
    write_trace_csv,
)

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_INFEASIBLE = 3
EXIT_MISSING = 4
EXIT_INVALID = 5


class CliError(Exception):
    def __init__(self, code: int, kind: str, msg: str):
        super().__init__(msg)
        self.code = code
        self.kind = kind


def _fail(code: int, kind: str, msg: str) -> CliError:
    return CliError(code, kind, msg)


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_vector(path, vec) -> None:
    with open(path, "w") as fh:
        for x in np.asarray(vec, dtype=float):
            fh.write(_fmt(x) + "\n")


def read_vector(path) -> np.ndarray:
    p = Path(path)
    if not p.exists():
        raise _fail(EXIT_MISSING, "missing", f"vector file not found: {p}")
    vals = []
    for ln in p.read_text().splitlines():
        ln = ln.strip()
        if not ln or ln.startswith("#"):
            continue
        try:
            vals.append(float(ln))
        except ValueError:
            raise _fail(EXIT_PARSE, "parse", f"bad float {ln!r} in {p}")
    return np.asarray(vals)


def parse_kv_file(path, allowed: set[str]) -> dict[str, str]:
    p = Path(path)
    if not p.exists():
        raise _fail(EXIT_MISSING, "missing", f"spec file not found: {p}")
    out: dict[str, str] = {}
    for lineno, raw in enumerate(p.read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise _fail(EXIT_PARSE, "parse", f"{p}:{lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        key, value = key.strip(), value.strip()
        if key not in allowed:
            raise _fail(EXIT_PARSE, "parse", f"{p}:{lineno}: unknown key {key!r}")
        if key in out:
            raise _fail(EXIT_PARSE, "parse", f"{p}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def _get_float(kv, key, default=None):
    if key not in kv:
        if default is None:
            raise _fail(EXIT_PARSE, "parse", f"missing required key {key!r}")
        return default
    try:
        return float(kv[key])
    except ValueError:
        raise _fail(EXIT_PARSE, "parse", f"key {key!r}: bad decimal {kv[key]!r}")


def _get_int(kv, key, default=None):
    if key not in kv:
        if default is None:
            raise _fail(EXIT_PARSE, "parse", f"missing required key {key!r}")
        return default
    try:
        return int(kv[key])
    except ValueError:
        raise _fail(EXIT_PARSE, "parse", f"key {key!r}: bad integer {kv[key]!r}")


PARTITION_KEYS = {"dims", "penalties", "budget", "beta", "kappa"}


def read_partition(path) -> tuple[GroupPartition, BoxParams]:
    kv = parse_kv_file(path, PARTITION_KEYS)
    if "dims" not in kv:
        raise _fail(EXIT_PARSE, "parse", f"{path}: missing key 'dims'")
    try:
        dims = tuple(int(tok) for tok in kv["dims"].split())
        penalties = (
            tuple(float(tok) for tok in kv["penalties"].split())
            if "penalties" in kv
            else tuple(float(x) for x in dims)
        )
    except ValueError as exc:
        raise _fail(EXIT_PARSE, "parse", f"{path}: {exc}")
    budget = _get_float(kv, "budget")
    beta = float(kv["beta"]) if kv.get("beta") not in (None, "inf") else math.inf
    kappa = float(kv["kappa"]) if kv.get("kappa") not in (None, "inf") else math.inf
    try:
        part = GroupPartition(dims=dims, penalties=penalties, budget=budget)
        box = BoxParams(beta=beta, kappa=kappa)
    except ValueError as exc:
        raise _fail(EXIT_INVALID, "invalid", str(exc))
    return part, box


PROBLEM_KEYS = {
    "problem",
    "d",
    "c",
    "shift",
    "noise",
    "wstar",
    "noise_radius",
    "affine_a",
    "affine_b",
    "classes",
    "blob_points",
    "blob_spread",
    "blob_side",
    "blob_radius",
    "filters",
    "kernel",
    "hidden",
    "images",
    "labels",
    "dataset_limit",
    "data_seed",
    "kappa",
}

RUN_KEYS = PROBLEM_KEYS | {
    "dims",
    "penalties",
    "budget",
    "s",
    "eps1",
    "eps2",
    "eps3",
    "eps4",
    "rho",
    "tau",
    "mode",
    "seed",
    "out",
    "K",
    "M",
    "alpha",
    "eta",
    "beta",
    "delta",
    "delta_mode",
    "f_lower",
    "q",
    "iota",
    "eval_samples",
    "fhat_batch",
    "hp_gamma",
    "hp_c",
    "hp_phi",
    "stages",
    "stage_factor",
}


def build_problem(kv, base: Path):
    name = kv.get("problem")
    if name is None:
        raise _fail(EXIT_PARSE, "parse", "missing required key 'problem'")
    kappa = _get_float(kv, "kappa", math.inf)
    try:
        if name == "abs_sum":
            return builtin_problem(
                "abs_sum",
                d=_get_int(kv, "d"),
                c=_get_float(kv, "c", 1.0),
                shift=_get_float(kv, "shift", 0.0),
                noise=_get_float(kv, "noise", 0.0),
                kappa=kappa,
            )
        if name == "quadratic":
            return builtin_problem(
                "quadratic",
                d=_get_int(kv, "d"),
                wstar=_get_float(kv, "wstar", 0.0),
                noise_radius=_get_float(kv, "noise_radius", 0.0),
                kappa=kappa if math.isfinite(kappa) else 1.0,
            )
        if name == "max_affine":
            a = [[float(t) for t in row.split()] for row in kv["affine_a"].split(";")]
            b = [float(t) for t in kv["affine_b"].split()]
            return builtin_problem("max_affine", a=a, b=b, kappa=kappa)
        if name == "tinynet_blobs":
            return builtin_problem(
                "tinynet_blobs",
                classes=_get_int(kv, "classes", 3),
                num_points=_get_int(kv, "blob_points", 1000),
                spread=_get_float(kv, "blob_spread", 0.3),
                side=_get_int(kv, "blob_side", 6),
                radius=_get_float(kv, "blob_radius", 1.0),
                filters=_get_int(kv, "filters", 4),
                kernel=_get_int(kv, "kernel", 3),
                hidden=_get_int(kv, "hidden", 12),
                kappa=kappa if math.isfinite(kappa) else 1.0,
                data_seed=_get_int(kv, "data_seed", 0),
            )
        if name == "tinynet_idx":
            for key in ("images", "labels"):
                if key not in kv:
                    raise _fail(EXIT_PARSE, "parse", f"missing required key {key!r}")
                if not (base / kv[key]).exists():
                    raise _fail(EXIT_MISSING, "missing", f"dataset file not found: {base / kv[key]}")
            return builtin_problem(
                "tinynet_idx",
                images=base / kv["images"],
                labels=base / kv["labels"],
                filters=_get_int(kv, "filters", 6),
                hidden=_get_int(kv, "hidden", 24),
                classes=_get_int(kv, "classes", 10),
                kappa=kappa if math.isfinite(kappa) else 0.2,
                limit=_get_int(kv, "dataset_limit", 0) or None,
            )
    except CliError:
        raise
    except (ValueError, KeyError) as exc:
        raise _fail(EXIT_INVALID, "invalid", f"problem construction failed: {exc}")
    raise _fail(EXIT_PARSE, "parse", f"unknown problem {name!r}")


def build_partition(kv, problem) -> GroupPartition:
    budget = None
    if "s" in kv:
        s = _get_float(kv, "s")
        if not 0 < s < 1:
            raise _fail(EXIT_PARSE, "parse", f"sparsity s must lie in (0,1), got {s}")
        budget = (1.0 - s) * problem.d
    if "budget" in kv:
        budget = _get_float(kv, "budget")
    try:
        if "dims" in kv:
            dims = tuple(int(tok) for tok in kv["dims"].split())
            penalties = (
                tuple(float(tok) for tok in kv["penalties"].split())
                if "penalties" in kv
                else tuple(float(x) for x in dims)
            )
            if budget is None:
                raise _fail(EXIT_PARSE, "parse", "missing 'budget' or 's'")
            return GroupPartition(dims=dims, penalties=penalties, budget=budget)
        if hasattr(problem, "partition"):
            if budget is None:
                raise _fail(EXIT_PARSE, "parse", "missing 'budget' or 's'")
            return problem.partition(budget)
        # Scalar groups by default.
        if budget is None:
            budget = float(problem.d)
        return GroupPartition(
            dims=(1,) * problem.d, penalties=(1.0,) * problem.d, budget=budget
        )
    except CliError:
        raise
    except ValueError as exc:
        raise _fail(EXIT_INVALID, "invalid", str(exc))


def _resolve_training(kv, problem, part, mode, rho, seed, base):
    """Estimate missing metadata, derive or override hyperparameters, and
    return (alpha, beta, config, estimates) ready to run."""
    estimates = {}
    kappa = problem.kappa
    if not math.isfinite(kappa):
        raise _fail(EXIT_INFEASIBLE, "infeasible", "a finite kappa is required for training")
    if problem.L0 is None or problem.Q is None:
        est = estimate_l0_q(
            problem,
            kappa,
            StreamTree(derive_seed(seed, "l0q")),
            q=_get_int(kv, "q", 250),
            iota=_get_float(kv, "iota", 0.0) or None,
        )
        problem.set_lipschitz_metadata(est.L0_hat, est.Q_hat)
        estimates["L0"] = est.L0_hat
        estimates["Q"] = est.Q_hat
        estimates["q"] = est.q
        estimates["iota"] = est.iota
    meta = meta_from_problem(problem)

    explicit = all(k in kv for k in ("K", "M", "alpha", "eta"))
    eps_pair = ("eps1" in kv and "eps2" in kv) or ("eps3" in kv and "eps4" in kv)
    if not eps_pair and not explicit:
        raise _fail(
            EXIT_PARSE, "parse", "provide eps1/eps2 (or eps3/eps4), or all of K,M,alpha,eta"
        )

    delta = _get_float(kv, "delta", 0.0) or None
    if eps_pair:
        targets = (
            Targets(eps1=_get_float(kv, "eps1"), eps2=_get_float(kv, "eps2"))
            if "eps1" in kv
            else Targets(eps3=_get_float(kv, "eps3"), eps4=_get_float(kv, "eps4"))
        )
        if delta is None:
            # The smoothing radius only depends on the targets, so compute it
            # first, estimate the gap under it, then derive the rest.
            if targets.pair == "eps12":
                alpha0 = targets.eps1 / (meta.L0 * math.sqrt(meta.d / 12.0))
            else:
                alpha0 = 2.0 * targets.eps3 / math.sqrt(meta.d)
            beta0 = 0.99 * (kappa - alpha0 / 2.0)
            if beta0 <= 0:
                raise _fail(EXIT_INFEASIBLE, "infeasible", f"kappa={kappa} <= alpha/2={alpha0 / 2}")
            mode_delta = kv.get("delta_mode", "estimate")
            if mode_delta == "estimate":
                delta = estimate_delta(
                    problem,
                    part,
                    BoxParams(beta=beta0, kappa=kappa),
                    alpha0,
                    StreamTree(derive_seed(seed, "delta")),
                    num_samples=None if hasattr(problem, "dataset_size") else 256,
                )
            elif mode_delta == "bound":
                w_probe = np.zeros(problem.d)
                xi = problem.sample_xi(StreamTree(derive_seed(seed, "probe")).generator())
                delta = delta_bound(
                    float(problem.value(w_probe, xi)),
                    _get_float(kv, "f_lower", 0.0),
                    meta.L0,
                    meta.d,
                    alpha0,
                    beta0,
                )
            else:
                raise _fail(EXIT_PARSE, "parse", f"delta_mode must be estimate|bound, got {mode_delta!r}")
            estimates["Delta"] = delta
        try:
            alpha, beta, cfg = derive_params(targets, meta, rho, mode, delta=delta, seed=seed)
        except ValueError as exc:
            raise _fail(EXIT_INFEASIBLE, "infeasible", str(exc))
    else:
        alpha = _get_float(kv, "alpha")
        beta = _get_float(kv, "beta", 0.99 * (kappa - alpha / 2.0))
        from .spa import SPAConfig

        cfg = SPAConfig(
            eta=_get_float(kv, "eta"),
            K=_get_int(kv, "K"),
            M=_get_int(kv, "M"),
            rho=rho,
            tau=0.0,
            mode=mode,
            alpha=alpha,
            delta=delta,
            seed=seed,
        )

    # Expert overrides replace individual derived values.
    from dataclasses import replace

    if "K" in kv:
        cfg = replace(cfg, K=_get_int(kv, "K"))
    if "M" in kv:
        cfg = replace(cfg, M=_get_int(kv, "M"))
    if "eta" in kv:
        cfg = replace(cfg, eta=_get_float(kv, "eta"))
    if "alpha" in kv:
        cfg = replace(cfg, alpha=_get_float(kv, "alpha"))
    if "beta" in kv:
        beta = _get_float(kv, "beta")
    if "fhat_batch" in kv:
        cfg = replace(cfg, fhat_batch=_get_int(kv, "fhat_batch"))
    if beta <= 0 or kappa <= beta + cfg.alpha / 2.0:
        raise _fail(
            EXIT_INFEASIBLE,
            "infeasible",
            f"need kappa > beta + alpha/2: kappa={kappa}, beta={beta}, alpha={cfg.alpha}",
        )
    return cfg.alpha, beta, cfg, estimates


def write_summary(path, entries) -> None:
    with open(path, "w") as fh:
        for key, value in entries:
            fh.write(f"{key}={value}\n")


def cmd_project(args) -> int:
    part, box = read_partition(args.partition)
    w = read_vector(args.input)
    try:
        x = project(w, part, box)
    except ValueError as exc:
        raise _fail(EXIT_INVALID, "invalid", str(exc))
    write_vector(args.out, x)
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_solve_knapsack(args) -> int:
    p = Path(args.instance)
    if not p.exists():
        raise _fail(EXIT_MISSING, "missing", f"instance file not found: {p}")
    try:
        inst = read_instance(p)
        sol = solve_bnb(inst)
    except ValueError as exc:
        raise _fail(EXIT_INVALID, "invalid", str(exc))
    print(f"objective={_fmt(sol.objective)}")
    print("selection=" + "".join(str(z) for z in sol.selection))
    if args.out:
        write_vector(args.out, [float(z) for z in sol.selection])
    return EXIT_OK


def cmd_stationarity(args) -> int:
    part, box = read_partition(args.partition)
    w = read_vector(args.point)
    G = read_vector(args.gradient)
    try:
        dist = stationarity_distance(G, w, part, box)
    except ValueError as exc:
        raise _fail(EXIT_INVALID, "invalid", str(exc))
    print(f"distance={_fmt(dist)}")
    if args.out:
        write_vector(args.out, [dist])
    return EXIT_OK


def cmd_estimate(args) -> int:
    base = Path(args.spec).resolve().parent
    kv = parse_kv_file(args.spec, RUN_KEYS)
    seed = _get_int(kv, "seed", 0)
    problem = build_problem(kv, base)
    kappa = problem.kappa
    if not math.isfinite(kappa):
        raise _fail(EXIT_INFEASIBLE, "infeasible", "a finite kappa is required to estimate")
    q = _get_int(kv, "q", 250)
    iota = _get_float(kv, "iota", 0.0) or None
    est = estimate_l0_q(problem, kappa, StreamTree(derive_seed(seed, "l0q")), q=q, iota=iota)
    lines = [
        ("L0", _fmt(est.L0_hat)),
        ("Q", _fmt(est.Q_hat)),
        ("q", est.q),
        ("iota", _fmt(est.iota)),
        ("seed", seed),
    ]
    if ("eps1" in kv) or ("alpha" in kv):
        if "alpha" in kv:
            alpha = _get_float(kv, "alpha")
        else:
            alpha = _get_float(kv, "eps1") / (est.L0_hat * math.sqrt(problem.d / 12.0))
        beta = 0.99 * (kappa - alpha / 2.0)
        if beta <= 0:
            raise _fail(EXIT_INFEASIBLE, "infeasible", f"kappa={kappa} <= alpha/2={alpha / 2}")
        if problem.L0 is None:
            problem.set_lipschitz_metadata(est.L0_hat, est.Q_hat)
        part = build_partition(kv, problem)
        delta = estimate_delta(
            problem,
            part,
            BoxParams(beta=beta, kappa=kappa),
            alpha,
            StreamTree(derive_seed(seed, "delta")),
            num_samples=None if hasattr(problem, "dataset_size") else 256,
        )
        lines.insert(2, ("Delta", _fmt(delta)))
    for key, value in lines:
        print(f"{key}={value}")
    return EXIT_OK


def _train_common(args):
    spec = Path(args.spec).resolve()
    base = spec.parent
    kv = parse_kv_file(spec, RUN_KEYS)
    seed = args.seed if args.seed is not None else _get_int(kv, "seed", 0)
    out_dir = Path(args.out) if args.out else base / kv.get("out", "out")
    if not out_dir.is_absolute():
        out_dir = base / out_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    problem = build_problem(kv, base)
    part = build_partition(kv, problem)
    mode = kv.get("mode", "first")
    if mode not in ("zeroth", "first"):
        raise _fail(EXIT_PARSE, "parse", f"mode must be zeroth|first, got {mode!r}")
    rho = _get_float(kv, "rho", 2.0)
    return kv, seed, out_dir, problem, part, mode, rho


def cmd_train(args) -> int:
    t0 = time.perf_counter()
    kv, seed, out_dir, problem, part, mode, rho = _train_common(args)
    alpha, beta, cfg, estimates = _resolve_training(kv, problem, part, mode, rho, seed, out_dir)
    box = BoxParams(beta=beta, kappa=problem.kappa)
    w1, init_warnings = initialize_feasible(problem, part, box, StreamTree(seed).child("start"))
    try:
        result = run_spa(problem, part, box, cfg, w1)
    except ValueError as exc:
        raise _fail(EXIT_INFEASIBLE, "infeasible", str(exc))
    eval_samples = _get_int(kv, "eval_samples", 200)
    dist, _ = evaluate_stationarity(
        problem, result.w, part, box, cfg.alpha, mode, eval_samples, StreamTree(seed).child("eval")
    )
    write_trace_csv(out_dir / "trace.csv", result)
    write_vector(out_dir / "solution.vec", result.w)
    warnings = list(init_warnings) + list(result.warnings)
    entries = [
        ("command", "train"),
        ("seed", seed),
        ("mode", mode),
        ("rho", _fmt(rho)),
        ("alpha", _fmt(cfg.alpha)),
        ("beta", _fmt(beta)),
        ("eta", _fmt(cfg.eta)),
        ("K", cfg.K),
        ("M", cfg.M),
        ("R", result.R),
        ("stationarity", _fmt(dist)),
        ("feasible", int(is_feasible(result.w, part, box))),
        ("w_path", "solution.vec"),
        ("layer_collapse", int(any("layer_collapse" in w for w in warnings))),
    ]
    for key, value in estimates.items():
        entries.append((f"estimated_{key}", _fmt(value) if isinstance(value, float) else value))
    if hasattr(problem, "accuracy"):
        entries.append(("train_accuracy", _fmt(problem.accuracy(result.w))))
    for i, w in enumerate(warnings):
        entries.append((f"warning_{i}", w))
    entries.append(("wall_time_s", _fmt(time.perf_counter() - t0)))
    write_summary(out_dir / "summary.kv", entries)
    print(f"wrote {out_dir / 'summary.kv'}")
    return EXIT_OK


def cmd_hp_train(args) -> int:
    t0 = time.perf_counter()
    kv, seed, out_dir, problem, part, mode, rho = _train_common(args)
    # Resolve metadata and delta exactly as plain training does.
    _, _, cfg, estimates = _resolve_training(kv, problem, part, mode, rho, seed, out_dir)
    if cfg.delta is None:
        raise _fail(EXIT_PARSE, "parse", "hp-train needs eps targets (delta derivation)")
    pair = (
        Targets(
            eps1=_get_float(kv, "eps1"),
            eps2=_get_float(kv, "eps2"),
            gamma=_get_float(kv, "hp_gamma", 0.1),
            c=_get_float(kv, "hp_c", 0.5),
            phi=_get_float(kv, "hp_phi", 2.0),
        )
        if "eps1" in kv
        else Targets(
            eps3=_get_float(kv, "eps3"),
            eps4=_get_float(kv, "eps4"),
            gamma=_get_float(kv, "hp_gamma", 0.1),
            c=_get_float(kv, "hp_c", 0.5),
            phi=_get_float(kv, "hp_phi", 2.0),
        )
    )
    try:
        hp = run_high_probability(
            problem, part, BoxParams(kappa=problem.kappa), pair, rho, mode,
            delta=cfg.delta, seed=seed, jobs=args.jobs,
        )
    except ValueError as exc:
        raise _fail(EXIT_INFEASIBLE, "infeasible", str(exc))
    write_vector(out_dir / "solution.vec", hp.w_star)
    write_trace_csv(out_dir / "trace.csv", hp.runs[hp.index])
    entries = [
        ("command", "hp-train"),
        ("seed", seed),
        ("r", hp.r),
        ("psi", _fmt(hp.psi)),
        ("T", hp.T),
        ("eps_prime", _fmt(hp.eps_prime)),
        ("selected", hp.index),
        ("alpha", _fmt(hp.alpha)),
        ("beta", _fmt(hp.beta)),
    ]
    for i, dist in enumerate(hp.distances):
        entries.append((f"distance_{i}", _fmt(dist)))
    for key, value in estimates.items():
        entries.append((f"estimated_{key}", _fmt(value) if isinstance(value, float) else value))
    entries.append(("wall_time_s", _fmt(time.perf_counter() - t0)))
    write_summary(out_dir / "summary.kv", entries)
    print(f"wrote {out_dir / 'summary.kv'}")
    return EXIT_OK


def cmd_asymptotic(args) -> int:
    t0 = time.perf_counter()
    kv, seed, out_dir, problem, part, mode, rho = _train_common(args)
    _, _, cfg, estimates = _resolve_training(kv, problem, part, mode, rho, seed, out_dir)
    if "eps3" not in kv or "eps4" not in kv:
        raise _fail(EXIT_PARSE, "parse", "asymptotic mode needs eps3/eps4 targets")
    stages = _get_int(kv, "stages", 3)
    factor = _get_float(kv, "stage_factor", 2.0)
    schedule = geometric_schedule(_get_float(kv, "eps3"), _get_float(kv, "eps4"), stages, factor)
    try:
        results = run_asymptotic(
            problem, part, BoxParams(kappa=problem.kappa), schedule, rho, mode,
            delta=cfg.delta, seed=seed,
            eval_samples=_get_int(kv, "eval_samples", 500),
        )
    except ValueError as exc:
        raise _fail(EXIT_INFEASIBLE, "infeasible", str(exc))
    write_vector(out_dir / "solution.vec", results[-1].run.w)
    entries = [("command", "asymptotic"), ("seed", seed), ("stages", len(results))]
    for i, st in enumerate(results):
        entries.append((f"stage_{i}_eps3", _fmt(st.eps3)))
        entries.append((f"stage_{i}_eps4", _fmt(st.eps4)))
        entries.append((f"stage_{i}_alpha", _fmt(st.alpha)))
        entries.append((f"stage_{i}_K", st.run.config.K))
        entries.append((f"stage_{i}_stationarity", _fmt(st.stationarity)))
    for key, value in estimates.items():
        entries.append((f"estimated_{key}", _fmt(value) if isinstance(value, float) else value))
    entries.append(("wall_time_s", _fmt(time.perf_counter() - t0)))
    write_summary(out_dir / "summary.kv", entries)
    print(f"wrote {out_dir / 'summary.kv'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sparseopt", description=__doc__)
    parser.add_argument("--version", action="version", version=f"sparseopt {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("project", help="project a vector onto the constraint")
    p.add_argument("--partition", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("solve-knapsack", help="solve a knapsack instance file")
    p.add_argument("--instance", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_solve_knapsack)

    p = sub.add_parser("stationarity", help="normal-cone distance of a gradient")
    p.add_argument("--partition", required=True)
    p.add_argument("--point", required=True)
    p.add_argument("--gradient", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_stationarity)

    p = sub.add_parser("estimate", help="sample Lipschitz constants and the gap")
    p.add_argument("--spec", required=True)
    p.set_defaults(func=cmd_estimate)

    for name, func in (("train", cmd_train), ("hp-train", cmd_hp_train), ("asymptotic", cmd_asymptotic)):
        p = sub.add_parser(name)
        p.add_argument("--spec", required=True)
        p.add_argument("--out")
        p.add_argument("--seed", type=int)
        p.add_argument("--jobs", type=int, default=1)
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error={exc.kind} detail={exc}", file=sys.stderr)
        return exc.code
    except ValueError as exc:
        print(f"error=invalid detail={exc}", file=sys.stderr)
        return EXIT_INVALID


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
