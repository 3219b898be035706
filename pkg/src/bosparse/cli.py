"""Batch scenario runner: ``bosparse run``."""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path
from typing import Any, Callable

import numpy as np

from .basis import BallBasis, build_arc_basis, cyclic_metric, dyadic_basis, load_basis, verify_axioms
from .covering import economical_cover
from .operators import (
    discrete_hilbert,
    maximal_modulation,
    maximal_operator,
    martingale_transform,
    random_signs,
    verify_bo,
    walsh_modulators,
)
from .sparse import DominationError, oracle_dyadic_sparse, theorem1_sparse, verify_domination
from .weights import (
    ap_characteristic,
    buckley_sweep,
    check_weight_lemmas,
    conjugate,
    dual_weight,
    power_weight,
    rows_to_csv,
    sparse_weighted_bound_check,
)

CONFIG_VERSION = 1
SEED_MAX = 2**64 - 1


class ConfigError(ValueError):
    pass


class Outcome:
    """Rows for the CSV plus failed assertions for the report."""

    def __init__(self, header: list[str]):
        self.header = header
        self.rows: list[list] = []
        self.failures: list[dict] = []
        self.summary: dict[str, Any] = {}

    def add(self, *row) -> None:
        self.rows.append(list(row))

    def require(self, cond, check: str, **detail) -> None:
        if not cond:
            self.failures.append({"check": check, **{k: _jsonable(v) for k, v in detail.items()}})


def _jsonable(v):
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else str(v)
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


# -- fixtures ------------------------------------------------------------------


def make_fixture(params: dict) -> tuple[str, BallBasis]:
    kind = params["fixture"]
    if kind == "dyadic":
        d = int(params["depth"])
        return f"dyadic{d}", dyadic_basis(d)
    if kind == "arc":
        n = int(params["n"])
        return f"arc{n}", build_arc_basis(cyclic_metric(n, float(params["triangle_constant"])))
    if kind == "file":
        path = params["path"]
        if not path:
            raise ConfigError("fixture=file needs a path")
        return Path(path).stem, load_basis(path)
    raise ConfigError(f"unknown fixture kind {kind!r}")


FIXTURE = {"fixture": "dyadic", "depth": 3, "n": 16, "triangle_constant": 1.0, "path": ""}


def _random_f(rng: np.random.Generator, n: int) -> np.ndarray:
    f = rng.exponential(size=n) * (rng.random(n) < 0.5)
    f[rng.integers(n)] += rng.exponential() + 0.1
    return f * rng.choice([-1.0, 1.0], size=n)


# -- scenarios -----------------------------------------------------------------


def run_axioms(params, seed):
    name, basis = make_fixture(params)
    rep = verify_axioms(basis)
    checks = ["positive_measure", "pairs_covered", "approximation", "hull", "two_balls", "hull_growth", "doubling"]
    out = Outcome(["fixture", "atoms", "balls", "K", "eta", "D", "D_method"] + checks + ["ok"])
    eta = "" if rep.eta is None else rep.eta
    D = "" if rep.D is None else rep.D
    out.add(name, basis.space.atom_count, len(basis), rep.K, eta, D, rep.D_method, *[rep.passed.get(c) for c in checks], rep.ok)
    out.require(rep.ok, "axioms", failures=rep.failures[:5])
    return out


def run_covering(params, seed):
    name, basis = make_fixture(params)
    n = basis.space.atom_count
    if n <= int(params["exhaustive_limit"]):
        targets = range(1, 1 << n)
    else:
        rng = np.random.default_rng(seed)
        targets = sorted({int(x) for x in rng.integers(1, 1 << min(n, 62), size=int(params["samples"]))})
    out = Outcome(["fixture", "target", "cover", "cover_measure", "bound", "ok"])
    K = basis.K
    for t in targets:
        E = [x for x in range(n) if t >> x & 1]
        cover = economical_cover(basis, E)
        tot = math.fsum(basis.measures[c] for c in cover)
        bound = 2 * K * basis.space.measure(E)
        covered = np.any(basis.ind[cover], axis=0)[E].all()
        ok = bool(covered and tot <= bound * (1 + 1e-12))
        out.add(name, " ".join(map(str, E)), " ".join(map(str, cover)), tot, bound, ok)
        out.require(ok, "economical_cover", target=E, cover=cover)
    return out


def make_operator(params, basis: BallBasis, seed):
    kind = params["operator"]
    if kind == "martingale":
        return martingale_transform(basis, random_signs(basis, seed) if params["random_signs"] else None)
    if kind == "maximal":
        return maximal_operator(basis, float(params["r"]))
    if kind == "hilbert":
        return discrete_hilbert(basis.space.atom_count)
    raise ConfigError(f"unknown operator kind {kind!r}")


def run_bo_constants(params, seed):
    name, basis = make_fixture(params)
    T = make_operator(params, basis, seed)
    rep = verify_bo(T, basis, float(params["r"]), trials=int(params["trials"]), seed=seed)
    return _bo_outcome(name, T, rep)


def _bo_outcome(name, T, rep):
    out = Outcome(["fixture", "operator", "L1", "L1_method", "L2", "L2_method", "weak_norm", "parent_step", "nested_pair_bound", "monotonicity", "delta_equality"])
    flag = lambda d: "" if not d else bool(d.get("passed"))
    out.add(name, T.name, rep.L1_estimate, rep.L1_method, rep.L2_estimate, rep.L2_method, rep.weak_norm,
            "" if rep.parent_step is None else rep.parent_step, flag(rep.nested_pair_bound), flag(rep.monotonicity), flag(rep.delta_equality))
    out.require(math.isfinite(rep.L1_estimate) and math.isfinite(rep.L2_estimate), "finite_constants")
    for key in ("nested_pair_bound", "monotonicity", "delta_equality"):
        d = getattr(rep, key)
        out.require(not d or d.get("passed"), key, detail=d)
    return out


def run_domination(params, seed):
    name, basis = make_fixture(params)
    T = make_operator(params, basis, seed)
    r = float(params["r"])
    lam = params["lambda"]
    rep = verify_bo(T, basis, r, trials=int(params["trials"]), seed=seed)
    rng = np.random.default_rng([seed, 1])
    out = Outcome(["fixture", "operator", "seed", "lambda", "beta_final", "gamma_certified", "C_domination", "tree_size", "pruned_size"])
    for k in range(int(params["samples"])):
        f = _random_f(rng, basis.space.atom_count)
        try:
            res = theorem1_sparse(T, basis, f, r=r, lam=lam, constants=rep)
        except DominationError as exc:
            out.require(False, "domination", sample=k, atom=exc.atom)
            continue
        problems = res.sparse.verify(basis)
        dom = verify_domination(T, basis, res.sparse, f, r)
        out.add(name, T.name, seed, res.tree.lam, res.tree.beta_final, res.gamma, res.C, len(res.tree.nodes), len(res.pruned.retained))
        out.require(res.ok, "pipeline_checks", sample=k, checks=res.checks)
        out.require(not problems, "certificate", sample=k, problems=problems)
        out.require(dom.ok and math.isfinite(res.C), "finite_domination", sample=k)
    return out


def _weight(params, basis: BallBasis, seed):
    kind = params["weight"]
    n = basis.space.atom_count
    if kind == "power":
        if basis.kind != "tree" or 2 ** int(math.log2(n)) != n:
            raise ConfigError("power weights need a dyadic fixture")
        return power_weight(int(math.log2(n)), float(params["a"])).values
    if kind == "random":
        rng = np.random.default_rng([seed, 2])
        return np.exp(rng.normal(scale=float(params["spread"]), size=n))
    raise ConfigError(f"unknown weight kind {kind!r}")


def run_weights(params, seed):
    name, basis = make_fixture(params)
    p = float(params["p"])
    w = _weight(params, basis, seed)
    char = ap_characteristic(basis, w, p)
    sigma = dual_weight(w, p)
    dual_char = ap_characteristic(basis, sigma, conjugate(p))
    dual_error = abs(dual_char - char ** (1 / (p - 1))) / char ** (1 / (p - 1))
    lem = check_weight_lemmas(basis, w, p, samples=int(params["samples"]), seed=seed)
    if basis.is_tree:
        rng = np.random.default_rng([seed, 3])
        S = oracle_dyadic_sparse(basis, np.abs(_random_f(rng, basis.space.atom_count)))
    else:
        S = [basis.whole]
    gamma = S.gamma if hasattr(S, "gamma") else 1.0
    sw = sparse_weighted_bound_check(basis, S, w, p, gamma, seed=seed)
    out = Outcome(["fixture", "p", "characteristic", "dual_characteristic", "dual_identity_error", "nested_ok", "weak_constant", "weak_bound", "sparse_size", "gamma", "sparse_norm", "norm_method", "route", "c_min", "duality_ok"])
    out.add(name, p, char, dual_char, dual_error, lem.nested_ok, lem.weak_constant, lem.weak_bound, len(getattr(S, "balls", S)), gamma,
            sw.norm.value, sw.norm.method, sw.route, sw.c_min, "" if sw.duality_ok is None else sw.duality_ok)
    out.require(char >= 1 - 1e-12, "characteristic_at_least_one", value=char)
    out.require(dual_error <= 1e-9, "dual_identity", error=dual_error)
    out.require(lem.ok, "weight_lemmas", failures=lem.failures[:5])
    out.require(sw.duality_ok is not False, "duality", failures=sw.failures)
    return out


def run_buckley(params, seed):
    grid = params["grid"]
    sweep = buckley_sweep(int(params["depth"]), float(params["p"]), grid, seed=seed)
    out = Outcome(["a", "characteristic", "norm_lower_bound", "ratio"])
    for r in sweep.rows:
        out.add(r.a, r.characteristic, r.norm, r.ratio)
    out.require(sweep.monotone, "characteristic_monotone")
    limit = params["ratio_limit"]
    if limit is not None:
        out.require(sweep.max_ratio <= float(limit), "ratio_bounded", max_ratio=sweep.max_ratio, limit=limit)
    out.summary["max_ratio"] = sweep.max_ratio
    return out


def run_modulation(params, seed):
    depth = int(params["depth"])
    basis = dyadic_basis(depth)
    n = basis.space.atom_count
    T = martingale_transform(basis, random_signs(basis, seed) if params["random_signs"] else None)
    TG = maximal_modulation(T, walsh_modulators(n))
    rng = np.random.default_rng([seed, 4])
    out = Outcome(["check", "ball", "value", "ok"])
    for B in range(len(basis)):
        outside = ~basis.ind[basis.hull[B]]
        if not outside.any():
            continue
        worst = 0.0
        for _ in range(int(params["trials"])):
            vals = TG(rng.standard_normal(n) * outside)[basis.ind[B]]
            worst = max(worst, float(vals.max() - vals.min()))
        out.add("localization_difference", B, worst, worst == 0.0)
        out.require(worst == 0.0, "localization_difference", ball=B, value=worst)
    rep = verify_bo(TG, basis, 1.0, trials=int(params["trials"]), seed=seed)
    for k in range(int(params["samples"])):
        f = _random_f(rng, n)
        try:
            res = theorem1_sparse(TG, basis, f, constants=rep)
        except DominationError as exc:
            out.require(False, "domination", sample=k, atom=exc.atom)
            continue
        out.add("domination_C", k, res.C, res.ok)
        out.require(res.ok, "pipeline_checks", sample=k, checks=res.checks)
    return out


def run_cz_demo(params, seed):
    n = int(params["n"])
    T = discrete_hilbert(n)
    basis = build_arc_basis(cyclic_metric(n))
    rep = verify_bo(T, basis, 1.0, trials=int(params["trials"]), seed=seed)
    return _bo_outcome(f"arc{n}", T, rep)


# name -> (runner, defaults, randomized)
SCENARIOS: dict[str, tuple[Callable, dict, bool]] = {
    "axioms": (run_axioms, dict(FIXTURE), False),
    "covering": (run_covering, {**FIXTURE, "exhaustive_limit": 12, "samples": 500}, False),
    "bo-constants": (run_bo_constants, {**FIXTURE, "operator": "martingale", "random_signs": True, "r": 1.0, "trials": 20}, True),
    "domination": (run_domination, {**FIXTURE, "depth": 5, "operator": "martingale", "random_signs": True, "r": 1.0, "lambda": 48.0, "trials": 10, "samples": 5}, True),
    "weights": (run_weights, {**FIXTURE, "p": 2.0, "weight": "random", "a": 0.5, "spread": 1.0, "samples": 200}, True),
    "buckley": (run_buckley, {"depth": 6, "p": 2.0, "grid": None, "ratio_limit": None}, True),
    "modulation": (run_modulation, {"depth": 3, "random_signs": True, "trials": 10, "samples": 5}, True),
    "cz-demo": (run_cz_demo, {"n": 16, "trials": 10}, True),
}


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _check_seed(seed) -> int:
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed <= SEED_MAX:
        raise ConfigError(f"seed must be an unsigned 64-bit integer, got {seed!r}")
    return seed


def load_config(path: str | Path) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(data) - {"version", "scenario", "params", "seed"}
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if data.get("version") != CONFIG_VERSION:
        raise ConfigError(f"config version must be {CONFIG_VERSION}")
    if "scenario" not in data:
        raise ConfigError("config needs a scenario")
    if not isinstance(data.get("params", {}), dict):
        raise ConfigError("params must be an object")
    return data


def resolve(scenario: str, overrides: dict, seed: int | None) -> tuple[dict, int]:
    if scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario {scenario!r}; choose from {sorted(SCENARIOS)}")
    _, defaults, randomized = SCENARIOS[scenario]
    unknown = set(overrides) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown keys for {scenario}: {sorted(unknown)}")
    if seed is None:
        if randomized:
            raise ConfigError(f"scenario {scenario} is randomized and needs --seed")
        seed = 0
    return {**defaults, **overrides}, _check_seed(seed)


def run_scenario(scenario: str, params: dict, seed: int, out_dir: Path) -> int:
    runner = SCENARIOS[scenario][0]
    outcome = runner(params, seed)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / f"{scenario}.csv").write_text(rows_to_csv(outcome.header, outcome.rows))
    report = {
        "scenario": scenario,
        "seed": seed,
        "params": _jsonable(params),
        "status": "fail" if outcome.failures else "pass",
        "failures": outcome.failures,
        "rows": len(outcome.rows),
        "summary": _jsonable(outcome.summary),
    }
    (out_dir / f"{scenario}_report.json").write_text(json.dumps(report, sort_keys=True, indent=2) + "\n")
    return 1 if outcome.failures else 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bosparse", description="Sparse domination experiments on finite ball bases.")
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one scenario")
    src = run.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", help="JSON config file")
    src.add_argument("--scenario", help=f"one of {', '.join(SCENARIOS)}")
    run.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a parameter")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--seed", type=int, help="unsigned 64-bit seed")
    return ap


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        overrides: dict = {}
        seed = args.seed
        if args.config:
            cfg = load_config(args.config)
            scenario = cfg["scenario"]
            overrides.update(cfg.get("params", {}))
            if seed is None:
                seed = cfg.get("seed")
        else:
            scenario = args.scenario
        for item in args.set:
            key, sep, value = item.partition("=")
            if not sep or not key:
                raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
            overrides[key] = _parse_value(value)
        params, seed = resolve(scenario, overrides, seed)
        return run_scenario(scenario, params, seed, Path(args.out))
    except (ConfigError, ValueError, TypeError, KeyError) as exc:
        # bad parameter values surface as ValueError from the library
        print(f"bosparse: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
