"""Command-line front end.

Subcommands: ``bounds``, ``rates``, ``simulate``, ``experiment``,
``grr-check``.  Configuration is a flat JSON object (``--config file``)
and/or command-line flags; every flag maps to exactly one config key and
the merged document is schema-validated before anything runs.  Each run
writes ``report.json`` (full structured output with seed, config hash and
versions; the timestamp is isolated in one field so determinism checks
can mask it) and ``report.csv`` (flat table, 17 significant digits).

Exit codes: 0 success, 2 dominance/audit violation (so CI pipelines
fail), 1 error.
"""

from __future__ import annotations

import argparse
import difflib
import hashlib
import json
import math
import os
import platform
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
import scipy

from . import __version__, bounds, experiments, flows, rates
from .bounds import KolmogorovParams, optimized_exponent, small_ball_tail_bound
from .experiments import (CompactSet, ExperimentSpec, compare_bounds,
                          dispersion_experiment, estimate_tail, fit_rate,
                          grr_pathwise_audit, moment_hypothesis_check)
from .params import DiffFlowParams, DispersionParams, HParams

CSV_HEADER = ["kind", "name", "route", "gamma", "T", "u", "q",
              "value", "p_hat", "ci_low", "ci_high", "ok"]


class ConfigError(ValueError):
    pass


class EmissionError(RuntimeError):
    pass


def _num(lo=None, hi=None, strict_lo=False):
    def check(v):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            return "a number"
        if lo is not None and (v <= lo if strict_lo else v < lo):
            return f"a number {'>' if strict_lo else '>='} {lo}"
        if hi is not None and v > hi:
            return f"a number <= {hi}"
        return None
    return check


def _int(lo=None):
    def check(v):
        if isinstance(v, bool) or not isinstance(v, int):
            return "an integer"
        if lo is not None and v < lo:
            return f"an integer >= {lo}"
        return None
    return check


def _str(*allowed):
    def check(v):
        if not isinstance(v, str):
            return "a string"
        if allowed and v not in allowed:
            return f"one of {sorted(allowed)}"
        return None
    return check


def _bool(v):
    return None if isinstance(v, bool) else "a boolean"


def _str_any(v):
    return None if isinstance(v, str) else "a string"


def _num_list(v):
    if not isinstance(v, list) or not v:
        return "a nonempty list of numbers"
    if any(isinstance(x, bool) or not isinstance(x, (int, float)) for x in v):
        return "a nonempty list of numbers"
    return None


def _pair_list(v):
    if not isinstance(v, list) or not v:
        return "a nonempty list of [x, y] pairs"
    for item in v:
        if not isinstance(item, list) or len(item) != 2:
            return "a nonempty list of [x, y] pairs"
    return None


def _sigma_check(v):
    base = _num(0, strict_lo=True)(v)
    if base:
        return base + " (every rate formula divides by sigma^2)"
    return None


GLOBAL_KEYS = {
    "cmd": _str("bounds", "rates", "simulate", "experiment", "grr-check"),
    "seed": _int(0),
    "workers": _int(1),
    "out": _str_any,
}

COMMON_MODEL_KEYS = {
    "lambda": _num(0),
    "sigma": _sigma_check,
    "cbar": _num(1),
    "d": _int(1),
}

CMD_KEYS: dict[str, dict[str, Any]] = {
    "rates": {
        **COMMON_MODEL_KEYS,
        "op": _str("I", "I-homeo", "gamma0", "K", "K-homeo", "one-point",
                   "diff-rate", "laplace", "diff-bound", "range-density",
                   "range-tail", "schilder", "bump-rate", "neg-drift"),
        "gamma": _num(0, strict_lo=True),
        "delta": _num(0, strict_lo=True),
        "A": _num(0, strict_lo=True),
        "B": _num(),
        "k": _num(0, strict_lo=True),
        "xi": _num(0),
        "z": _num(0, strict_lo=True),
        "eps": _num(0, hi=1, strict_lo=True),
        "u_hat": _num(0, strict_lo=True),
        "T": _num(0, strict_lo=True),
        "laplace_lambda": _num(0, strict_lo=True),
        "r": _num(0),
        "u": _num(0),
        "b_tilde": _num(0, strict_lo=True),
        "optimize_z": _bool,
        "tol": _num(0, strict_lo=True),
    },
    "bounds": {
        **COMMON_MODEL_KEYS,
        "op": _str("small-ball", "exponent", "kolmogorov", "lt", "basic",
                   "entropy-J", "orlicz"),
        "route": _str("kolmogorov", "basic", "lt"),
        "gamma": _num(0, strict_lo=True),
        "T": _num(0, strict_lo=True),
        "u": _num(0, strict_lo=True),
        "q": _num(0, strict_lo=True),
        "a": _num(0, strict_lo=True),
        "b": _num(0, strict_lo=True),
        "c": _num(0, strict_lo=True),
        "kappa": _num(0, strict_lo=True),
        "side": _num(0, strict_lo=True),
        "moment": _num(0),
        "j_max": _int(0),
    },
    "simulate": {
        **COMMON_MODEL_KEYS,
        "model": _str("linear", "bump", "sde-sine", "sde-contracting",
                      "sde-bounded"),
        "gamma": _num(0, strict_lo=True),
        "side": _num(0, strict_lo=True),
        "spacing": _num(0, strict_lo=True),
        "T": _num(0, strict_lo=True),
        "n_steps": _int(1),
        "path_count": _int(1),
        "u": _num(0),
        "A": _num(0, strict_lo=True),
        "B": _num(),
        "sup_method": _str("grid", "bridge"),
    },
    "experiment": {
        **COMMON_MODEL_KEYS,
        "kind": _str("dominance", "rate-fit", "moments", "dispersion"),
        "model": _str("linear", "bump", "sde-sine", "sde-bounded"),
        "gamma": _num(0, strict_lo=True),
        "gammas": _num_list,
        "T": _num(0, strict_lo=True),
        "Ts": _num_list,
        "u": _num(0),
        "us": _num_list,
        "q": _num(1),
        "pairs": _pair_list,
        "path_count": _int(100),
        "n_steps": _int(1),
        "sup_method": _str("grid", "bridge"),
        "spacing": _num(0, strict_lo=True),
        "A": _num(0, strict_lo=True),
        "B": _num(),
        "delta": _num(0, strict_lo=True),
        "compact_side": _num(0, strict_lo=True),
        "kappa": _num(0, strict_lo=True),
    },
    "grr-check": {
        "field": _str_any,
        "grid_n": _int(8),
        "q": _num(1, strict_lo=True),
        "alpha": _num(0, strict_lo=True),
        "path_count": _int(1),
    },
}

REQUIRED = {
    "rates": ("op",),
    "bounds": ("op",),
    "simulate": ("model", "T"),
    "experiment": ("kind",),
    "grr-check": (),
}

DEFAULTS = {
    "seed": 0,
    "out": ".",
}


@dataclass(frozen=True)
class RunConfig:
    cmd: str
    payload: dict
    seed: int
    workers: int | None
    out: str

    def as_dict(self) -> dict:
        d = {"cmd": self.cmd, "seed": self.seed, "out": self.out, **self.payload}
        if self.workers is not None:
            d["workers"] = self.workers
        return d


def parse_config(text: str) -> RunConfig:
    """Validate a flat JSON config document into a RunConfig.

    Unknown keys are rejected with a nearest-key suggestion; type and
    range violations name the offending key and the expected shape.
    """
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not well-formed JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    return validate_config(raw)


def validate_config(raw: dict) -> RunConfig:
    cmd = raw.get("cmd")
    err = GLOBAL_KEYS["cmd"](cmd) if cmd is not None else "missing"
    if err:
        raise ConfigError(f"config key 'cmd' must be {err}"
                          if err != "missing" else "config must name a 'cmd'")
    allowed = {**GLOBAL_KEYS, **CMD_KEYS[cmd]}
    for key, value in raw.items():
        if key not in allowed:
            hint = difflib.get_close_matches(key, allowed.keys(), n=1)
            suggestion = f"; did you mean {hint[0]!r}?" if hint else ""
            raise ConfigError(f"unknown config key {key!r}{suggestion}")
        err = allowed[key](value)
        if err:
            raise ConfigError(f"config key {key!r} must be {err}, got {value!r}")
    for key in REQUIRED[cmd]:
        if key not in raw:
            raise ConfigError(f"config for cmd={cmd!r} requires key {key!r}")
    merged = {**DEFAULTS, **raw}
    payload = {k: v for k, v in merged.items()
               if k not in ("cmd", "seed", "workers", "out")}
    workers = merged.get("workers")
    if workers is None and os.environ.get("FLOWCHAIN_WORKERS"):
        workers = int(os.environ["FLOWCHAIN_WORKERS"])
    return RunConfig(cmd=cmd, payload=payload, seed=merged["seed"],
                     workers=workers, out=merged["out"])


# ---------------------------------------------------------------------------
# result assembly
# ---------------------------------------------------------------------------

def _row(kind: str, name: str, route: str = "", gamma=None, T=None, u=None,
         q=None, value=None, p_hat=None, ci_low=None, ci_high=None,
         ok=None) -> dict:
    return {"kind": kind, "name": name, "route": route, "gamma": gamma,
            "T": T, "u": u, "q": q, "value": value, "p_hat": p_hat,
            "ci_low": ci_low, "ci_high": ci_high, "ok": ok}


def _hp(payload: dict) -> HParams:
    return HParams(lam=payload.get("lambda", 0.0),
                   sigma=payload.get("sigma", 1.0),
                   cbar=payload.get("cbar", 2.0),
                   dim=payload.get("d", 1))


def _dp(payload: dict) -> DispersionParams:
    return DispersionParams(delta=payload["delta"],
                            a_diff=payload.get("A", 1.0),
                            b_drift=payload.get("B", 0.0),
                            hp=_hp(payload))


def _model(payload: dict, seed: int):
    name = payload["model"]
    if name == "linear":
        return flows.LinearFlowModel(_hp(payload))
    if name == "bump":
        return flows.BumpFieldModel(_hp(payload), spacing=payload.get("spacing", 0.25))
    if name == "sde-sine":
        return flows.sine_sde_model()
    if name == "sde-contracting":
        return flows.contracting_sde_model(dim=payload.get("d", 1))
    if name == "sde-bounded":
        return flows.bounded_sde_model(A=payload.get("A", 1.0),
                                       B=payload.get("B", 0.5))
    raise ConfigError(f"unknown model {name!r}")


def _need(payload: dict, *keys: str) -> None:
    for key in keys:
        if key not in payload:
            raise ConfigError(f"this operation requires config key {key!r}")


def _run_rates(cfg: RunConfig):
    p = cfg.payload
    op = p["op"]
    rows = []
    extra: dict = {}
    if op == "I":
        _need(p, "gamma")
        v = rates.small_ball_rate(_hp(p), p["gamma"])
        rows.append(_row("rates", "I", gamma=p["gamma"], value=v))
    elif op == "I-homeo":
        _need(p, "gamma")
        v = rates.small_ball_rate_homeo(_hp(p), p["gamma"])
        rows.append(_row("rates", "I_homeo", gamma=p["gamma"], value=v))
    elif op == "gamma0":
        _need(p, "delta")
        v = rates.gamma0(_dp(p))
        rows.append(_row("rates", "gamma0", value=v))
    elif op == "K":
        _need(p, "delta", "A", "B")
        v = rates.growth_constant_K(_dp(p))
        rows.append(_row("rates", "K", value=v))
    elif op == "K-homeo":
        _need(p, "delta", "A", "B")
        v = rates.growth_constant_homeo(_dp(p))
        rows.append(_row("rates", "K_homeo", value=v))
    elif op == "one-point":
        _need(p, "k", "A", "B")
        v = rates.one_point_rate(p["k"], p["A"], p["B"])
        rows.append(_row("rates", "one_point_rate", value=v))
    elif op == "diff-rate":
        _need(p, "xi", "sigma")
        v = rates.diff_flow_rate(p["xi"], p["sigma"])
        rows.append(_row("rates", "diff_flow_rate", value=v))
    elif op == "laplace":
        _need(p, "laplace_lambda", "z")
        v = rates.hitting_laplace(p["laplace_lambda"], _hp(p), p["z"])
        rows.append(_row("rates", "hitting_laplace", value=v))
    elif op == "diff-bound":
        _need(p, "xi", "z", "eps", "u_hat", "T")
        params = DiffFlowParams(hp=_hp(p), xi=p["xi"], z=p["z"], eps=p["eps"],
                                u_hat=p["u_hat"])
        v = rates.diff_flow_finite_bound(params, p["T"],
                                         optimize_z=p.get("optimize_z", False))
        rows.append(_row("rates", "diff_flow_log_bound", T=p["T"], value=v))
    elif op == "range-density":
        _need(p, "r")
        v = rates.bm_range_density(p["r"], p.get("tol", 1e-12))
        rows.append(_row("rates", "bm_range_density", value=v))
    elif op == "range-tail":
        _need(p, "u")
        tail, dom = rates.bm_range_tail(p["u"])
        rows.append(_row("rates", "bm_range_tail", u=p["u"], value=tail,
                         ok=tail <= dom))
        rows.append(_row("rates", "bm_range_dominator", u=p["u"], value=dom))
    elif op == "schilder":
        _need(p, "k", "A", "b_tilde")
        v = rates.schilder_infimum(p["k"], p["A"], p["b_tilde"])
        rows.append(_row("rates", "schilder_infimum", value=v))
    elif op == "bump-rate":
        _need(p, "gamma", "xi")
        v = rates.bump_field_rate(p["gamma"], p["xi"], _hp(p))
        rows.append(_row("rates", "bump_field_rate", gamma=p["gamma"], value=v))
    elif op == "neg-drift":
        _need(p, "delta", "A", "B")
        v = rates.negative_drift_growth_bound(_dp(p))
        rows.append(_row("rates", "negative_drift_growth_bound", value=v))
    for r in rows:
        print(f"{r['name']} = {r['value']}")
    return rows, extra, False


def _run_bounds(cfg: RunConfig):
    p = cfg.payload
    op = p["op"]
    rows = []
    if op == "small-ball":
        _need(p, "route", "gamma", "T", "u")
        v = small_ball_tail_bound(p["route"], _hp(p), p["gamma"], p["T"],
                                  p["u"], p.get("q"))
        rows.append(_row("bounds", "small_ball_tail_bound", route=p["route"],
                         gamma=p["gamma"], T=p["T"], u=p["u"],
                         q=p.get("q"), value=v))
    elif op == "exponent":
        _need(p, "gamma")
        res = optimized_exponent(_hp(p), p["gamma"])
        rows.append(_row("bounds", "optimized_exponent", gamma=p["gamma"],
                         q=res.q_star, value=res.rate, ok=not res.at_boundary))
    elif op == "kolmogorov":
        _need(p, "a", "b", "c", "kappa", "u")
        kp = KolmogorovParams(a=p["a"], b=p["b"], c=p["c"],
                              dim=p.get("d", 1), kappa=p["kappa"])
        kb = bounds.kolmogorov_bounds(kp, p["u"])
        rows.append(_row("bounds", "kolmogorov_tail", u=p["u"],
                         value=kb.tail_bound, p_hat=kb.tail_bound_capped))
        rows.append(_row("bounds", "kolmogorov_s_moment", value=kb.s_moment_bound))
        rows.append(_row("bounds", "kolmogorov_modulus_coeff", value=kb.modulus_coeff))
    elif op == "lt":
        _need(p, "side", "q", "c", "u")
        spec = bounds.cube_entropy_spec(p["side"], p.get("d", 1), p["q"])
        v = bounds.lt_tail_bound(spec, p["c"], p["u"])
        rows.append(_row("bounds", "lt_tail_bound", u=p["u"], q=p["q"], value=v))
    elif op == "basic":
        _need(p, "gamma", "T", "q", "u")
        hp = _hp(p)
        net = bounds.default_net_spec(p["gamma"], p["T"], hp,
                                      p.get("j_max", 512))
        tail = bounds.hp_pairwise_tail(hp, p["T"], p["q"])
        v = bounds.basic_chaining_bound(net, tail, p["u"])
        rows.append(_row("bounds", "basic_chaining_bound", gamma=p["gamma"],
                         T=p["T"], u=p["u"], q=p["q"], value=v))
    elif op == "entropy-J":
        _need(p, "side", "q")
        v = bounds.cube_entropy_J(p["side"], p.get("d", 1), p["q"])
        rows.append(_row("bounds", "cube_entropy_J", q=p["q"], value=v))
    elif op == "orlicz":
        _need(p, "q", "moment")
        v = bounds.orlicz_power_norm(p["q"], p["moment"])
        rows.append(_row("bounds", "orlicz_power_norm", q=p["q"], value=v))
    for r in rows:
        print(f"{r['name']} = {r['value']}")
    return rows, {}, False


def _run_simulate(cfg: RunConfig):
    p = cfg.payload
    model = _model(p, cfg.seed)
    T = p["T"]
    paths = p.get("path_count", 100)
    rows = []
    if isinstance(model, flows.LinearFlowModel):
        side = p.get("side", math.exp(-p.get("gamma", 1.0) * T))
        n_steps = p.get("n_steps", 4096)
        sups = [flows.simulate_linear(model, side, T, n_steps, i, cfg.seed).sup_diam
                for i in range(paths)]
        arr = np.array(sups)
    elif isinstance(model, flows.BumpFieldModel):
        side = p.get("side", 1.0)
        n_steps = p.get("n_steps", 1024)
        arr = np.array([
            flows.simulate_bump_field(model, side, T, n_steps, i, cfg.seed).sup_diam
            for i in range(paths)])
    else:
        n_steps = p.get("n_steps", max(64, int(math.ceil(T / model.stable_dt())) * 4))
        pts = np.linspace(0.0, 1.0, 5)[:, None] if model.dim == 1 else \
            np.zeros((1, model.dim))
        stats_ = experiments.sde_batch_stats(model, pts, T, n_steps, cfg.seed,
                                             paths, workers=cfg.workers)
        arr = stats_.sup_diam
    rows.append(_row("simulate", "sup_diam_mean", T=T, value=float(np.mean(arr))))
    rows.append(_row("simulate", "sup_diam_max", T=T, value=float(np.max(arr))))
    if "u" in p:
        exceed = int(np.sum(arr >= p["u"]))
        est = experiments.make_tail_estimate(exceed, len(arr), cfg.seed, p["u"], T)
        rows.append(_row("simulate", "tail_estimate", T=T, u=p["u"],
                         value=est.p_hat, p_hat=est.p_hat, ci_low=est.ci_low,
                         ci_high=est.ci_high))
    for r in rows:
        print(f"{r['name']} = {r['value']}")
    return rows, {}, False


def _run_experiment(cfg: RunConfig):
    p = cfg.payload
    kind = p["kind"]
    rows = []
    extra: dict = {}
    violation = False
    if kind == "dominance":
        model = _model({**p, "model": p.get("model", "linear")}, cfg.seed)
        gammas = p.get("gammas", [p.get("gamma", 2.0)])
        Ts = p.get("Ts", [p.get("T", 1.0)])
        us = p.get("us", [p.get("u", 1.0)])
        for g in gammas:
            for T in Ts:
                for u in us:
                    spec = ExperimentSpec(
                        model=model, gamma=g, u=u, T=T,
                        path_count=p.get("path_count", 10000), seed=cfg.seed,
                        n_steps=p.get("n_steps"),
                        sup_method=p.get("sup_method", "bridge"),
                        workers=cfg.workers)
                    comp = compare_bounds(spec)
                    for row in comp.rows:
                        rows.append(_row("dominance", "bound_vs_estimate",
                                         route=row.route, gamma=g, T=T, u=u,
                                         value=row.bound, p_hat=row.p_hat,
                                         ci_low=comp.estimate.ci_low,
                                         ci_high=row.ci_high, ok=row.dominant))
                    if not comp.all_dominant:
                        violation = True
    elif kind == "rate-fit":
        model = _model({**p, "model": p.get("model", "linear")}, cfg.seed)
        _need(p, "gamma", "Ts", "u")
        ests = []
        for T in p["Ts"]:
            spec = ExperimentSpec(
                model=model, gamma=p["gamma"], u=p["u"], T=T,
                path_count=p.get("path_count", 10000), seed=cfg.seed,
                n_steps=p.get("n_steps"),
                sup_method=p.get("sup_method", "bridge"), workers=cfg.workers)
            est = estimate_tail(spec)
            ests.append(est)
            rows.append(_row("rate-fit", "tail_estimate", gamma=p["gamma"],
                             T=T, u=p["u"], value=est.p_hat, p_hat=est.p_hat,
                             ci_low=est.ci_low, ci_high=est.ci_high))
        fit = fit_rate(ests)
        extra["rate_fit"] = {"slope": fit.slope, "intercept": fit.intercept,
                             "residual_max": fit.residual_max,
                             "per_horizon_rates": fit.per_horizon_rates.tolist()}
        rows.append(_row("rate-fit", "slope", gamma=p["gamma"], value=fit.slope))
    elif kind == "moments":
        model = _model({**p, "model": p.get("model", "sde-sine")}, cfg.seed)
        _need(p, "q", "T", "pairs")
        if isinstance(model, flows.SdeFlowModel):
            hp = flows.lipschitz_to_H_params(model)
        else:
            hp = model.hp
        report = moment_hypothesis_check(
            model, hp, p["q"], p["T"], [tuple(x) for x in p["pairs"]],
            p.get("path_count", 10000), cfg.seed, n_steps=p.get("n_steps"),
            workers=cfg.workers)
        for row_ in report.rows:
            rows.append(_row("moments", f"pair_{row_.pair}", T=p["T"],
                             q=p["q"], value=row_.ratio, p_hat=row_.bound,
                             ok=row_.ok))
        violation = not report.passed
    elif kind == "dispersion":
        model = _model({**p, "model": p.get("model", "sde-bounded")}, cfg.seed)
        _need(p, "gamma", "T", "delta", "compact_side")
        hp = flows.lipschitz_to_H_params(model)
        dp = DispersionParams(delta=p["delta"], a_diff=p.get("A", 1.0),
                              b_drift=max(p.get("B", 0.5), 0.0), hp=hp)
        spec = ExperimentSpec(
            model=model, gamma=p["gamma"], u=p.get("u", 1.0), T=p["T"],
            path_count=p.get("path_count", 1000), seed=cfg.seed,
            n_steps=p.get("n_steps"), workers=cfg.workers,
            compact=CompactSet(kind="cube", delta=p["delta"],
                               side=p["compact_side"],
                               origin=(0.0,) * model.dim))
        report = dispersion_experiment(spec, dp, kappa=p.get("kappa"))
        rows.append(_row("dispersion", "covering_count", gamma=p["gamma"],
                         T=p["T"], value=report.covering_count,
                         ok=report.covering_ok))
        rows.append(_row("dispersion", "s1_center_escape", T=p["T"],
                         u=report.s1_center_escape.u,
                         value=report.s1_total,
                         p_hat=report.s1_center_escape.p_hat,
                         ci_high=report.s1_center_escape.ci_high))
        rows.append(_row("dispersion", "s2_cell_diameter", T=p["T"], u=1.0,
                         value=report.s2_total,
                         p_hat=report.s2_cell_diameter.p_hat,
                         ci_high=report.s2_cell_diameter.ci_high))
        rows.append(_row("dispersion", "growth_vs_K", T=p["T"],
                         value=report.growth_max, p_hat=report.K,
                         ok=report.growth_ok))
        violation = not report.growth_ok
        extra["dispersion"] = {"K": report.K, "kappa": report.kappa,
                               "subsampled": report.subsampled}
    for r in rows:
        print(f"{r['kind']}/{r['name']}: value={r['value']} ok={r['ok']}")
    return rows, extra, violation


def _run_grr_check(cfg: RunConfig):
    p = cfg.payload
    report = grr_pathwise_audit(
        field=p.get("field", "brownian"),
        grid_n=p.get("grid_n", 256),
        q=p.get("q", 4.0),
        p_exponent=p.get("alpha", 1.0),
        path_count=p.get("path_count", 100),
        seed=cfg.seed)
    rows = [
        _row("grr", "violations", value=report.violations,
             ok=report.violations == 0),
        _row("grr", "pairs_checked", value=report.pairs_checked),
        _row("grr", "min_tightness_ratio", value=report.min_ratio),
        _row("grr", "median_tightness_ratio", value=report.median_ratio),
    ]
    print(f"grr violations = {report.violations} over {report.pairs_checked} pairs "
          f"({report.paths_used} paths, {report.paths_excluded} excluded)")
    return rows, {"paths_used": report.paths_used,
                  "paths_excluded": report.paths_excluded}, report.violations > 0


# ---------------------------------------------------------------------------
# report emission
# ---------------------------------------------------------------------------

def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


def emit_report(rows: list[dict], extra: dict, config: RunConfig,
                out_dir: str | Path) -> tuple[Path, Path]:
    """Write report.json and report.csv; abort on any nonfinite value."""
    for i, row in enumerate(rows):
        for key, value in row.items():
            if isinstance(value, (int, float, np.floating, np.integer)) \
                    and not isinstance(value, bool) and not math.isfinite(value):
                raise EmissionError(
                    f"nonfinite value {value!r} in result row {i} field {key!r}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    config_dict = config.as_dict()
    config_hash = hashlib.sha256(
        json.dumps(config_dict, sort_keys=True).encode()).hexdigest()
    doc = {
        "config": config_dict,
        "config_hash": config_hash,
        "results": rows,
        "extra": extra,
        "seed": config.seed,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime()),
        "versions": {
            "flowchain": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
    }
    json_path = out / "report.json"
    json_path.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")
    csv_path = out / "report.csv"
    lines = [",".join(CSV_HEADER)]
    for row in rows:
        lines.append(",".join(_fmt(row[k]) for k in CSV_HEADER))
    csv_path.write_text("\n".join(lines) + "\n")
    return json_path, csv_path


RUNNERS = {
    "rates": _run_rates,
    "bounds": _run_bounds,
    "simulate": _run_simulate,
    "experiment": _run_experiment,
    "grr-check": _run_grr_check,
}


def run(config: RunConfig) -> int:
    """Execute a validated config; 0 ok, 2 dominance/audit violation, 1 error."""
    try:
        rows, extra, violation = RUNNERS[config.cmd](config)
        json_path, csv_path = emit_report(rows, extra, config, config.out)
        print(f"wrote {json_path} and {csv_path}")
    except (ConfigError, EmissionError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error ({getattr(exc, 'filename', '?')}): {exc}", file=sys.stderr)
        return 1
    return 2 if violation else 0


# ---------------------------------------------------------------------------
# argument parsing: every flag maps to exactly one config key
# ---------------------------------------------------------------------------

_FLAG_TYPES = {str: str, int: int, float: float}

FLAGS: dict[str, tuple[type, str]] = {
    # key -> (type, help)
    "seed": (int, "RNG seed (64-bit)"),
    "workers": (int, "worker threads for Monte Carlo chunks"),
    "out": (str, "output directory for report.json/report.csv"),
    "op": (str, "operation name within the subcommand"),
    "route": (str, "chaining route: kolmogorov | basic | lt"),
    "model": (str, "flow model name"),
    "kind": (str, "experiment kind"),
    "field": (str, "audited field: brownian | linear:<slope>"),
    "lambda": (float, "drift exponent"),
    "sigma": (float, "volatility"),
    "cbar": (float, "moment constant"),
    "d": (int, "spatial dimension"),
    "gamma": (float, "cube shrink rate"),
    "delta": (float, "box dimension"),
    "A": (float, "diffusion bound"),
    "B": (float, "radial drift bound"),
    "k": (float, "growth speed"),
    "xi": (float, "excess exponent"),
    "z": (float, "ladder step"),
    "eps": (float, "ladder slack"),
    "u_hat": (float, "displacement cap"),
    "T": (float, "time horizon"),
    "laplace_lambda": (float, "Laplace-transform parameter"),
    "r": (float, "range value"),
    "u": (float, "threshold"),
    "b_tilde": (float, "scaled drift magnitude"),
    "q": (float, "moment order / Young exponent"),
    "a": (float, "moment order (continuity criterion)"),
    "b": (float, "excess exponent (continuity criterion)"),
    "c": (float, "moment or Lipschitz constant"),
    "kappa": (float, "Hoelder exponent / growth speed"),
    "side": (float, "cube side length"),
    "moment": (float, "q-th absolute moment"),
    "j_max": (int, "net levels"),
    "spacing": (float, "bump lattice spacing"),
    "n_steps": (int, "time steps"),
    "path_count": (int, "Monte Carlo paths"),
    "sup_method": (str, "grid | bridge"),
    "grid_n": (int, "audit grid size"),
    "alpha": (float, "gauge exponent p(s)=s^alpha"),
    "compact_side": (float, "compact cube side"),
    "tol": (float, "series truncation tolerance"),
    "optimize_z": (bool, "optimise the ladder step"),
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flowchain",
        description="Chaining tail bounds, rate functions and Monte Carlo "
                    "verification for stochastic flows")
    sub = parser.add_subparsers(dest="cmd", required=True)
    for cmd, keys in CMD_KEYS.items():
        sp = sub.add_parser(cmd)
        sp.add_argument("--config", type=str, default=None,
                        help="JSON config file; flags override its keys")
        for key in ("seed", "workers", "out"):
            typ, hlp = FLAGS[key]
            sp.add_argument(f"--{key}", type=typ, default=None, help=hlp)
        for key in keys:
            typ, hlp = FLAGS[key]
            flag = "--" + key.replace("_", "-")
            if typ is bool:
                sp.add_argument(flag, dest=key, action="store_true",
                                default=None, help=hlp)
            else:
                sp.add_argument(flag, dest=key, type=typ, default=None, help=hlp)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    raw: dict = {}
    if args.config:
        try:
            raw = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            print(f"error reading config {args.config!r}: {exc}", file=sys.stderr)
            return 1
        if not isinstance(raw, dict):
            print("error: config file must hold a JSON object", file=sys.stderr)
            return 1
    raw["cmd"] = args.cmd
    for key, value in vars(args).items():
        if key in ("cmd", "config") or value is None:
            continue
        raw[key] = value
    try:
        config = validate_config(raw)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
