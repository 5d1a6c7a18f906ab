"""Experiment configuration: a strict INI-style file with four sections.

Grammar (see README for the full reference):

    [instance]
    distributions = 16 * uniform(0, 1); texp(1, 0, 2)
    value = additive(constant=1)
    budget = 4.0

    [solver]      kind, grid, m, marginal_samples, noisy, appendix_schedule
    [mechanism]   kind, order, epsilon, n_orders
    [harness]     trials, seed, out

Unknown sections or keys are rejected so typos cannot silently change an
experiment.  Referenced files (empirical samples, coverage tables) must
exist at load time.
"""

from __future__ import annotations

import ast
import configparser
import os
import re
from dataclasses import dataclass

from .distributions import (PiecewiseLinearCDF, TruncatedExponential, Uniform,
                            empirical_from_sample)
from .values import AdditiveValue, CoverageValue, SymmetricValue


class ConfigError(ValueError):
    """Invalid experiment configuration."""


_ALLOWED_KEYS = {
    "instance": {"distributions", "value", "budget"},
    "solver": {"kind", "grid", "m", "marginal_samples", "noisy", "appendix_schedule"},
    "mechanism": {"kind", "order", "epsilon", "n_orders"},
    "harness": {"trials", "seed", "out"},
}

_CALL_RE = re.compile(r"^\s*([a-zA-Z_][a-zA-Z0-9_-]*)\s*\((.*)\)\s*$", re.S)


def _split_call(text: str):
    m = _CALL_RE.match(text)
    if not m:
        raise ConfigError(f"cannot parse {text!r}: expected name(args)")
    return m.group(1).lower(), m.group(2).strip()


def _floats(args: str, expect: int, what: str):
    parts = [p.strip() for p in args.split(",")] if args else []
    if len(parts) != expect:
        raise ConfigError(f"{what} takes {expect} arguments, got {len(parts)}")
    try:
        return [float(p) for p in parts]
    except ValueError as exc:
        raise ConfigError(f"bad numeric argument in {what}: {exc}") from None


def parse_distribution(text: str):
    """One distribution term: uniform(lo,hi) | texp(rate,lo,hi) |
    pwcdf([(c,F),...]) | empirical(path)."""
    name, args = _split_call(text)
    try:
        if name == "uniform":
            lo, hi = _floats(args, 2, "uniform")
            return Uniform(lo, hi)
        if name == "texp":
            rate, lo, hi = _floats(args, 3, "texp")
            return TruncatedExponential(rate, lo, hi)
        if name == "pwcdf":
            try:
                pts = ast.literal_eval(args)
            except (SyntaxError, ValueError) as exc:
                raise ConfigError(f"bad pwcdf breakpoint list: {exc}") from None
            return PiecewiseLinearCDF(tuple((float(c), float(F)) for c, F in pts))
        if name == "empirical":
            path = args.strip().strip("'\"")
            if not os.path.isfile(path):
                raise ConfigError(f"empirical sample file not found: {path}")
            with open(path) as fh:
                sample = [float(line) for line in fh.read().split() if line.strip()]
            return empirical_from_sample(sample)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"invalid distribution {text!r}: {exc}") from None
    raise ConfigError(f"unknown distribution kind {name!r}")


def parse_distributions(text: str):
    """Semicolon-separated terms, each optionally replicated as `N * term`."""
    dists = []
    for term in text.split(";"):
        term = term.strip()
        if not term:
            continue
        count = 1
        m = re.match(r"^(\d+)\s*\*\s*(.+)$", term, re.S)
        if m:
            count = int(m.group(1))
            term = m.group(2)
        if count < 1:
            raise ConfigError("replication count must be at least 1")
        dists.extend([parse_distribution(term)] * count)
    if not dists:
        raise ConfigError("no distributions given")
    return tuple(dists)


def parse_coverage_file(path: str) -> CoverageValue:
    """One line per agent listing covered element:weight pairs."""
    if not os.path.isfile(path):
        raise ConfigError(f"coverage file not found: {path}")
    weights: dict = {}
    covers = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            cov = []
            for tok in line.split():
                if ":" not in tok:
                    raise ConfigError(f"{path}:{lineno}: expected element:weight, got {tok!r}")
                name, w = tok.rsplit(":", 1)
                try:
                    w = float(w)
                except ValueError:
                    raise ConfigError(f"{path}:{lineno}: bad weight in {tok!r}") from None
                if name in weights and abs(weights[name] - w) > 1e-12:
                    raise ConfigError(f"{path}:{lineno}: conflicting weight for {name!r}")
                weights.setdefault(name, w)
                cov.append(name)
            covers.append(cov)
    names = sorted(weights)
    index = {nm: i for i, nm in enumerate(names)}
    return CoverageValue(weights=tuple(weights[nm] for nm in names),
                         covers=tuple(tuple(index[nm] for nm in cov) for cov in covers))


def parse_value(text: str, n: int):
    """additive([...]) | additive(constant=x) | symmetric([...]) | coverage(path)."""
    name, args = _split_call(text)
    if name == "additive":
        m = re.match(r"^constant\s*=\s*(.+)$", args)
        if m:
            try:
                v = float(m.group(1))
            except ValueError as exc:
                raise ConfigError(f"bad constant value: {exc}") from None
            return AdditiveValue(tuple([v] * n))
        try:
            vals = ast.literal_eval(args)
        except (SyntaxError, ValueError) as exc:
            raise ConfigError(f"bad additive value list: {exc}") from None
        vals = tuple(float(v) for v in vals)
        if len(vals) != n:
            raise ConfigError(f"value list has {len(vals)} entries for {n} agents")
        return AdditiveValue(vals)
    if name == "symmetric":
        try:
            g = ast.literal_eval(args)
        except (SyntaxError, ValueError) as exc:
            raise ConfigError(f"bad symmetric value table: {exc}") from None
        g = tuple(float(x) for x in g)
        if len(g) != n + 1:
            raise ConfigError(f"symmetric table needs n+1 = {n + 1} entries, got {len(g)}")
        try:
            return SymmetricValue(g)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    if name == "coverage":
        vf = parse_coverage_file(args.strip().strip("'\""))
        if vf.n != n:
            raise ConfigError(f"coverage file defines {vf.n} agents, instance has {n}")
        return vf
    raise ConfigError(f"unknown value-function kind {name!r}")


@dataclass
class ExperimentConfig:
    dists: tuple
    value: object
    budget: float
    solver_kind: str = "auto"
    grid: int = 10_001
    m: int | None = None
    marginal_samples: int = 10_000
    noisy: bool = False
    appendix_schedule: bool = False
    mechanism_kind: str = "sequential"
    order: str = "bang-per-buck"
    epsilon: str | float = "auto"
    n_orders: int = 20
    trials: int = 100_000
    seed: int = 0
    out: str = "out"

    @property
    def n(self) -> int:
        return len(self.dists)


def _get(cp, section, key, default=None):
    if cp.has_option(section, key):
        return cp.get(section, key)
    return default


def _bool(text: str, what: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "yes", "1", "on"):
        return True
    if t in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"{what} must be a boolean, got {text!r}")


def parse_config(path: str) -> ExperimentConfig:
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cp.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None

    for section in cp.sections():
        if section not in _ALLOWED_KEYS:
            raise ConfigError(f"unknown section [{section}]")
        for key in cp.options(section):
            if key not in _ALLOWED_KEYS[section]:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
    for required in ("distributions", "value", "budget"):
        if not cp.has_option("instance", required):
            raise ConfigError(f"[instance] is missing {required!r}")

    dists = parse_distributions(cp.get("instance", "distributions"))
    try:
        budget = float(cp.get("instance", "budget"))
    except ValueError as exc:
        raise ConfigError(f"bad budget: {exc}") from None
    if budget <= 0:
        raise ConfigError("budget must be positive")
    value = parse_value(cp.get("instance", "value"), len(dists))

    cfg = ExperimentConfig(dists=dists, value=value, budget=budget)
    cfg.solver_kind = _get(cp, "solver", "kind", cfg.solver_kind).strip().lower()
    if cfg.solver_kind not in ("auto", "additive", "symmetric", "greedy"):
        raise ConfigError(f"unknown solver kind {cfg.solver_kind!r}")
    try:
        cfg.grid = int(_get(cp, "solver", "grid", str(cfg.grid)))
        m_text = _get(cp, "solver", "m")
        cfg.m = int(m_text) if m_text is not None else None
        cfg.marginal_samples = int(_get(cp, "solver", "marginal_samples",
                                        str(cfg.marginal_samples)))
        cfg.n_orders = int(_get(cp, "mechanism", "n_orders", str(cfg.n_orders)))
        cfg.trials = int(_get(cp, "harness", "trials", str(cfg.trials)))
        cfg.seed = int(_get(cp, "harness", "seed", str(cfg.seed)))
    except ValueError as exc:
        raise ConfigError(f"bad integer option: {exc}") from None
    cfg.noisy = _bool(_get(cp, "solver", "noisy", "false"), "noisy")
    cfg.appendix_schedule = _bool(_get(cp, "solver", "appendix_schedule", "false"),
                                  "appendix_schedule")
    cfg.mechanism_kind = _get(cp, "mechanism", "kind", cfg.mechanism_kind).strip().lower()
    if cfg.mechanism_kind not in ("sequential", "oblivious", "exante"):
        raise ConfigError(f"unknown mechanism kind {cfg.mechanism_kind!r}")
    cfg.order = _get(cp, "mechanism", "order", cfg.order).strip().lower()
    if cfg.order not in ("bang-per-buck", "fixed", "uniform-random", "worst-of-sampled"):
        raise ConfigError(f"unknown order policy {cfg.order!r}")
    eps_text = _get(cp, "mechanism", "epsilon", "auto").strip().lower()
    if eps_text == "auto":
        cfg.epsilon = "auto"
    else:
        try:
            cfg.epsilon = float(eps_text)
        except ValueError as exc:
            raise ConfigError(f"bad epsilon: {exc}") from None
        if not 0.0 < cfg.epsilon < 0.5:
            raise ConfigError("epsilon must lie in (0, 1/2)")
    cfg.out = _get(cp, "harness", "out", cfg.out)
    if cfg.trials < 1:
        raise ConfigError("trials must be positive")
    if cfg.grid < 2:
        raise ConfigError("grid must be at least 2")
    return cfg


def serialize_config(cfg: ExperimentConfig) -> str:
    """Round-trippable textual form of a parsed configuration."""
    def dist_text(d):
        if isinstance(d, Uniform):
            return f"uniform({d.lo:.12g}, {d.hi:.12g})"
        if isinstance(d, TruncatedExponential):
            return f"texp({d.rate:.12g}, {d.lo:.12g}, {d.hi:.12g})"
        if isinstance(d, PiecewiseLinearCDF):
            pts = ", ".join(f"({c:.12g}, {F:.12g})" for c, F in d.points)
            return f"pwcdf([{pts}])"
        raise ConfigError(f"cannot serialize distribution {d!r}")

    terms = []
    i = 0
    ds = cfg.dists
    while i < len(ds):
        j = i
        while j + 1 < len(ds) and ds[j + 1] == ds[i]:
            j += 1
        text = dist_text(ds[i])
        terms.append(text if j == i else f"{j - i + 1} * {text}")
        i = j + 1

    if isinstance(cfg.value, AdditiveValue):
        vals = ", ".join(f"{v:.12g}" for v in cfg.value.values)
        value_text = f"additive([{vals}])"
    elif isinstance(cfg.value, SymmetricValue):
        g = ", ".join(f"{x:.12g}" for x in cfg.value.g)
        value_text = f"symmetric([{g}])"
    else:
        raise ConfigError("cannot serialize coverage values (file-backed)")

    eps = cfg.epsilon if isinstance(cfg.epsilon, str) else f"{cfg.epsilon:.12g}"
    m_line = f"m = {cfg.m}\n" if cfg.m is not None else ""
    return (
        "[instance]\n"
        f"distributions = {'; '.join(terms)}\n"
        f"value = {value_text}\n"
        f"budget = {cfg.budget:.12g}\n\n"
        "[solver]\n"
        f"kind = {cfg.solver_kind}\n"
        f"grid = {cfg.grid}\n"
        f"{m_line}"
        f"marginal_samples = {cfg.marginal_samples}\n"
        f"noisy = {str(cfg.noisy).lower()}\n"
        f"appendix_schedule = {str(cfg.appendix_schedule).lower()}\n\n"
        "[mechanism]\n"
        f"kind = {cfg.mechanism_kind}\n"
        f"order = {cfg.order}\n"
        f"epsilon = {eps}\n"
        f"n_orders = {cfg.n_orders}\n\n"
        "[harness]\n"
        f"trials = {cfg.trials}\n"
        f"seed = {cfg.seed}\n"
        f"out = {cfg.out}\n"
    )
