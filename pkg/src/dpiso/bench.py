"""Experiment harness: config parsing, risk experiments, privacy audit.

The runner measures excess risk, the fitted risk minus what the exact
non-private optimum achieves on the same data, over a grid of (n, epsilon)
cells with repeated trials. Each trial owns an independent PRNG substream
derived from (seed, cell, trial), so reruns with the same seed reproduce
every draw. The audit replays a mechanism on two neighboring datasets and
compares event frequencies against the declared privacy budget.
"""

from __future__ import annotations

import collections
import dataclasses
import math
import time

import numpy as np

from .baseline import baseline_fit_poset, baseline_fit_total_order
from .constrained import fit_dp_constrained
from .core import (Dataset, LossSpec, ValidationError, l1_loss, l2sq_loss,
                   risk)
from .generators import (gen_antichain_hard, gen_grid_hard, gen_packing_hard,
                         gen_random_monotone)
from .isotonic import isotonic_fit
from .poset_fit import fit_dp_poset
from .posets import Poset
from .total_order import fit_dp

__all__ = [
    "ExperimentConfig",
    "TrialResult",
    "AuditResult",
    "CONFIG_KEYS",
    "parse_config",
    "parse_config_text",
    "run_experiment",
    "write_results_csv",
    "write_xy",
    "make_mechanism",
    "threshold_events",
    "privacy_audit",
    "loss_by_name",
]

ALGOS = ("tree", "fast", "constrained", "poset", "baseline")
GENERATORS = ("random", "packing", "antichain", "grid")

# Config file keys, also listed in the CLI help text.
CONFIG_KEYS = {
    "algo": "algorithm: tree | fast | constrained | poset | baseline",
    "generator": "data source: random | packing | antichain | grid",
    "loss": "loss name: l1 | l2 (default l2)",
    "m": "domain size for total-order data (random, packing)",
    "n": "comma-separated dataset sizes",
    "epsilon": "comma-separated privacy budgets",
    "trials": "trials per (n, epsilon) cell, >= 1",
    "seed": "integer master seed",
    "out": "results CSV path (optional, --out overrides)",
    "gen.noise": "random: label noise half-width in [0, 0.5] (default 0.25)",
    "gen.k": "packing: witness copies per threshold (default 1)",
    "gen.j": "packing: threshold index in 1..m (default 1)",
    "gen.w": "antichain/grid: poset width",
    "gen.h": "grid: poset height",
    "gen.z": "antichain/grid: comma-separated payload",
    "gen.r": "antichain/grid: copies per payload entry (default 1)",
    "algo.variant": "constrained: const | linear | lipschitz | convex | concave",
    "algo.k": "constrained: piece or knot budget",
    "algo.lf": "constrained: slope bound for lipschitz/convex/concave",
    "algo.grid": "baseline: value-grid step count (default internal choice)",
}


def loss_by_name(name: str) -> LossSpec:
    if name == "l1":
        return l1_loss()
    if name == "l2":
        return l2sq_loss()
    raise ValidationError(f"unknown loss {name!r}, expected l1 or l2")


@dataclasses.dataclass(frozen=True)
class ExperimentConfig:
    """One experiment: an algorithm, a data source, and an (n, epsilon) grid."""

    algo: str
    generator: str
    ns: tuple[int, ...]
    epsilons: tuple[float, ...]
    trials: int
    seed: int
    loss: str = "l2"
    m: int | None = None
    gen_params: dict = dataclasses.field(default_factory=dict)
    algo_params: dict = dataclasses.field(default_factory=dict)
    out: str | None = None

    def __post_init__(self):
        if self.algo not in ALGOS:
            raise ValidationError(f"unknown algo {self.algo!r}")
        if self.generator not in GENERATORS:
            raise ValidationError(f"unknown generator {self.generator!r}")
        if not self.ns or not self.epsilons:
            raise ValidationError("need at least one n and one epsilon")
        if self.trials < 1:
            raise ValidationError("trials must be >= 1")
        loss_by_name(self.loss)
        poset_gen = self.generator in ("antichain", "grid")
        if self.algo == "poset" and not poset_gen:
            raise ValidationError(
                "algo poset needs an antichain or grid generator")
        if self.algo in ("tree", "fast", "constrained") and poset_gen:
            raise ValidationError(
                f"algo {self.algo} runs on total-order data only")
        if not poset_gen and self.m is None:
            raise ValidationError(f"generator {self.generator} needs m")


@dataclasses.dataclass(frozen=True)
class TrialResult:
    algo: str
    n: int
    epsilon: float
    trial: int
    excess_risk: float
    wall_ms: float


def _parse_scalar(text: str):
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def _int_list(text: str, key: str, lineno: int) -> tuple[int, ...]:
    try:
        return tuple(int(p) for p in text.split(","))
    except ValueError:
        raise ValidationError(
            f"line {lineno}: {key} needs comma-separated integers, "
            f"got {text!r}") from None


def _float_list(text: str, key: str, lineno: int) -> tuple[float, ...]:
    try:
        return tuple(float(p) for p in text.split(","))
    except ValueError:
        raise ValidationError(
            f"line {lineno}: {key} needs comma-separated numbers, "
            f"got {text!r}") from None


def parse_config_text(text: str) -> ExperimentConfig:
    """Parse flat key = value lines; '#' starts a comment.

    Unknown keys, duplicates and malformed values are reported with their
    line number. Keys are listed in CONFIG_KEYS.
    """
    fields: dict = {}
    gen_params: dict = {}
    algo_params: dict = {}
    seen: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(
                f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ValidationError(f"line {lineno}: unknown key {key!r}")
        if key in seen:
            raise ValidationError(
                f"line {lineno}: key {key!r} already set on line {seen[key]}")
        seen[key] = lineno
        if not value:
            raise ValidationError(f"line {lineno}: key {key!r} has no value")
        if key == "n":
            fields["ns"] = _int_list(value, key, lineno)
        elif key == "epsilon":
            fields["epsilons"] = _float_list(value, key, lineno)
        elif key in ("trials", "seed", "m"):
            try:
                fields[key] = int(value)
            except ValueError:
                raise ValidationError(
                    f"line {lineno}: {key} needs an integer, "
                    f"got {value!r}") from None
        elif key in ("algo", "generator", "loss", "out"):
            fields[key] = value
        elif key == "gen.z":
            gen_params["z"] = _int_list(value, key, lineno)
        elif key.startswith("gen."):
            gen_params[key[4:]] = _parse_scalar(value)
        else:
            algo_params[key[5:]] = _parse_scalar(value)
    for req in ("algo", "generator", "ns", "epsilons", "trials", "seed"):
        if req not in fields:
            name = {"ns": "n", "epsilons": "epsilon"}.get(req, req)
            raise ValidationError(f"missing required key {name!r}")
    return ExperimentConfig(gen_params=gen_params, algo_params=algo_params,
                            **fields)


def parse_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config_text(fh.read())


def _make_dataset(cfg: ExperimentConfig, n: int,
                  seed: int) -> tuple[Dataset, Poset | None, int]:
    gp = cfg.gen_params
    if cfg.generator == "random":
        data = gen_random_monotone(cfg.m, n, float(gp.get("noise", 0.25)),
                                   seed)
        return data, None, cfg.m
    if cfg.generator == "packing":
        data = gen_packing_hard(cfg.m, n, int(gp.get("k", 1)),
                                int(gp.get("j", 1)))
        return data, None, cfg.m
    if cfg.generator == "antichain":
        if "w" not in gp or "z" not in gp:
            raise ValidationError("antichain generator needs gen.w and gen.z")
        poset, data = gen_antichain_hard(int(gp["w"]), n, gp["z"],
                                         int(gp.get("r", 1)))
        return data, poset, poset.size
    if "w" not in gp or "h" not in gp or "z" not in gp:
        raise ValidationError("grid generator needs gen.w, gen.h and gen.z")
    poset, data = gen_grid_hard(int(gp["w"]), int(gp["h"]), gp["z"],
                                int(gp.get("r", 1)), n)
    return data, poset, poset.size


def _fit(cfg: ExperimentConfig, data: Dataset, poset: Poset | None, m: int,
         loss: LossSpec, epsilon: float, rng):
    ap = cfg.algo_params
    if cfg.algo in ("tree", "fast"):
        path = "general" if cfg.algo == "tree" else "fast"
        return fit_dp(data, m, loss, epsilon, rng=rng, path=path)
    if cfg.algo == "constrained":
        if "variant" not in ap:
            raise ValidationError("algo constrained needs algo.variant")
        k = ap.get("k")
        return fit_dp_constrained(
            data, m, loss, epsilon, str(ap["variant"]),
            k=None if k is None else int(k),
            lipschitz_bound=ap.get("lf"), rng=rng)
    if cfg.algo == "poset":
        return fit_dp_poset(data, poset, loss, epsilon, rng=rng)
    grid = ap.get("grid")
    grid = None if grid is None else int(grid)
    if poset is not None:
        if grid is None:
            raise ValidationError("baseline on a poset needs algo.grid")
        return baseline_fit_poset(data, poset, loss, epsilon,
                                  grid_count=grid, rng=rng)
    return baseline_fit_total_order(data, m, loss, epsilon,
                                    grid_count=grid, rng=rng)


def _map_function(values: dict[int, float]):
    def call(xs):
        arr = np.atleast_1d(np.asarray(xs, dtype=np.int64))
        return np.array([values[int(x)] for x in arr], dtype=np.float64)
    return call


def _fit_risk(fitted, data: Dataset, loss: LossSpec) -> float:
    if isinstance(fitted, dict):
        return risk(_map_function(fitted), data, loss)
    return risk(fitted, data, loss)


def _optimal_risk(data: Dataset, poset: Poset | None, m: int,
                  loss: LossSpec) -> float:
    if poset is None:
        return risk(isotonic_fit(data, m, loss), data, loss)
    # The poset generators only emit monotone-consistent hard instances, so
    # labeling each element by whether it sits above any 1-labeled point is
    # monotone and achieves the optimum, zero risk.
    ones = np.unique(data.xs[data.ys == 1.0]) - 1
    values = {}
    for e in range(poset.size):
        above = any(poset.leq(int(o), e) for o in ones)
        values[e + 1] = 1.0 if above else 0.0
    return risk(_map_function(values), data, loss)


def run_experiment(cfg: ExperimentConfig, out_path=None,
                   timer=None) -> list[TrialResult]:
    """Run every (n, epsilon, trial) cell and optionally emit the CSV.

    Wall time comes from ``timer`` (a float-seconds callable, default
    time.perf_counter); injecting a deterministic timer makes the CSV
    byte-identical across reruns. Excess risk compares against the exact
    optimum on the same data and can never drop below -1e-9.
    """
    if timer is None:
        timer = time.perf_counter
    loss = loss_by_name(cfg.loss)
    results: list[TrialResult] = []
    cell = 0
    for n in cfg.ns:
        for epsilon in cfg.epsilons:
            for trial in range(cfg.trials):
                seq = np.random.SeedSequence(cfg.seed,
                                             spawn_key=(cell, trial))
                rng = np.random.default_rng(seq)
                data_seed = int(rng.integers(2 ** 63))
                data, poset, m = _make_dataset(cfg, n, data_seed)
                start = timer()
                fitted = _fit(cfg, data, poset, m, loss, epsilon, rng)
                wall_ms = (timer() - start) * 1000.0
                excess = (_fit_risk(fitted, data, loss)
                          - _optimal_risk(data, poset, m, loss))
                if excess < -1e-9:
                    raise AssertionError(
                        f"excess risk {excess} below oracle optimum")
                results.append(TrialResult(cfg.algo, n, epsilon, trial,
                                           excess, wall_ms))
            cell += 1
    target = out_path if out_path is not None else cfg.out
    if target is not None:
        write_results_csv(target, results, cfg.trials)
    return results


def _stderr(values: np.ndarray) -> float:
    if len(values) < 2:
        return 0.0
    return float(np.std(values, ddof=1) / math.sqrt(len(values)))


def write_results_csv(path, results: list[TrialResult],
                      trials_per_cell: int) -> None:
    """Emit trial rows plus per-cell aggregates.

    Columns are algo,n,epsilon,trial,excess_risk,wall_ms. After each cell's
    trial rows come two tagged rows with trial = "mean" and trial = "se"
    carrying the cell's mean and standard error in the same numeric columns.
    """
    lines = ["algo,n,epsilon,trial,excess_risk,wall_ms"]
    for base in range(0, len(results), trials_per_cell):
        chunk = results[base:base + trials_per_cell]
        for r in chunk:
            lines.append(f"{r.algo},{r.n},{repr(r.epsilon)},{r.trial},"
                         f"{repr(r.excess_risk)},{repr(r.wall_ms)}")
        ex = np.array([r.excess_risk for r in chunk])
        wall = np.array([r.wall_ms for r in chunk])
        head = f"{chunk[0].algo},{chunk[0].n},{repr(chunk[0].epsilon)}"
        lines.append(f"{head},mean,{repr(float(ex.mean()))},"
                     f"{repr(float(wall.mean()))}")
        lines.append(f"{head},se,{repr(_stderr(ex))},{repr(_stderr(wall))}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_xy(path, xs, ys) -> None:
    """Two-column whitespace-separated data file for external plotting."""
    xs = np.asarray(xs)
    ys = np.asarray(ys)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise ValidationError("need two equal-length 1-d columns")
    with open(path, "w") as fh:
        for x, y in zip(xs, ys):
            fh.write(f"{repr(float(x))} {repr(float(y))}\n")


def make_mechanism(algo: str, m: int, loss: LossSpec, epsilon: float,
                   poset: Poset | None = None, **params):
    """Resolve an algorithm id to a callable (data, rng) -> fitted function.

    Besides the public algorithms this accepts "tree_nosplit", a deliberately
    broken variant that spends the whole budget at every stage instead of
    splitting it. It exists solely as the audit's negative control.
    """
    if algo in ("tree", "fast"):
        path = "general" if algo == "tree" else "fast"
        return lambda data, rng: fit_dp(data, m, loss, epsilon, rng=rng,
                                        path=path)
    if algo == "tree_nosplit":
        return lambda data, rng: fit_dp(data, m, loss, epsilon, rng=rng,
                                        stage_budget_override=epsilon)
    if algo == "constrained":
        variant = params.get("variant")
        if variant is None:
            raise ValidationError("constrained mechanism needs a variant")
        k = params.get("k")
        lf = params.get("lf")
        return lambda data, rng: fit_dp_constrained(
            data, m, loss, epsilon, str(variant),
            k=None if k is None else int(k), lipschitz_bound=lf, rng=rng)
    if algo == "poset":
        if poset is None:
            raise ValidationError("poset mechanism needs a poset")
        return lambda data, rng: fit_dp_poset(data, poset, loss, epsilon,
                                              rng=rng)
    if algo == "baseline":
        grid = params.get("grid")
        grid = None if grid is None else int(grid)
        if poset is not None:
            if grid is None:
                raise ValidationError("baseline on a poset needs grid")
            return lambda data, rng: baseline_fit_poset(
                data, poset, loss, epsilon, grid_count=grid, rng=rng)
        return lambda data, rng: baseline_fit_total_order(
            data, m, loss, epsilon, grid_count=grid, rng=rng)
    raise ValidationError(f"unknown mechanism {algo!r}")


def threshold_events(x: int, thresholds=(0.25, 0.5, 0.75)):
    """Coarse events asking whether the output value at site x clears a bar.

    Works on step, piecewise-linear and map outputs alike.
    """
    def make(t):
        def pred(fitted):
            value = fitted[x] if isinstance(fitted, dict) else fitted(x)
            return float(value) >= t
        return pred
    return [(f"f({x})>={t}", make(t)) for t in thresholds]


@dataclasses.dataclass(frozen=True)
class AuditResult:
    """Outcome of an empirical budget check on one neighbor pair.

    eps_hat is the largest observed log-frequency ratio over the events that
    carried enough mass; (ci_lo, ci_hi) bound that worst event's true ratio.
    flagged is True only when ci_lo exceeds the declared budget, so low-mass
    events (listed in low_mass) can widen uncertainty but never flag.
    """

    eps_hat: float
    ci_lo: float
    ci_hi: float
    flagged: bool
    declared_epsilon: float
    trials: int
    events: tuple
    low_mass: tuple


def _wilson(count: int, trials: int, z: float) -> tuple[float, float]:
    p = count / trials
    denom = 1.0 + z * z / trials
    center = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials
                         + z * z / (4 * trials * trials)) / denom
    return max(center - half, 0.0), min(center + half, 1.0)


def _neighbor_distance(a: Dataset, b: Dataset) -> int:
    if a.n != b.n:
        raise ValidationError("neighboring datasets must have equal size")
    pa = sorted(zip(a.xs.tolist(), a.ys.tolist()))
    pb = sorted(zip(b.xs.tolist(), b.ys.tolist()))
    diff = collections.Counter(pa)
    diff.subtract(collections.Counter(pb))
    extra = sum(c for c in diff.values() if c > 0)
    return extra


def privacy_audit(mechanism, data: Dataset, data2: Dataset, events,
                  trials: int, declared_epsilon: float, rng=None,
                  z: float = 4.0) -> AuditResult:
    """Estimate the worst event-level budget use over a neighbor pair.

    ``mechanism`` is a callable (data, rng) -> fitted function (see
    make_mechanism); ``events`` is a list of (name, predicate) pairs. The
    mechanism runs ``trials`` times on each dataset. For every event and its
    complement, in both directions, the log-ratio of empirical frequencies
    estimates the budget that direction consumed; Wilson score intervals at
    ``z`` standard normal units turn each into a conservative band. A
    direction participates only when both sides carry at least 1% empirical
    mass; the rest are reported in low_mass. The pair is flagged only when
    some participating direction's lower bound exceeds the declared budget,
    so a flag is strong evidence of overspending, while passing is only
    evidence, not proof.
    """
    if _neighbor_distance(data, data2) > 1:
        raise ValidationError("datasets differ in more than one point")
    if trials < 1:
        raise ValidationError("need at least one trial")
    if not events:
        raise ValidationError("need at least one event")
    if rng is None:
        rng = np.random.default_rng()
    names = [name for name, _ in events]
    counts = np.zeros((2, len(events)), dtype=np.int64)
    for side, source in enumerate((data, data2)):
        for _ in range(trials):
            fitted = mechanism(source, rng)
            for ei, (_, pred) in enumerate(events):
                if pred(fitted):
                    counts[side, ei] += 1
    per_event = []
    low_mass = []
    eps_hat = 0.0
    ci = (0.0, 0.0)
    flagged = False
    floor = max(1, int(math.ceil(0.01 * trials)))
    for ei, name in enumerate(names):
        for tag, c1, c2 in ((name, counts[0, ei], counts[1, ei]),
                            (f"not {name}", trials - counts[0, ei],
                             trials - counts[1, ei])):
            for direction, a, b in ((f"{tag} fwd", c1, c2),
                                    (f"{tag} rev", c2, c1)):
                if a < floor or b < floor:
                    low_mass.append(direction)
                    continue
                point = math.log(a / b)
                lo_a, hi_a = _wilson(int(a), trials, z)
                lo_b, hi_b = _wilson(int(b), trials, z)
                lower = math.log(lo_a / hi_b) if lo_a > 0 else -math.inf
                upper = math.log(hi_a / lo_b) if lo_b > 0 else math.inf
                per_event.append((direction, point, lower, upper))
                if point > eps_hat:
                    eps_hat = point
                    ci = (lower, upper)
                if lower > declared_epsilon:
                    flagged = True
    return AuditResult(eps_hat, ci[0], ci[1], flagged, declared_epsilon,
                       trials, tuple(per_event), tuple(low_mass))
