"""Convergence studies and invariant checks across refinement levels."""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .covering import BoxCovering, DensityVector, StateSpace, build_covering, l1_distance, l1_norm, project
from .errors import ConfigurationError, FPOutflowError
from .fields import VectorField, make_field
from .flow import transfer_exact_grid_times
from .functions import C1_00, make_function
from .generator import GeneratorMatrix, assemble, generator_consistency_error, max_column_l1
from .io import write_json
from .semigroup import evolve_times, expm_action, resolvent, semigroup_defect
from .ulam import SamplingSpec, estimate, quotient_matrix

log = logging.getLogger(__name__)


def _levels(raw, dim):
    out = []
    for lv in raw:
        lv = [int(lv)] * dim if np.isscalar(lv) else [int(k) for k in lv]
        if len(lv) != dim:
            raise ConfigurationError(f"level {lv} does not match dimension {dim}")
        out.append(tuple(lv))
    return out


@dataclass
class StudySpec:
    field: VectorField
    space: StateSpace
    levels: list
    times: list = field(default_factory=lambda: [0.25])
    functions: list = field(default_factory=list)
    tolerance: float = 1e-10
    nodes_per_box: int = 4
    seed: int = 0
    assert_decreasing: bool = True
    massloss_points: int = 11
    densities: int = 20
    check_times: tuple = (0.1, 1.0, 10.0)
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        self.levels = _levels(self.levels, self.space.dim)
        sizes = [int(np.prod(lv)) for lv in self.levels]
        if any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise ConfigurationError("levels must be strictly increasing")
        if any(t < 0 for t in self.times):
            raise ConfigurationError("times must be nonnegative")
        if self.field.dim != self.space.dim:
            raise ConfigurationError("field and state space dimensions differ")

    @classmethod
    def from_dict(cls, cfg: dict) -> "StudySpec":
        try:
            fcfg = cfg["field"]
            fld = make_field(fcfg["name"], **fcfg.get("params", {}))
            space = StateSpace.from_dict(cfg["space"])
        except KeyError as exc:
            raise ConfigurationError(f"missing config key {exc}") from None
        funcs = [make_function(f["kind"], **{k: v for k, v in f.items() if k != "kind"})
                 for f in cfg.get("functions", [])]
        levels = cfg.get("levels") or [cfg.get("boxes_per_axis", 16)]
        return cls(
            fld, space, levels,
            times=[float(t) for t in cfg.get("times", [cfg.get("t", 0.25)])],
            functions=funcs,
            tolerance=float(cfg.get("tolerance", 1e-10)),
            nodes_per_box=int(cfg.get("nodes_per_box", 4)),
            seed=int(cfg.get("seed", 0)),
            assert_decreasing=bool(cfg.get("assert_decreasing", True)),
            massloss_points=int(cfg.get("massloss_points", 11)),
            densities=int(cfg.get("densities", 20)),
            check_times=tuple(cfg.get("check_times", (0.1, 1.0, 10.0))),
            config=cfg,
        )


def _label(lv):
    return "x".join(str(k) for k in lv)


@dataclass
class ConvergenceReport:
    rows: list = field(default_factory=list)
    massloss: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    spec: dict = field(default_factory=dict)

    def errors(self, function: str, t: float) -> list:
        return [r["e_l1"] for r in self.rows if r["function"] == function and r["t"] == t]

    def decreasing(self) -> dict:
        out = {}
        for r in self.rows:
            out.setdefault((r["function"], r["t"]), []).append(r["e_l1"])
        return {k: all(b < a for a, b in zip(v, v[1:])) for k, v in out.items()}

    @property
    def all_decreasing(self) -> bool:
        return all(self.decreasing().values())

    def to_dict(self) -> dict:
        return {
            "spec": self.spec,
            "rows": self.rows,
            "massloss": self.massloss,
            "failures": self.failures,
            "decreasing": [{"function": f, "t": t, "decreasing": ok}
                           for (f, t), ok in self.decreasing().items()],
        }

    def write(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_json(self.to_dict(), out / "report.json")
        with open(out / "errors.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["level", "t", "function", "e_l1", "order_hat"])
            for r in self.rows:
                w.writerow([r["level"], r["t"], r["function"], repr(r["e_l1"]),
                            "" if r["order_hat"] is None else repr(r["order_hat"])])
        with open(out / "massloss.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["level", "function", "t", "mass"])
            for r in self.massloss:
                w.writerow([r["level"], r["function"], r["t"], repr(r["mass"])])


def _function_names(functions):
    names, seen = [], {}
    for f in functions:
        k = seen.get(f.name, 0)
        seen[f.name] = k + 1
        names.append(f.name if k == 0 else f"{f.name}_{k}")
    return names


def _run_level(spec: StudySpec, lv, names):
    cov = build_covering(spec.space, lv)
    G = assemble(spec.field, cov)
    rows, mass_rows = [], []
    t_end = max(spec.times) if spec.times else 0.0
    mass_times = sorted(set(np.linspace(0.0, t_end, spec.massloss_points).tolist()) | set(spec.times))
    for u, name in zip(spec.functions, names):
        pu = project(cov, u)
        refs = transfer_exact_grid_times(spec.field, u, cov, spec.times, nodes_per_box=spec.nodes_per_box)
        evolved = evolve_times(G, pu, spec.times, tolerance=spec.tolerance)
        consistency = (generator_consistency_error(spec.field, cov, u, G)
                       if u.kind == C1_00 else None)
        for t, w, ref in zip(spec.times, evolved, refs):
            rows.append({
                "level": _label(lv),
                "boxes_per_axis": list(lv),
                "n_active": cov.n_active,
                "t": t,
                "function": name,
                "e_l1": l1_distance(w, ref),
                "order_hat": None,
                "generator_consistency_error": consistency,
                "contraction_margin": l1_norm(pu) - l1_norm(w),
                "reference_mass": ref.mass(),
                "evolved_mass": w.mass(),
            })
        for t, w in zip(mass_times, evolve_times(G, pu, mass_times, tolerance=spec.tolerance)):
            mass_rows.append({"level": _label(lv), "function": name, "t": t, "mass": w.mass()})
    return rows, mass_rows


def run_convergence(spec: StudySpec, out_dir=None, threads: int = 1) -> ConvergenceReport:
    """Compare ``exp(t G_n) pi_n u`` with ``pi_n`` of the exact outflow transfer operator."""
    names = _function_names(spec.functions)
    report = ConvergenceReport(spec=spec.config)

    def job(lv):
        try:
            return lv, _run_level(spec, lv, names), None
        except FPOutflowError as exc:
            log.warning("level %s failed: %s", _label(lv), exc)
            return lv, None, exc

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(job, spec.levels))
    else:
        results = [job(lv) for lv in spec.levels]

    for lv, res, exc in results:
        if exc is not None:
            report.failures.append({"level": _label(lv), "error": f"{type(exc).__name__}: {exc}"})
            continue
        rows, mass_rows = res
        report.rows.extend(rows)
        report.massloss.extend(mass_rows)

    # empirical order between consecutive successful levels
    prev = {}
    for r in report.rows:
        key = (r["function"], r["t"])
        if key in prev:
            p = prev[key]
            ratio = max(r["boxes_per_axis"]) / max(p["boxes_per_axis"])
            if p["e_l1"] > 0 and r["e_l1"] > 0:
                r["order_hat"] = math.log(p["e_l1"] / r["e_l1"]) / math.log(ratio)
        prev[key] = r
    if out_dir is not None:
        report.write(out_dir)
    return report


@dataclass
class CheckResult:
    level: str
    check: str
    passed: bool
    margin: float
    detail: str = ""


@dataclass
class InvariantReport:
    checks: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def first_failure(self) -> CheckResult | None:
        return next((c for c in self.checks if not c.passed), None)

    def to_dict(self) -> dict:
        first = self.first_failure
        return {"passed": self.passed,
                "first_failure": None if first is None else asdict(first),
                "checks": [asdict(c) for c in self.checks]}


def check_generator_structure(G: GeneratorMatrix, level: str = "") -> list[CheckResult]:
    """Sign pattern and column sums of an assembled generator."""
    A = G.matrix.tocoo()
    off = A.row != A.col
    scale = max(float(np.max(np.abs(G.diagonal()), initial=0.0)), 1.0)
    eps = 1e-12 * scale
    min_off = float(np.min(A.data[off], initial=0.0))
    max_diag = float(np.max(G.diagonal(), initial=0.0))
    sign_margin = min(min_off, -max_diag)
    sums = G.column_sums()
    interior = np.all(G.covering.neighbor_table >= 0, axis=1)
    col_margin = eps - float(np.max(sums, initial=0.0))
    if np.any(interior):
        col_margin = min(col_margin, eps - float(np.max(np.abs(sums[interior]))))
    return [
        CheckResult(level, "sign_pattern", sign_margin >= 0, sign_margin,
                    f"min off-diagonal {min_off:.3e}, max diagonal {max_diag:.3e}"),
        CheckResult(level, "column_sums", col_margin >= 0, col_margin,
                    f"max column sum {float(np.max(sums, initial=0.0)):.3e}"),
    ]


def random_densities(covering: BoxCovering, count: int, seed: int) -> np.ndarray:
    """Nonnegative unit-mass densities as columns, from a seeded Philox stream."""
    rng = np.random.Generator(np.random.Philox(seed))
    W = rng.random((covering.n_active, count))
    return W / (W.sum(axis=0) * covering.box_measure)


def check_semigroup(G: GeneratorMatrix, times=(0.1, 1.0, 10.0), count: int = 20, seed: int = 0,
                    tolerance: float = 1e-10, level: str = "") -> list[CheckResult]:
    """Contraction, positivity, mass monotonicity, semigroup law and resolvent checks."""
    cov = G.covering
    m = cov.box_measure
    W = random_densities(cov, count, seed)
    norms0 = m * np.abs(W).sum(axis=0)
    results = []
    cur, t_prev = W, 0.0
    min_comp, contraction, monotone = np.inf, np.inf, np.inf
    mass_prev = m * W.sum(axis=0)
    for t in sorted(times):
        cur = expm_action(G.matrix, cur, t - t_prev, tolerance=tolerance)
        t_prev = t
        mass = m * cur.sum(axis=0)
        min_comp = min(min_comp, float(cur.min()))
        contraction = min(contraction, float(np.min(norms0 + tolerance * norms0 - m * np.abs(cur).sum(axis=0))))
        monotone = min(monotone, float(np.min(mass_prev + tolerance * norms0 - mass)))
        mass_prev = mass
    results.append(CheckResult(level, "contraction", contraction >= 0, contraction))
    results.append(CheckResult(level, "positivity", min_comp >= -1e-10, min_comp + 1e-10,
                               f"min component {min_comp:.3e}"))
    results.append(CheckResult(level, "mass_monotone", monotone >= 0, monotone))

    u = DensityVector(cov, W[:, 0])
    worst = -np.inf
    for s in (0.1, 0.5):
        for t in (0.1, 0.5):
            worst = max(worst, semigroup_defect(G, u, s, t, tolerance) / l1_norm(u))
    results.append(CheckResult(level, "semigroup_law", worst <= 2 * tolerance, 2 * tolerance - worst,
                               f"max relative defect {worst:.3e}"))

    lam = 1.0
    w = resolvent(G, u, lam)
    res = np.linalg.norm(lam * w.values - G.matrix @ w.values - u.values, 1) / np.linalg.norm(u.values, 1)
    results.append(CheckResult(level, "resolvent_identity", res <= 1e-9 and w.values.min() >= -tolerance,
                               1e-9 - res, f"relative residual {res:.3e}, min {w.values.min():.3e}"))
    return results


def check_quotient(field: VectorField, G: GeneratorMatrix, ts=(1e-2, 1e-3),
                   level: str = "") -> CheckResult:
    """``(U^t - I)/t -> G`` at least linearly in ``t`` (exact overlaps, d <= 2)."""
    cov = G.covering
    if cov.dim > 2:
        return CheckResult(level, "quotient_oracle", True, 0.0, "skipped: d > 2")
    errs = []
    for t in ts:
        U = estimate(field, cov, t, "full", SamplingSpec(method="exact"))
        errs.append(max_column_l1(quotient_matrix(U) - G.matrix))
    floor = 1e-8 * max(max_column_l1(G.matrix), 1.0)
    margin = 0.2 * errs[0] + floor - errs[-1]
    return CheckResult(level, "quotient_oracle", margin >= 0, margin,
                       "errors " + ", ".join(f"{e:.3e}" for e in errs))


def run_invariant_suite(spec: StudySpec, quotient: bool = True) -> InvariantReport:
    """Structural and semigroup checks on every level; failures are recorded, not raised."""
    report = InvariantReport()
    for lv in spec.levels:
        label = _label(lv)
        try:
            cov = build_covering(spec.space, lv)
            G = assemble(spec.field, cov)
            report.checks += check_generator_structure(G, label)
            report.checks += check_semigroup(G, spec.check_times, spec.densities, spec.seed,
                                             spec.tolerance, label)
            if quotient:
                report.checks.append(check_quotient(spec.field, G, level=label))
        except FPOutflowError as exc:
            report.checks.append(CheckResult(label, "runtime", False, float("nan"),
                                             f"{type(exc).__name__}: {exc}"))
    return report


def catalog_cases() -> list:
    """The built-in fields on their standard domains: ``(name, field, space)``."""
    unit = StateSpace.box([[0.0, 1.0]])
    square = StateSpace.box([[-1.0, 1.0], [-1.0, 1.0]])
    return [
        ("drift_1d", make_field("constant_drift", velocity=[1.0]), unit),
        ("linear_1d", make_field("linear_1d", a=1.0, b=0.0), unit),
        ("drift_2d", make_field("constant_drift", velocity=[1.0, 0.5]), square),
        ("rotation", make_field("rotation", omega=1.0), square),
        ("saddle", make_field("saddle", a=1.0, b=1.0), square),
        ("shear", make_field("shear", s=1.0), square),
        ("gradient_bump", make_field("gradient_bump", center=[0.2, -0.1], amplitude=1.0, width=0.5), square),
    ]
