"""Convergence studies and verification suites behind the command line."""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import complex_check
from .analysis import ErrorBundle, error_norms, rates
from .assembly import CORNER_DEGREE, LOAD_DEGREE, assemble_system
from .mesh import Mesh, build_lshape, build_unit_square, perturb, refine_red
from .problems import PROBLEMS
from .quadrature import MAX_DEGREE
from .ref_basis import ElementGeometry, correct_basis, element_mass, scaled_gram, vandermonde_oracle
from .solver import DEFAULT_TOL, InfSupError, SolverError, estimate_infsup, solve

MAX_LEVELS = 6
NONUNIFORM_FACTOR = 0.2
FLOAT_FMT = "%.6e"
COLUMNS = ["level", "h"] + [c for name in ErrorBundle.NAMES for c in (name, f"rate_{name}")]


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    example: str = "square-uniform"
    levels: int = 4
    solver: str = "direct"
    tol: float = DEFAULT_TOL
    perturb: float | None = None
    seed: int = 0
    quad_degree: int = LOAD_DEGREE
    out: str | None = None
    format: str = "csv"
    check: str | None = None
    export_mesh: str | None = None

    def validate(self) -> "RunConfig":
        if self.example not in PROBLEMS:
            raise ConfigError(f"unknown example {self.example!r}; choose from {sorted(PROBLEMS)}")
        if not 1 <= self.levels <= MAX_LEVELS:
            raise ConfigError(f"levels must lie in [1, {MAX_LEVELS}], got {self.levels}")
        if self.solver not in ("direct", "krylov"):
            raise ConfigError(f"unknown solver {self.solver!r}")
        if not (0 < self.tol < 1):
            raise ConfigError(f"tolerance must lie in (0, 1), got {self.tol}")
        if self.perturb is not None and not 0 <= self.perturb <= 0.3:
            raise ConfigError(f"perturbation factor must lie in [0, 0.3], got {self.perturb}")
        if not 6 <= self.quad_degree <= MAX_DEGREE:
            raise ConfigError(f"quadrature degree must lie in [6, {MAX_DEGREE}], got {self.quad_degree}")
        if self.format not in ("csv", "md", "json"):
            raise ConfigError(f"unknown format {self.format!r}")
        if self.check not in (None, "unisolvence", "complex", "infsup", "all"):
            raise ConfigError(f"unknown check {self.check!r}")
        return self

    def as_dict(self) -> dict:
        return asdict(self)


def base_mesh(config: RunConfig) -> Mesh:
    """Level-1 mesh of the chosen family."""
    if config.example == "lshape":
        mesh = build_lshape(1)
    elif config.example == "square-nonuniform":
        mesh = build_unit_square(2)
    else:
        mesh = build_unit_square(1)
    factor = config.perturb
    if factor is None:
        factor = NONUNIFORM_FACTOR if config.example == "square-nonuniform" else 0.0
    return perturb(mesh, factor, config.seed)


def mesh_hierarchy(config: RunConfig):
    mesh = base_mesh(config)
    for level in range(1, config.levels + 1):
        yield level, mesh
        if level < config.levels:
            mesh = refine_red(mesh)


# ----------------------------------------------------------------- reports
def _fmt(x) -> str:
    return "" if x is None else FLOAT_FMT % x


@dataclass
class ConvergenceReport:
    config: dict
    bundles: list[ErrorBundle] = field(default_factory=list)
    timings: list[float] = field(default_factory=list)
    complete: bool = True
    failure: str | None = None

    def rates(self) -> dict[str, list[float | None]]:
        return {n: rates([getattr(b, n) for b in self.bundles]) for n in ErrorBundle.NAMES}

    def last_rates(self) -> dict[str, float | None]:
        return {n: r[-1] for n, r in self.rates().items()}

    def rows(self) -> list[list]:
        r = self.rates()
        out = []
        for i, b in enumerate(self.bundles):
            row = [b.level, b.h]
            for n in ErrorBundle.NAMES:
                row += [getattr(b, n), r[n][i]]
            out.append(row)
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for row in self.rows():
            w.writerow([row[0]] + [_fmt(x) for x in row[1:]])
        return buf.getvalue()

    def to_markdown(self) -> str:
        head = ["level", "h"] + [c for n in ErrorBundle.NAMES for c in (n, "rate")]
        lines = ["| " + " | ".join(head) + " |", "|" + "---|" * len(head)]
        for row in self.rows():
            cells = [str(row[0])] + [_fmt(x) if x is not None else "-" for x in row[1:]]
            lines.append("| " + " | ".join(cells) + " |")
        if not self.complete:
            lines.append("")
            lines.append(f"incomplete: {self.failure}")
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "levels": [b.as_dict() for b in self.bundles],
            "rates": self.rates(),
            "timings": self.timings,
            "complete": self.complete,
            "failure": self.failure,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ConvergenceReport":
        d = json.loads(text)
        names = [f.name for f in fields(ErrorBundle)]
        bundles = [ErrorBundle(**{k: b[k] for k in names}) for b in d["levels"]]
        return cls(d["config"], bundles, d["timings"], d["complete"], d["failure"])

    def render(self, fmt: str) -> str:
        return {"csv": self.to_csv, "md": self.to_markdown, "json": self.to_json}[fmt]()


def run_convergence(config: RunConfig, log=None) -> ConvergenceReport:
    """Assemble, solve and measure on every level; a solver failure stops the run early."""
    config.validate()
    problem = PROBLEMS[config.example]()
    report = ConvergenceReport(config.as_dict())
    for level, mesh in mesh_hierarchy(config):
        t0 = time.perf_counter()
        system = assemble_system(mesh, problem, load_degree=config.quad_degree, corner_degree=max(CORNER_DEGREE, config.quad_degree))
        try:
            sol = solve(system, config.solver, config.tol)
        except SolverError as exc:
            report.complete = False
            report.failure = f"level {level}: {exc}"
            break
        bundle = error_norms(system, sol, problem, config.quad_degree, max(CORNER_DEGREE, config.quad_degree), level)
        report.bundles.append(bundle)
        report.timings.append(time.perf_counter() - t0)
        if log:
            log(f"level {level}: N_sigma={system.n_sigma} N_u={system.n_u} e_sigma={bundle.e_sigma:.4e} ({report.timings[-1]:.1f}s)")
    return report


# ------------------------------------------------------------------ checks
@dataclass
class CheckResult:
    name: str
    passed: bool
    measured: dict

    def line(self) -> str:
        body = ", ".join(f"{k}={_fmt(v) if isinstance(v, float) else v}" for k, v in self.measured.items())
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {body}"


def random_triangles(count: int, seed: int = 0, min_angle_deg: float = 20.0) -> np.ndarray:
    """Counterclockwise triangles (count, 3, 2) with random size, position and shape."""
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        p = rng.uniform(-1.0, 1.0, (3, 2))
        d = np.linalg.det(np.stack([p[1] - p[0], p[2] - p[0]], axis=1))
        if d < 0:
            p = p[[0, 2, 1]]
        angles = []
        for i in range(3):
            a, b = p[(i + 1) % 3] - p[i], p[(i + 2) % 3] - p[i]
            angles.append(np.degrees(np.arccos(np.clip(a @ b / np.linalg.norm(a) / np.linalg.norm(b), -1, 1))))
        if min(angles) < min_angle_deg:
            continue
        size = 10.0 ** rng.uniform(-3, 1)
        # offsets stay within a few diameters, as for cells of a mesh on a unit-size domain
        out.append((p + rng.uniform(-20, 20, 2)) * size)
    return np.array(out)


def check_unisolvence(count: int = 50, seed: int = 0) -> CheckResult:
    corners = random_triangles(count, seed)
    rng = np.random.default_rng(seed + 1)
    ids = np.array([rng.permutation(3) for _ in range(count)])  # random edge orientations
    geom = ElementGeometry(corners, ids)
    basis = correct_basis(geom, check=False)
    gram = float(np.max(np.abs(scaled_gram(basis.coeffs, geom) - np.eye(30))))
    oracle = vandermonde_oracle(geom)
    Ma = element_mass(basis, geom)
    Mo = element_mass(oracle, geom)
    mass = float(np.max(np.abs(Ma - Mo) / np.max(np.abs(Mo), axis=(1, 2))[:, None, None]))
    return CheckResult("unisolvence", gram < 1e-10 and mass < 1e-9, {"triangles": count, "gram_dev": gram, "mass_dev": mass})


def check_complex(n: int = 2) -> CheckResult:
    r = complex_check.check_complex(build_unit_square(n))
    return CheckResult(
        "complex",
        r.passed,
        {
            "rank_B": r.rank_B,
            "3T": 3 * r.n_triangles,
            "nullity_B": r.nullity_B,
            "rank_symcurl": r.rank_symcurl,
            "6V+4E-3": r.expected_nullity,
            "B_symcurl": r.max_B_symcurl,
            "rt": r.rt_max,
        },
    )


def check_infsup(levels: int = 3, spread_limit: float = 0.25) -> CheckResult:
    mesh = build_unit_square(1)
    betas = []
    try:
        for level in range(levels):
            betas.append(estimate_infsup(assemble_system(mesh)))
            mesh = refine_red(mesh)
    except (InfSupError, ValueError) as exc:
        return CheckResult("infsup", False, {"betas": betas, "error": str(exc)})
    spread = (max(betas) - min(betas)) / max(betas)
    measured = {f"beta_{i + 1}": b for i, b in enumerate(betas)}
    measured["spread"] = float(spread)
    return CheckResult("infsup", min(betas) > 0 and spread < spread_limit, measured)


def run_checks(config: RunConfig) -> list[CheckResult]:
    which = config.check or "all"
    out = []
    if which in ("unisolvence", "all"):
        out.append(check_unisolvence(seed=config.seed))
    if which in ("complex", "all"):
        out.append(check_complex())
    if which in ("infsup", "all"):
        out.append(check_infsup(config.levels if config.check == "infsup" else 3))
    return out
