"""Benchmark runs, resolution sweeps and table emission.

The reference problem is the travelling soliton of the cubic focusing NLS on
``[-30, 30]``; sweeps couple the time step to the mesh through
``k ~ h^((r+1)/2)`` and report estimators, their experimental orders and the
effectivity index.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass, field, fields
from typing import Iterable, Optional, Sequence

import numpy as np

from .apost_estimators import (
    CONVENTIONS,
    Constants,
    accumulate_report,
    compute_functionals,
    effectivity,
    local_estimators,
)
from .exceptions import ConfigurationError, NonPositiveInputError
from .nls_stepper import ProblemSpec, TimeGrid, run
from .spline_mesh import build_space

__all__ = [
    "soliton",
    "soliton_problem",
    "zero_problem",
    "choose_timestep",
    "RunConfig",
    "TableRow",
    "run_realization",
    "eoc",
    "sweep",
    "TABLE_COLUMNS",
    "format_rows",
    "read_csv",
    "write_table",
    "paper_configs",
]

PAPER_M = (2400, 3600, 4800, 6000, 7200, 8400, 9600)


def _real(x) -> np.ndarray:
    # float64, except that long double input is kept
    x = np.asarray(x)
    return x if x.dtype == np.longdouble else x.astype(float)


def soliton(x, t, x0: float = 0.0, omega: float = 0.3):
    """Travelling soliton ``i sech(x - x0 - 4 omega t) exp(i(2 omega x + (1 - 4 omega^2) t))``.

    Exact solution of ``u_t = i u_xx + 2i |u|^2 u``.
    """
    x = _real(x)
    return 1j / np.cosh(x - x0 - 4 * omega * t) * np.exp(1j * (2 * omega * x + (1 - 4 * omega**2) * t))


def soliton_problem(
    a: float = -30.0,
    b: float = 30.0,
    T: float = 1.0,
    x0: float = 0.0,
    omega: float = 0.3,
    p: float = 1.0,
    alpha: float = 1.0,
    lam: float = 2.0,
    compatible: bool = True,
) -> ProblemSpec:
    """Soliton benchmark. With other ``(p, alpha, lam)`` than ``(1, 1, 2)`` the
    soliton is only initial data and no exact solution is attached.

    With ``compatible`` the linear interpolant of the boundary values (about
    ``2e-13`` on ``[-30, 30]``) is subtracted from the initial data so that it
    satisfies the Dirichlet condition exactly. Without it the mismatch is
    amplified by repeated discrete Laplacians and puts a floor under the
    space estimator of the time derivative of ``W`` on fine meshes.
    """
    exact = (p, alpha, lam) == (1.0, 1.0, 2.0)
    ua, ub = soliton(np.array([a, b]), 0.0, x0, omega) if compatible else (0.0, 0.0)
    slope = (ub - ua) / (b - a)

    def u0(x):
        x = _real(x)
        return soliton(x, 0.0, x0, omega) - (ua + slope * (x - a))

    def du0(x):
        x = _real(x)
        return soliton(x, 0.0, x0, omega) * (-np.tanh(x - x0) + 2j * omega) - slope

    def ue(x, t):
        return soliton(x, t, x0, omega)

    return ProblemSpec(
        p, alpha, lam, a, b, T, u0, ue if exact else None, du0,
        name="soliton" if exact else "soliton-data",
    )


def zero_problem(
    a: float = -30.0, b: float = 30.0, T: float = 1.0,
    p: float = 1.0, alpha: float = 1.0, lam: float = 2.0,
) -> ProblemSpec:
    """Zero initial data; the solution stays identically zero."""

    def u0(x):
        return np.zeros(np.shape(x), dtype=complex)

    def ue(x, t):
        return np.zeros(np.shape(x), dtype=complex)

    return ProblemSpec(p, alpha, lam, a, b, T, u0, ue, u0, name="zero")


def choose_timestep(M: int, r: int, T: float = 1.0, a: float = -30.0, b: float = 30.0) -> int:
    """Number of uniform steps ``floor(T h^(-(r+1)/2))`` with ``h = (b - a)/M``."""
    if M <= 0 or r <= 0 or T <= 0 or b <= a:
        raise NonPositiveInputError("M, r, T and b - a must be positive")
    h = (b - a) / M
    # guard against 1000.0000000001-style rounding of exact powers
    val = T * h ** (-(r + 1) / 2)
    n = math.floor(val + 1e-9 * max(1.0, val))
    return max(n, 1)


@dataclass(frozen=True)
class RunConfig:
    problem: ProblemSpec
    M: int
    r: int
    N_override: Optional[int] = None
    constants: Constants = field(default_factory=Constants)
    q_space: Optional[int] = None
    s_inf: int = 8
    convention: str = "formula"
    fmt: str = "csv"
    extended: bool = True

    def __post_init__(self):
        if self.M < 1:
            raise ConfigurationError(f"M must be a positive integer, got {self.M}")
        if self.N_override is not None and self.N_override < 1:
            raise ConfigurationError(f"step count must be positive, got {self.N_override}")
        if self.convention not in CONVENTIONS:
            raise ConfigurationError(f"convention must be one of {CONVENTIONS}")
        if self.fmt not in ("csv", "json"):
            raise ConfigurationError(f"format must be csv or json, got {self.fmt!r}")

    @property
    def N(self) -> int:
        if self.N_override is not None:
            return int(self.N_override)
        pr = self.problem
        return choose_timestep(self.M, self.r, pr.T, pr.a, pr.b)


_NAN = float("nan")


@dataclass
class TableRow:
    M: int
    r: int
    kinv: float
    N: int
    ES0: float = 0.0
    ES1: float = 0.0
    ES2: float = 0.0
    ES3: float = 0.0
    ET0: float = 0.0
    ET1: float = 0.0
    ET2: float = 0.0
    EC: float = 0.0
    ED: float = 0.0
    L31: float = 0.0
    L32: float = 0.0
    EM: float = 0.0
    EN: float = 0.0
    EN_total: float = 0.0
    Eexact: float = _NAN
    ei: float = _NAN
    GLOB: float = 0.0
    GLOB_improved: float = 0.0
    bound: float = 0.0
    bound_improved: float = 0.0
    mass_drift: float = 0.0
    phi_imag: float = 0.0
    EOCS0: Optional[float] = None
    EOCS1: Optional[float] = None
    EOCS2: Optional[float] = None
    EOCS3: Optional[float] = None
    EOCT0: Optional[float] = None
    EOCT1: Optional[float] = None
    EOCT2: Optional[float] = None
    EOCE: Optional[float] = None

    @classmethod
    def from_dict(cls, d: dict) -> "TableRow":
        kw = {}
        for f in fields(cls):
            if f.name not in d:
                continue
            v = d[f.name]
            if v is None or v == "":
                kw[f.name] = None
            elif f.name in ("M", "r", "N"):
                kw[f.name] = int(v)
            else:
                kw[f.name] = float(v)
        return cls(**kw)


SPACE_EOC = {"ES0": "EOCS0", "ES1": "EOCS1", "ES2": "EOCS2", "ES3": "EOCS3", "Eexact": "EOCE"}
TIME_EOC = {"ET0": "EOCT0", "ET1": "EOCT1", "ET2": "EOCT2"}

TABLE_COLUMNS = {
    "table1": ["M", "r", "L31", "L32", "EM", "EN"],
    "table2": ["M", "ES0", "EOCS0", "ES1", "EOCS1", "ES2", "EOCS2", "ES3", "EOCS3"],
    "table3": ["kinv", "ET0", "EOCT0", "ET1", "EOCT1", "ET2", "EOCT2"],
    "table4": ["M", "EN_total", "Eexact", "ei"],
    "full": [f.name for f in fields(TableRow)],
}


def run_realization(config: RunConfig) -> TableRow:
    """Solve, estimate and summarise one ``(M, r, N)`` realization."""
    pr = config.problem
    space = build_space(pr.a, pr.b, config.M, config.r)
    N = config.N
    grid = TimeGrid.uniform(pr.T, N)
    fn = compute_functionals(pr, config.constants)

    def on_step(rec):
        local_estimators(rec, config.constants, fn, config.convention)

    res = run(
        pr, space, grid, q_space=config.q_space, s_inf=config.s_inf,
        beta=config.constants.beta, keep_history=False, on_step=on_step,
        extended=config.extended,
    )
    rep = accumulate_report(res, fn, config.constants)
    row = TableRow(M=config.M, r=config.r, kinv=N / pr.T, N=N)
    for name in (
        "ES0", "ES1", "ES2", "ES3", "ET0", "ET1", "ET2", "EC", "ED", "L31", "L32",
        "EM", "EN", "EN_total", "GLOB", "GLOB_improved", "bound", "bound_improved",
    ):
        setattr(row, name, float(getattr(rep, name)))
    mass = res.diagnostics["mass"]
    row.mass_drift = float(np.max(np.abs(mass - mass[0])) / mass[0]) if mass[0] > 0 else float(np.max(mass))
    row.phi_imag = float(res.diagnostics["phi_imag_max"])
    if pr.u_exact is not None:
        row.Eexact = res.E_exact
        if row.Eexact > 0:
            row.ei = effectivity(rep, row.Eexact)
        elif row.EN_total == 0:
            # zero data: estimator and error both vanish
            row.ei = 0.0
    return row


def eoc(values: Sequence[float], scales: Sequence[float]) -> np.ndarray:
    """Experimental orders ``log(v_l / v_(l+1)) / log(s_(l+1) / s_l)``.

    ``scales`` are resolutions that grow with refinement (``M`` or ``1/k``).
    """
    v = np.asarray(values, dtype=float)
    s = np.asarray(scales, dtype=float)
    if v.shape != s.shape or v.ndim != 1 or v.size < 2:
        raise ConfigurationError("values and scales must be 1-D of equal length >= 2")
    if np.any(~(v > 0)) or np.any(~(s > 0)):
        raise NonPositiveInputError("EOC needs positive values and scales")
    return np.log(v[:-1] / v[1:]) / np.log(s[1:] / s[:-1])


def _fill_eocs(rows: list[TableRow]):
    for prev, row in zip(rows[:-1], rows[1:]):
        for src, dst in list(SPACE_EOC.items()) + list(TIME_EOC.items()):
            scale = "M" if src in SPACE_EOC else "kinv"
            try:
                val = eoc([getattr(prev, src), getattr(row, src)], [getattr(prev, scale), getattr(row, scale)])[0]
            except (NonPositiveInputError, ConfigurationError):
                val = None
            setattr(row, dst, None if val is None else float(val))


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def format_rows(rows: Iterable[TableRow], fmt: str = "csv", columns: Sequence[str] | None = None) -> str:
    """Serialise rows with 17 significant digits (exact float round trip)."""
    rows = list(rows)
    columns = list(columns or TABLE_COLUMNS["full"])
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(getattr(row, c)) for c in columns])
        return buf.getvalue()
    if fmt == "json":
        # floats are emitted through the same 17-digit formatter
        items = []
        for row in rows:
            parts = []
            for c in columns:
                v = getattr(row, c)
                if v is None:
                    s = "null"
                elif isinstance(v, float) and not math.isfinite(v):
                    s = '"' + _fmt(v) + '"'
                else:
                    s = _fmt(v)
                parts.append(f"{json.dumps(c)}: {s}")
            items.append("  {" + ", ".join(parts) + "}")
        return "[\n" + ",\n".join(items) + "\n]\n"
    raise ConfigurationError(f"unknown format {fmt!r}")


def read_csv(path_or_text: str) -> list[TableRow]:
    """Parse CSV written by :func:`format_rows`."""
    text = path_or_text
    if os.path.exists(path_or_text):
        with open(path_or_text) as fh:
            text = fh.read()
    return [TableRow.from_dict(d) for d in csv.DictReader(io.StringIO(text))]


def write_table(rows, path: str, fmt: str = "csv", columns=None):
    with open(path, "w") as fh:
        fh.write(format_rows(rows, fmt, columns))


def sweep(
    configs: Sequence[RunConfig],
    out: str | None = None,
    columns: Sequence[str] | None = None,
    progress=None,
) -> list[TableRow]:
    """Run every realization in order of ``M`` and fill inter-row EOCs.

    With ``out`` given, the table is written there (``.csv`` and ``.json``
    siblings when ``out`` has no recognised suffix). Rows finished before a
    failure are still written before the exception propagates.
    """
    configs = sorted(configs, key=lambda c: (c.r, c.M))
    if not configs:
        return []
    rows: list[TableRow] = []

    def flush():
        _fill_eocs_by_degree(rows)
        if out is not None:
            for path, fmt in _targets(out, configs[0].fmt):
                write_table(rows, path, fmt, columns)

    try:
        for cfg in configs:
            rows.append(run_realization(cfg))
            if progress is not None:
                progress(rows[-1])
    finally:
        flush()
    return rows


def _fill_eocs_by_degree(rows: list[TableRow]):
    for r in sorted({row.r for row in rows}):
        _fill_eocs([row for row in rows if row.r == r])


def _targets(out: str, fmt: str):
    root, ext = os.path.splitext(out)
    if ext in (".csv", ".json"):
        return [(out, ext[1:])]
    return [(root + ".csv", "csv"), (root + ".json", "json")]


def paper_configs(
    problem: ProblemSpec | None = None,
    Ms: Sequence[int] = PAPER_M,
    degrees: Sequence[int] = (2,),
    **kw,
) -> list[RunConfig]:
    """Sweep configurations for the soliton benchmark."""
    problem = problem or soliton_problem()
    return [RunConfig(problem, M, r, **kw) for r in degrees for M in Ms]

