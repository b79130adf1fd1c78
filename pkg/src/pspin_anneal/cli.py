"""Command-line front end: deterministic CSV/JSON tables for every analysis.

Usage::

    pspin-anneal potential --format csv --out fig1.csv
    pspin-anneal action-vs-beta --spec-qmax 0.533 --s 0.85
    pspin-anneal compare --grid-qmin 16 --grid-qmax 16
    pspin-anneal oracle

Settings are resolved as built-in defaults, then ``--config FILE`` (flat
``key = value`` lines, keys as the long flag names), then explicit flags.
"""
from __future__ import annotations

import argparse
import io
import json
import math
import sys
from dataclasses import dataclass, field
from importlib import metadata
from typing import Any, Optional, Sequence

import numpy as np

from .errors import DomainError, InfeasibleError
from .exact import initial_final_overlap, occupation_crossing, wkb_scaling_check
from .model import AnnealPoint, PotentialSpec, effective_potential
from .rates import bounding_lines, classical_escape_action, critical_line, optimal_quantum_action, qpt_point
from .schedule import comparison_sweep, default_workers

TOOL = "pspin-anneal"
INF_SENTINEL = "inf-capped"
MIN_GRID = 8

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_ORACLE = 0, 2, 3, 4

# per-subcommand defaults; "spec" entries are (q_min, q_max)
_DEFAULTS: dict[str, dict[str, Any]] = {
    "potential": {"spec_qmin": 0.0, "spec_qmax": 0.467, "grid_q": 201},
    "action-vs-beta": {"spec_qmin": 0.0, "spec_qmax": 0.533, "s": 0.85, "grid_beta": 64, "beta_max": 16.0},
    "compare": {"grid_qmin": 64, "grid_qmax": 64},
    "oracle": {"spec_qmin": 0.0, "spec_qmax": 0.2, "n_list": "100,150,200,250,300,350,400",
               "occ_qmin": 0.0, "occ_qmax": 0.533, "occ_s": 0.85, "occ_n": 400, "overlap_n": 10},
}
_COMMON = {"spec_qmin": 0.0, "spec_qmax": 0.5, "spec_c": 1.0, "format": "csv", "out": "-"}
_INT_KEYS = {"grid_q", "grid_beta", "grid_qmin", "grid_qmax", "occ_n", "overlap_n"}
_STR_KEYS = {"format", "out", "n_list"}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    subcommand: str
    values: dict = field(default_factory=dict)

    def __getattr__(self, name):
        try:
            return self.values[name]
        except KeyError:
            raise AttributeError(name) from None

    def spec(self) -> PotentialSpec:
        return PotentialSpec.cubic(self.values["spec_qmin"], self.values["spec_qmax"], self.values["spec_c"])


def version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


def read_config_file(path: str) -> dict[str, str]:
    out = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from exc
    for n, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected key = value")
        key, val = (x.strip() for x in line.split("=", 1))
        out[key.lstrip("-").replace("-", "_")] = val
    return out


def _coerce(key: str, val: Any) -> Any:
    if key in _STR_KEYS:
        return str(val)
    try:
        return int(val) if key in _INT_KEYS else float(val)
    except (TypeError, ValueError):
        raise ConfigError(f"invalid value for {key}: {val!r}") from None


def resolve_config(sub: str, cli_values: dict, file_values: Optional[dict] = None) -> RunConfig:
    values = dict(_COMMON)
    values.update(_DEFAULTS[sub])
    known = set(values)
    for source in (file_values or {}, {k: v for k, v in cli_values.items() if v is not None}):
        for key, val in source.items():
            if key not in known:
                raise ConfigError(f"unknown setting {key!r} for {sub}")
            values[key] = _coerce(key, val)
    if values["format"] not in ("csv", "json"):
        raise ConfigError(f"format must be csv or json, got {values['format']!r}")
    for key in _INT_KEYS & set(values):
        if key.startswith("grid_") and values[key] < MIN_GRID:
            raise ConfigError(f"{key}={values[key]} below the minimum resolution {MIN_GRID}")
    return RunConfig(sub, dict(sorted(values.items())))


# --------------------------------------------------------------------------
# serialization


def fmt(x: Any) -> Any:
    """Deterministic cell text: 12 significant digits, ``inf-capped`` for infinities."""
    if isinstance(x, (bool, np.bool_)):
        return int(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isinf(x):
            return INF_SENTINEL
        if math.isnan(x):
            return "n/a"
        return float(f"{x:.12g}")
    return x


@dataclass
class Table:
    meta: dict
    columns: list
    rows: list = field(default_factory=list)

    def add(self, *row):
        self.rows.append([fmt(v) for v in row])

    def render(self, form: str) -> str:
        if form == "json":
            doc = {"header": self.meta, "columns": self.columns, "rows": self.rows}
            return json.dumps(doc, indent=1, sort_keys=False) + "\n"
        buf = io.StringIO()
        for key, val in self.meta.items():
            buf.write(f"# {key}: {json.dumps(val, sort_keys=True)}\n")
        buf.write(",".join(self.columns) + "\n")
        for row in self.rows:
            buf.write(",".join(_csv_cell(v) for v in row) + "\n")
        return buf.getvalue()


def _csv_cell(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _header(cfg: RunConfig, **extra) -> dict:
    meta = {"tool": TOOL, "version": version(), "subcommand": cfg.subcommand, "config": cfg.values}
    meta.update({k: fmt(v) for k, v in extra.items()})
    return meta


def write_output(text: str, path: str) -> None:
    if path == "-":
        sys.stdout.write(text)
        return
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write output file {path}: {exc.strerror}") from exc


# --------------------------------------------------------------------------
# subcommands


def cmd_potential(cfg: RunConfig) -> Table:
    spec = cfg.spec()
    s_q = qpt_point(spec)
    ks = np.round(np.linspace(0.0, 0.5, 11), 12)
    qs = np.linspace(-1.0, 1.0, cfg.grid_q)
    t = Table(_header(cfg, s_QPT=s_q, s_values=[0.0, s_q, 1.0], k_values=ks.tolist()),
              ["s", "k", "q", "in_band", "U"])
    for s in (0.0, s_q, 1.0):
        for k in ks:
            a = 1.0 - 2.0 * k
            inside = np.abs(qs) <= a + 1e-12
            U = np.full(qs.size, math.nan)
            U[inside] = effective_potential(spec, k, np.clip(qs[inside], -a, a), s)
            for q, ok, u in zip(qs, inside, U):
                t.add(s, k, q, bool(ok), u)
    return t


def cmd_action_vs_beta(cfg: RunConfig) -> Table:
    spec, s = cfg.spec(), cfg.s
    s_q = qpt_point(spec)
    if not s > s_q:
        raise InfeasibleError(f"s={s} is not above the zero-temperature transition s_QPT={s_q:.6f}")
    b_pt = critical_line(spec, s)
    plateau = optimal_quantum_action(spec, AnnealPoint(s)).sigma_opt
    betas = cfg.beta_max * np.arange(1, cfg.grid_beta + 1) / cfg.grid_beta
    t = Table(_header(cfg, s_QPT=s_q, beta_PT=b_pt, plateau=plateau),
              ["beta", "sigma_quantum", "mechanism", "sigma_classical", "plateau", "line_k0", "line_ridge",
               "beta_PT", "beta_cap"])
    for b in betas:
        pt = AnnealPoint(s, float(b))
        qr = optimal_quantum_action(spec, pt)
        cr = classical_escape_action(spec, pt)
        l0, l1 = bounding_lines(spec, s, float(b))
        t.add(b, qr.sigma_opt, qr.mechanism, cr.sigma_opt, plateau, l0, l1, b_pt, cfg.beta_max)
    qr = optimal_quantum_action(spec, AnnealPoint(s))
    t.add(math.inf, qr.sigma_opt, qr.mechanism, math.inf, plateau, math.inf, math.inf, b_pt, cfg.beta_max)
    return t


def default_compare_grids(n_qmin: int, n_qmax: int) -> tuple[np.ndarray, np.ndarray]:
    """Axis grids on which the reference cell (0.88, 0.955) is a node for n = 64."""
    qmin = np.round(np.linspace(0.0, 0.99, n_qmin), 12)
    qmax = np.round(0.01 + (0.955 - 0.01) / 61.0 * np.arange(n_qmax) * 63.0 / (n_qmax - 1), 12)
    return qmin, qmax


def cmd_compare(cfg: RunConfig) -> Table:
    qmin, qmax = default_compare_grids(cfg.grid_qmin, cfg.grid_qmax)
    if not any(a < b < (2.0 + a) / 3.0 for a in qmin for b in qmax):
        raise InfeasibleError("the requested grid contains no feasible (q_min, q_max) cell")
    cells = comparison_sweep(qmin, qmax, workers=default_workers())
    t = Table(_header(cfg, workers_env="PSPIN_WORKERS", qmin_grid=qmin.tolist(), qmax_grid=qmax.tolist()),
              ["record", "q_min", "q_max", "status", "xi_qa", "xi_qa_raw", "xi_qa_cap", "qa_algorithm", "s_F",
               "s_QPT", "beyond_qpt", "xi_sa", "xi_sa_raw", "xi_sa_cap", "sa_algorithm", "winner"])
    for c in cells:
        if c.status == "infeasible":
            t.add("cell", c.q_min, c.q_max, c.status, *([""] * 11), "")
            continue
        qa, sa = c.qa, c.sa
        t.add("cell", c.q_min, c.q_max, c.status, qa.xi, qa.xi_uncapped, qa.cap, qa.algorithm, qa.s_F, qa.s_QPT,
              qa.beyond_qpt, sa.xi, sa.xi_uncapped, sa.cap, sa.algorithm, c.winner)
    for a in qmin:
        t.add("boundary_lower", a, a, *([""] * 13))
        t.add("boundary_upper", a, (2.0 + a) / 3.0, *([""] * 13))
    return t


@dataclass
class OracleOutcome:
    table: Table
    passed: bool
    messages: list


def cmd_oracle(cfg: RunConfig) -> OracleOutcome:
    spec = cfg.spec()
    try:
        n_list = [int(x) for x in cfg.n_list.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"n_list must be comma separated integers, got {cfg.n_list!r}") from None
    chk = wkb_scaling_check(spec, N_list=n_list)
    occ_spec = PotentialSpec.cubic(cfg.occ_qmin, cfg.occ_qmax, cfg.spec_c)
    b_cross = occupation_crossing(occ_spec, cfg.occ_s, cfg.occ_n)
    b_pt = critical_line(occ_spec, cfg.occ_s)
    occ_dev = abs(b_cross - b_pt) / b_pt
    t = Table(_header(cfg), ["record", "key", "N", "K", "value"])
    for c, r in zip(chk.crossings, chk.ground_residual):
        t.add("splitting", "s_crossing", c.N, 0, c.s)
        t.add("splitting", "ln_gap", c.N, 0, c.log_gap)
        t.add("ground", "E0_per_spin_minus_Umin", c.N, 0, r)
    for key in ("slope", "intercept", "r2", "sigma_fit", "sigma_wkb", "rel_dev", "ground_C", "ground_C_r2"):
        t.add("fit", key, "", "", getattr(chk, key))
    t.add("fit", "flagged", "", "", chk.flagged)
    t.add("occupation", "beta_crossing", cfg.occ_n, "", b_cross)
    t.add("occupation", "beta_PT", "", "", b_pt)
    t.add("occupation", "rel_dev", cfg.occ_n, "", occ_dev)
    for K in range(cfg.overlap_n // 2 + 1):
        t.add("overlap", "amplitude", cfg.overlap_n, K, initial_final_overlap(cfg.overlap_n, K))
    msgs = []
    if chk.flagged:
        msgs.append(f"splitting fit flagged (R^2={chk.r2:.5f}, slope={chk.slope:.5g})")
    if not chk.rel_dev < 0.1:
        msgs.append(f"fitted action {chk.sigma_fit:.5g} deviates {chk.rel_dev:.1%} from WKB {chk.sigma_wkb:.5g}")
    if not occ_dev < 0.1:
        msgs.append(f"occupation crossing {b_cross:.5g} deviates {occ_dev:.1%} from beta_PT {b_pt:.5g}")
    return OracleOutcome(t, not msgs, msgs)


# --------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog=TOOL, description="Escape-rate exponents for annealing a p-spin model.")
    p.add_argument("--version", action="version", version=f"%(prog)s {version()}")
    sub = p.add_subparsers(dest="subcommand", required=True)

    def common(sp):
        sp.add_argument("--config", help="flat key = value file overriding the defaults")
        sp.add_argument("--spec-qmin", type=float, dest="spec_qmin")
        sp.add_argument("--spec-qmax", type=float, dest="spec_qmax")
        sp.add_argument("--spec-c", type=float, dest="spec_c")
        sp.add_argument("--out", help="output path, '-' for stdout")
        sp.add_argument("--format", choices=("csv", "json"))

    sp = sub.add_parser("potential", help="U(k, q) curves at s = 0, s_QPT and 1")
    common(sp)
    sp.add_argument("--grid-q", type=int, dest="grid_q")

    sp = sub.add_parser("action-vs-beta", help="escape exponents against inverse temperature")
    common(sp)
    sp.add_argument("--s", type=float)
    sp.add_argument("--grid-beta", type=int, dest="grid_beta")
    sp.add_argument("--beta-max", type=float, dest="beta_max")

    sp = sub.add_parser("compare", help="QA against SA exponents over (q_min, q_max)")
    common(sp)
    sp.add_argument("--grid-qmin", type=int, dest="grid_qmin")
    sp.add_argument("--grid-qmax", type=int, dest="grid_qmax")

    sp = sub.add_parser("oracle", help="finite-N checks of the semiclassical results")
    common(sp)
    sp.add_argument("--n-list", dest="n_list", help="comma separated spin counts")
    sp.add_argument("--occ-qmin", type=float, dest="occ_qmin")
    sp.add_argument("--occ-qmax", type=float, dest="occ_qmax")
    sp.add_argument("--occ-s", type=float, dest="occ_s")
    sp.add_argument("--occ-n", type=int, dest="occ_n")
    sp.add_argument("--overlap-n", type=int, dest="overlap_n")
    return p


_COMMANDS = {
    "potential": cmd_potential,
    "action-vs-beta": cmd_action_vs_beta,
    "compare": cmd_compare,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    cli_values = {k: v for k, v in vars(args).items() if k not in ("subcommand", "config")}
    try:
        file_values = read_config_file(args.config) if args.config else None
        cfg = resolve_config(args.subcommand, cli_values, file_values)
        if args.subcommand == "oracle":
            outcome = cmd_oracle(cfg)
            table = outcome.table
        else:
            outcome = None
            table = _COMMANDS[args.subcommand](cfg)
        write_output(table.render(cfg.format), cfg.out)
    except (ConfigError, DomainError) as exc:
        print(f"{TOOL}: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleError as exc:
        print(f"{TOOL}: infeasible parameters: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except OSError as exc:
        print(f"{TOOL}: {exc}", file=sys.stderr)
        return 1
    if outcome is not None and not outcome.passed:
        for m in outcome.messages:
            print(f"{TOOL}: oracle check failed: {m}", file=sys.stderr)
        return EXIT_ORACLE
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
