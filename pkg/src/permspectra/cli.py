"""Command line interface.

Every run is determined by a :class:`RunConfig`.  Values come from an
optional ``key=value`` file (``--config``) and from flags, flags winning.
Each output starts with a comment (CSV) or a ``config`` entry (JSON) that
echoes the full configuration.

Exit codes: 0 success, 2 usage or parameter error, 3 unsupported
operation or violated precondition, 4 numerical failure, 5 failed
verification.
"""

from __future__ import annotations

import argparse
import io
import json
import math
import sys
from dataclasses import asdict, dataclass, fields
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import CapabilityError, NumericalFailure, ParameterError, PreconditionError
from .exact_measures import Indicator, mean_measure, q_correlation
from .gap_solver import fourier_gap, mc_gap, solve_volterra
from .sampling_core import RandomStream, law_to_text, limit_shift_law, parse_law
from .spectrum import (
    eigenvalues_from_cycles, sample_cycle_data, sample_tau_infinity_batch, sample_tau_n_batch,
    trace_power,
)
from .verification import SUITES, render_json, render_table, run_suite
from .virtual_permutation import crp_to_permutation, sample_crp_prefix

EXIT_OK, EXIT_USAGE, EXIT_CAPABILITY, EXIT_NUMERICAL, EXIT_VERIFY = 0, 2, 3, 4, 5


class UsageError(Exception):
    """Bad command line or configuration file."""


@dataclass
class RunConfig:
    """All inputs of one run; ``None`` marks an unset optional key."""

    command: str
    theta: float | None = None
    law: str | None = None
    n: str | None = None
    seed: int = 0
    samples: int = 1
    output: str | None = None
    h: float = 1e-3
    x_max: float = 10.0
    k_max: int | None = None
    window: float = 5.0
    tol: float = 1e-12
    method: str = "volterra"
    k: int = 12
    f: tuple = ()
    suite: str = "oracle"

    def echo(self) -> str:
        """``key=value`` pairs in field order, the output header."""
        parts = []
        for fl in fields(self):
            v = getattr(self, fl.name)
            if fl.name == "command" or v is None or v == ():
                continue
            if isinstance(v, tuple):
                v = ";".join(v)
            parts.append(f"{fl.name}={v}")
        return f"permspectra {self.command} " + " ".join(parts)

    def as_dict(self) -> dict:
        d = asdict(self)
        d["f"] = list(self.f)
        return d


def _pos_float(text: str) -> float:
    v = float(text)
    if not v > 0 or not math.isfinite(v):
        raise ValueError("must be a positive finite number")
    return v


def _nonneg_int(text: str) -> int:
    v = int(text)
    if v < 0:
        raise ValueError("must be non-negative")
    return v


def _pos_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise ValueError("must be positive")
    return v


def _size(text: str) -> str:
    if text.strip().lower() in ("inf", "infinity"):
        return "inf"
    return str(_pos_int(text))


def _law(text: str) -> str:
    return law_to_text(parse_law(text))


def _method(text: str) -> str:
    if text not in ("volterra", "fourier", "mc"):
        raise ValueError("must be volterra, fourier or mc")
    return text


def _suite(text: str) -> str:
    if text != "all" and text not in SUITES:
        raise ValueError(f"must be one of {', '.join(SUITES)} or all")
    return text


def _seed(text: str) -> int:
    v = int(text)
    if not 0 <= v < 1 << 64:
        raise ValueError("must lie in [0, 2**64)")
    return v


def _test_function(text: str) -> str:
    parse_test_function(text)
    return text.strip()


CONVERTERS = {
    "theta": _pos_float,
    "law": _law,
    "n": _size,
    "seed": _seed,
    "samples": _pos_int,
    "output": str,
    "h": _pos_float,
    "x_max": _pos_float,
    "k_max": _pos_int,
    "window": _pos_float,
    "tol": _pos_float,
    "method": _method,
    "k": _pos_int,
    "f": _test_function,
    "suite": _suite,
}

REQUIRED = {
    "sample-spectrum": ("theta", "law", "n"),
    "sample-angles": ("theta", "law", "n"),
    "mean-measure": ("theta", "law", "n"),
    "correlation": ("theta", "law", "n", "f"),
    "gap": ("theta",),
    "trace": ("theta", "law", "n"),
    "verify": (),
}


def parse_test_function(text: str) -> Indicator:
    """``one``, ``arc:a_lo,a_hi``, ``radial:r_lo,r_hi`` or ``indicator:r_lo,r_hi,a_lo,a_hi``.

    Arc endpoints are fractions of a full turn and are read exactly
    (``1/4`` or ``0.25``).
    """
    name, _, rest = text.strip().partition(":")
    args = [a.strip() for a in rest.split(",")] if rest else []
    try:
        if name == "one" and not args:
            return Indicator()
        if name == "arc" and len(args) == 2:
            return Indicator(a_lo=Fraction(args[0]), a_hi=Fraction(args[1]))
        if name == "radial" and len(args) == 2:
            return Indicator(r_lo=float(args[0]), r_hi=float(args[1]))
        if name == "indicator" and len(args) == 4:
            return Indicator(float(args[0]), float(args[1]), Fraction(args[2]), Fraction(args[3]))
    except (ValueError, ZeroDivisionError) as exc:
        raise ParameterError(f"malformed test function {text!r}: {exc}") from exc
    raise ParameterError(f"unknown test function {text!r}")


def _convert(key: str, value: str):
    try:
        return CONVERTERS[key](value)
    except (ValueError, ParameterError, ZeroDivisionError) as exc:
        raise UsageError(f"invalid value for {key}: {value!r} ({exc})") from exc


def read_config_file(path: str) -> dict:
    """Parse a ``key=value`` file; ``#`` starts a comment, ``f`` may repeat."""
    out: dict = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    for i, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, eq, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not eq:
            raise UsageError(f"{path}:{i}: expected key=value")
        if key not in CONVERTERS:
            raise UsageError(f"{path}:{i}: unknown key {key!r}")
        v = _convert(key, value.strip())
        if key == "f":
            out["f"] = out.get("f", ()) + (v,)
        else:
            out[key] = v
    return out


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="permspectra",
                description="Spectra of random generalised permutation matrices.")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("sample-spectrum", "eigenvalues of sampled matrices (CSV)"),
        ("sample-angles", "scaled eigenangles in [-window, window] (CSV)"),
        ("mean-measure", "mean eigenvalue measure as a mixture (JSON)"),
        ("correlation", "q-point correlation against indicator test functions (JSON)"),
        ("gap", "law of the smallest scaled eigenangle (CSV)"),
        ("trace", "traces of matrix powers (CSV)"),
        ("verify", "run an acceptance suite (JSON report)"),
    ):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", default=None, help="key=value configuration file")
        for key in CONVERTERS:
            flag = "--" + key.replace("_", "-")
            if key == "f":
                sp.add_argument(flag, action="append", default=None,
                                help="test function; repeat for a product")
            else:
                sp.add_argument(flag, default=None, dest=key)
    return p


def parse_config(argv: Sequence[str]) -> RunConfig:
    """Merge the config file and the flags, then check the required keys."""
    ns = _build_parser().parse_args(list(argv))
    values = read_config_file(ns.config) if ns.config else {}
    for key in CONVERTERS:
        raw = getattr(ns, key)
        if raw is None:
            continue
        if key == "f":
            values["f"] = tuple(_convert("f", x) for x in raw)
        else:
            values[key] = _convert(key, raw)
    missing = [k for k in REQUIRED[ns.command] if k not in values]
    if missing:
        raise UsageError(f"{ns.command}: missing required key(s) {', '.join(missing)}")
    return RunConfig(command=ns.command, **values)


# ---------------------------------------------------------------- commands

def _size_value(cfg: RunConfig):
    return math.inf if cfg.n == "inf" else int(cfg.n)


def _finite_size(cfg: RunConfig) -> int:
    if cfg.n == "inf":
        raise ParameterError(f"{cfg.command} needs a finite n")
    return int(cfg.n)


def _sample_sigma_and_data(cfg: RunConfig, i: int):
    st = RandomStream(cfg.seed).spawn(i)
    N = _finite_size(cfg)
    sigma = crp_to_permutation(sample_crp_prefix(cfg.theta, N, st.spawn(0)))
    return sigma, sample_cycle_data(sigma, parse_law(cfg.law), st.spawn(1))


def _cmd_sample_spectrum(cfg: RunConfig) -> str:
    buf = io.StringIO()
    buf.write("sample,re,im,multiplicity\n")
    for i in range(cfg.samples):
        _, data = _sample_sigma_and_data(cfg, i)
        m = eigenvalues_from_cycles(data)
        for z, c in zip(m.points, m.multiplicity):
            buf.write(f"{i},{float(z.real)!r},{float(z.imag)!r},{int(c)}\n")
    return buf.getvalue()


def _cmd_sample_angles(cfg: RunConfig) -> str:
    law = parse_law(cfg.law)
    stream = RandomStream(cfg.seed)
    N = _size_value(cfg)
    if math.isinf(N):
        batch = sample_tau_infinity_batch(cfg.theta, limit_shift_law(law), cfg.samples,
                                          cfg.window, stream, cfg.tol)
    else:
        batch = sample_tau_n_batch(cfg.theta, N, law, cfg.samples, cfg.window, stream)
    buf = io.StringIO()
    if batch.zero_atoms is not None:
        buf.write("# infinite_atom_at_zero=true\n")
    buf.write("sample,x\n")
    for s, x in zip(batch.sample_index, batch.points):
        buf.write(f"{int(s)},{float(x)!r}\n")
    return buf.getvalue()


def _cmd_mean_measure(cfg: RunConfig) -> str:
    N = _size_value(cfg)
    m = mean_measure(N, cfg.theta, parse_law(cfg.law), cfg.k_max)
    doc = {"config": cfg.as_dict(), "measure": json.loads(m.to_json())}
    return json.dumps(doc, sort_keys=True, default=str) + "\n"


def _cmd_correlation(cfg: RunConfig) -> str:
    N = _size_value(cfg)
    fs = [parse_test_function(t) for t in cfg.f]
    v = q_correlation(N, cfg.theta, parse_law(cfg.law), fs, cfg.k_max)
    doc = {"config": cfg.as_dict(), "q": len(fs), "value": v}
    return json.dumps(doc, sort_keys=True, default=str) + "\n"


def _cmd_gap(cfg: RunConfig) -> str:
    if cfg.method == "volterra":
        g = solve_volterra(cfg.theta, cfg.h, cfg.x_max)
    elif cfg.method == "fourier":
        g = fourier_gap(cfg.theta, x_max=cfg.x_max, h=cfg.h)
    else:
        grid = cfg.h * np.arange(int(math.ceil(cfg.x_max / cfg.h - 1e-9)) + 1)
        g = mc_gap(cfg.theta, cfg.samples, RandomStream(cfg.seed), cfg.tol, grid)
    return g.to_csv()


def _cmd_trace(cfg: RunConfig) -> str:
    buf = io.StringIO()
    buf.write("sample,k,re,im\n")
    for i in range(cfg.samples):
        _, data = _sample_sigma_and_data(cfg, i)
        for k in range(1, cfg.k + 1):
            t = trace_power(data, k)
            buf.write(f"{i},{k},{float(t.real)!r},{float(t.imag)!r}\n")
    return buf.getvalue()


COMMANDS = {
    "sample-spectrum": _cmd_sample_spectrum,
    "sample-angles": _cmd_sample_angles,
    "mean-measure": _cmd_mean_measure,
    "correlation": _cmd_correlation,
    "gap": _cmd_gap,
    "trace": _cmd_trace,
}


def _emit(cfg: RunConfig, text: str) -> None:
    if cfg.output:
        with open(cfg.output, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def execute(cfg: RunConfig) -> int:
    """Run one configured command and return its exit code."""
    if cfg.command == "verify":
        reports = run_suite(cfg.suite, cfg.seed)
        doc = json.loads(render_json(cfg.suite, cfg.seed, reports))
        doc["config"] = cfg.as_dict()
        _emit(cfg, json.dumps(doc, sort_keys=True, indent=1) + "\n")
        table = render_table(reports)
        (sys.stderr if not cfg.output else sys.stdout).write(table)
        return EXIT_OK if all(r.passed for r in reports) else EXIT_VERIFY
    body = COMMANDS[cfg.command](cfg)
    if not body.startswith("{"):
        body = f"# {cfg.echo()}\n" + body
    _emit(cfg, body)
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        cfg = parse_config(argv)
        return execute(cfg)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ParameterError as exc:
        print(f"parameter error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CapabilityError, PreconditionError) as exc:
        print(f"unsupported: {exc}", file=sys.stderr)
        return EXIT_CAPABILITY
    except NumericalFailure as exc:
        extra = f" (residual {exc.residual:.3g})" if exc.residual is not None else ""
        print(f"numerical failure: {exc}{extra}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
