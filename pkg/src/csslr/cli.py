"""Command-line entry points: ``csslr select`` and ``csslr simulate``.

Exit codes: 0 success, 2 invalid input (usage, files, config, data), 3 a
failure inside model fitting or selection.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

from . import __version__
from .data import (
    PROFILES,
    ConfigError,
    DataError,
    Dataset,
    SelectionConfig,
    SignExpectation,
    load_dataset,
    load_signs,
    parse_config,
)
from .engine import SelectionResult, StepRecord, run_csslr
from .glm import SingularMatrixError
from .quality import auc, brier
from .simulation import (
    BASELINE_METHODS,
    BUILTIN_STUDIES,
    StudySpec,
    default_jobs,
    load_study,
    resolve_configs,
    run_study,
    study_from_mapping,
)

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_ENGINE = 3
OUT_DIR_ENV = "CSSLR_OUT_DIR"

log = logging.getLogger("csslr")


class _Parser(argparse.ArgumentParser):
    """ArgumentParser whose usage errors exit with the validation code."""

    def error(self, message):  # pragma: no cover - exercised through main()
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


def _fmt_p(p: float | None) -> str:
    return "-" if p is None else f"{p:.4g}"


def _vars(names: Sequence[str]) -> str:
    return "{" + ", ".join(names) + "}" if names else "{}"


@dataclass(frozen=True)
class RunReport:
    """Everything needed to audit one selection run.

    ``render`` is a pure function of the fields, so a stored report can be
    regenerated byte for byte.
    """

    timestamp: str
    config: SelectionConfig
    data: Dataset
    result: SelectionResult

    @property
    def config_hash(self) -> str:
        return self.config.hash()

    def model_lines(self) -> list[str]:
        lines = []
        leader_keys = {m.key for m in self.result.leaders}
        for i, m in enumerate(self.result.final_models, 1):
            tag = " (leader)" if m.key in leader_keys else ""
            y = self.data.response
            lines.append(f"Model {i}{tag}: {m.describe()}")
            lines.append(f"  AUC {auc(m.fitted_probs, y):.6f}  MSE {brier(m.fitted_probs, y):.6f}"
                         f"  AIC {m.aic:.4f}  logL {m.log_likelihood:.4f}")
            lines.append(f"  {'term':<16}{'estimate':>14}{'std.error':>14}")
            lines.append(f"  {'(intercept)':<16}{m.intercept:>14.6f}{m.coef_std_errors[0]:>14.6f}")
            for name, b, se in zip(m.variable_names, m.coefficients, m.coef_std_errors[1:]):
                lines.append(f"  {name:<16}{b:>14.6f}{se:>14.6f}")
        return lines

    def render(self) -> str:
        r = self.result
        out = [
            "CSSLR run report",
            f"timestamp: {self.timestamp}",
            f"version: {__version__}",
            f"config hash: {self.config_hash}",
            f"config: {self.config.canonical_json()}",
            f"dataset fingerprint: {self.data.fingerprint()}",
            f"observations: {self.data.n} (bad: {self.data.n_bad})",
            f"variables: {len(self.data.names)}",
            f"terminated by: {r.terminated_by.value} after {len(r.trace)} step(s)",
            "",
            f"Final models ({len(r.final_models)})",
            *self.model_lines(),
            "",
            "Step trace",
            *text_trace(r).splitlines(),
        ]
        return "\n".join(out) + "\n"


def _step_text(rec: StepRecord) -> list[str]:
    lines = [f"step {rec.step}: {len(rec.candidates)} candidate(s)"]
    for c in rec.candidates:
        v = c.verdict
        head = f"  {_vars(c.base_variables)} + {c.candidate_variable}: "
        if v is None:
            lines.append(head + f"not fitted ({c.reason})")
            continue
        status = "accepted" if c.accepted else "rejected"
        lines.append(
            head + f"{status} lr={_fmt_p(v.p_lr)} sign={'ok' if v.sign_pass else 'wrong'}"
            f" vif={v.max_vif:.3g} calib={_fmt_p(v.p_spiegelhalter)}"
            f" aic={v.aic_base:.2f}->{v.aic_candidate:.2f}"
            f" auc={_fmt_p(v.p_auc)}/{v.auc_direction.value}"
            f" mse={_fmt_p(v.p_mse)}/{v.mse_direction.value}")
        for t in c.trims:
            why = "wrong sign" if t.wrong_sign else "no contribution"
            lines.append(f"    trimmed {t.variable} ({why}; lr={_fmt_p(t.p_lr)}"
                         f" auc={_fmt_p(t.p_auc)} mse={_fmt_p(t.p_mse)})")
        if c.reason and not c.accepted and v.improved:
            lines.append(f"    {c.reason}")
    if rec.stopped:
        lines.append("  no improved model; selection stops")
    else:
        lines.append("  deleted: " + ", ".join(_vars(d) for d in rec.deleted))
        lines.append("  improved: " + ", ".join(_vars(d) for d in rec.improved))
        lines.append("  leaders: " + ", ".join(_vars(d) for d in rec.leaders))
        for m, ld, eq in rec.equivalence:
            lines.append(f"  {_vars(m)} vs {_vars(ld)}: {'equivalent' if eq else 'dominated'}")
        if rec.dropped_by_cap:
            lines.append("  dropped by cap: " + ", ".join(_vars(d) for d in rec.dropped_by_cap))
        lines.append("  models after step: " + ", ".join(_vars(d) for d in rec.models_after))
    return lines


def text_trace(result: SelectionResult) -> str:
    return "\n".join(line for rec in result.trace for line in _step_text(rec)) + "\n"


def structured_trace(result: SelectionResult) -> str:
    """One JSON object per evaluated candidate, one per line."""
    return "".join(json.dumps(c.to_dict(), sort_keys=True) + "\n"
                   for c in result.candidate_records())


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_select(args: argparse.Namespace) -> int:
    try:
        data = load_dataset(args.data, args.response)
        config = parse_config(args.config)
        signs = load_signs(args.signs, data) if args.signs else SignExpectation()
    except (DataError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: cannot read {exc.filename}: {exc.strerror}", file=sys.stderr)
        return EXIT_INVALID

    try:
        result = run_csslr(data, signs, config)
    except (SingularMatrixError, ValueError, ArithmeticError) as exc:
        print(f"error: selection failed: {exc}", file=sys.stderr)
        return EXIT_ENGINE

    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        stamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
        report = RunReport(stamp, config, data, result)
        (out / "report.txt").write_text(report.render(), encoding="utf-8")
        if args.trace_format == "structured":
            (out / "trace.jsonl").write_text(structured_trace(result), encoding="utf-8")
        else:
            (out / "trace.txt").write_text(text_trace(result), encoding="utf-8")
    except OSError as exc:
        print(f"error: cannot write output: {exc}", file=sys.stderr)
        return EXIT_INVALID

    print(f"{len(result.final_models)} final model(s):")
    for m in result.final_models:
        print(f"  {m.describe()}  AUC {result.aucs[m.key]:.4f}  MSE {result.mses[m.key]:.4f}"
              f"  AIC {m.aic:.2f}")
    print(f"report written to {out / 'report.txt'}")
    return EXIT_OK


def _study_from_args(args: argparse.Namespace) -> StudySpec:
    fields: dict = {"base": args.study} if args.study in BUILTIN_STUDIES else {}
    if args.study and args.study not in BUILTIN_STUDIES:
        base = load_study(args.study)
        fields = {f: getattr(base, f) for f in base.__dataclass_fields__}
    for name in ("n_strong", "n_weak", "n_nuisance", "mu_strong", "mu_weak", "K",
                 "replications", "seed", "counting"):
        value = getattr(args, name)
        if value is not None:
            fields[name] = value
    if args.methods:
        fields["methods"] = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    return study_from_mapping(fields)


def _parse_config_overrides(items: Sequence[str]) -> dict[str, SelectionConfig]:
    configs = {}
    for item in items:
        name, sep, path = item.partition("=")
        if not sep or not name or not path:
            raise ConfigError(f"--config expects NAME=PATH, got {item!r}")
        if name in BASELINE_METHODS:
            raise ConfigError(f"{name} is a baseline and takes no config")
        configs[name] = parse_config(path)
    return configs


def cmd_simulate(args: argparse.Namespace) -> int:
    try:
        spec = _study_from_args(args)
        configs = _parse_config_overrides(args.config or [])
        jobs = args.jobs if args.jobs is not None else default_jobs()
        if jobs < 1:
            raise ConfigError("--jobs must be at least 1")
        # validate method names before any work starts
        resolve_configs(spec.methods, configs)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: cannot read {exc.filename}: {exc.strerror}", file=sys.stderr)
        return EXIT_INVALID

    result = run_study(spec, configs, jobs=jobs)
    print(result.to_table(), end="")
    if args.out:
        try:
            Path(args.out).write_text(result.to_csv(), encoding="utf-8")
        except OSError as exc:
            print(f"error: cannot write output: {exc}", file=sys.stderr)
            return EXIT_INVALID
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="csslr", description="Comprehensive stepwise selection for logistic regression.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sel = sub.add_parser("select", help="run the selection on a CSV dataset")
    sel.add_argument("--data", required=True, help="CSV file with a header row")
    sel.add_argument("--response", required=True, help="name of the 0/1 response column")
    sel.add_argument("--config", required=True,
                     help="YAML config file; may set 'profile: CSSLR1a' and override keys")
    sel.add_argument("--signs", help="CSV of name,expected_sign (positive/negative/none)")
    sel.add_argument("--out", default=os.environ.get(OUT_DIR_ENV, "."),
                     help=f"output directory (default: ${OUT_DIR_ENV} or the current directory)")
    sel.add_argument("--trace-format", choices=("text", "structured"), default="text")
    sel.set_defaults(func=cmd_select)

    sim = sub.add_parser("simulate", help="run a Monte Carlo selection study")
    sim.add_argument("--study", default="table3",
                     help=f"built-in study ({', '.join(BUILTIN_STUDIES)}) or YAML file")
    sim.add_argument("--n-strong", dest="n_strong", type=int)
    sim.add_argument("--n-weak", dest="n_weak", type=int)
    sim.add_argument("--n-nuisance", dest="n_nuisance", type=int)
    sim.add_argument("--mu-strong", dest="mu_strong", type=float)
    sim.add_argument("--mu-weak", dest="mu_weak", type=float)
    sim.add_argument("-K", dest="K", type=int, help="observations per class")
    sim.add_argument("--replications", type=int)
    sim.add_argument("--seed", type=int)
    sim.add_argument("--methods", help=f"comma-separated; profiles {', '.join(PROFILES)}"
                                       f" or baselines {', '.join(BASELINE_METHODS)}")
    sim.add_argument("--counting", choices=("representative", "union"))
    sim.add_argument("--config", action="append", metavar="NAME=PATH",
                     help="register a config file under a method name (repeatable)")
    sim.add_argument("--jobs", type=int, help="worker processes (default: available cores)")
    sim.add_argument("--out", help="write the result table as CSV to this file")
    sim.set_defaults(func=cmd_simulate)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
