"""Command-line entry point: ``causalfair analyze|sweep|simulate|report``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from collections.abc import Sequence
from pathlib import Path
from typing import Any

import httpx

from .effects import Contrast
from .errors import (
    CardinalityError,
    ConfigError,
    DataError,
    FairnessError,
    LLMError,
    ReportError,
    UnidentifiableCellError,
)
from .estimator import DEFAULT_CAP
from .extensions import threshold_sweep
from .pipeline import AnalysisConfig, analyze, ledger_table, load_dataset
from .reporting.bundle import ReportBundle, round_value
from .reporting.llm import LlmConfig, request_report
from .reporting.prompt import assemble_prompts
from .reporting.sankey import sankey_export
from .scm import ScmSpec, ground_truth_ledger, sample

log = logging.getLogger("causalfair")

EXIT_OK = 0
EXIT_IDENTITY = 1
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_CAP = 4
EXIT_NETWORK = 5


def _write_json(path: Path, obj: Any) -> None:
    path.write_text(json.dumps(obj, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def _read_json(path: str | Path, what: str) -> Any:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read {what} {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{what} {path} is not valid JSON: {exc}") from None


def parse_grid(text: str) -> list[float]:
    """``"20,30,40"`` or ``"start:stop:step"`` (stop inclusive)."""
    text = text.strip()
    try:
        if ":" in text:
            start, stop, step = (float(p) for p in text.split(":"))
            if step <= 0:
                raise ConfigError("grid step must be positive")
            n = int(round((stop - start) / step))
            return [round(start + i * step, 10) for i in range(n + 1) if start + i * step <= stop + 1e-9]
        return [float(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse threshold grid {text!r}") from None


def _load_config(args: argparse.Namespace) -> AnalysisConfig:
    if not args.config:
        raise ConfigError("--config is required")
    cfg = AnalysisConfig.from_dict(_read_json(args.config, "config"))
    if getattr(args, "stepwise", None) is not None:
        cfg.stepwise_states = [s for s in args.stepwise.split(",") if s] if args.stepwise else []
    if getattr(args, "pairs", False):
        cfg.pairs = True
    if getattr(args, "sweep_grid", None):
        cfg.sweep_grid = parse_grid(args.sweep_grid)
    return cfg


def _out_dir(args: argparse.Namespace) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# commands


def cmd_analyze(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    if not args.data:
        raise ConfigError("--data is required")
    d = load_dataset(args.data, cfg)
    result = analyze(d, cfg, alpha=args.alpha, cap=args.cap)
    out = _out_dir(args)
    (out / "report.json").write_text(result.bundle.to_json(), encoding="utf-8")
    table = ledger_table(result.ledger, result.mediators, result.confounders)
    (out / "ledger.txt").write_text(table, encoding="utf-8")
    _write_json(out / "sankey.json", _rounded_sankey(sankey_export(result.ledger, result.mediators, result.confounders)))
    print(table, end="")
    return EXIT_OK


def _rounded_sankey(s: dict[str, Any]) -> dict[str, Any]:
    for link in s["links"]:
        link["value"] = round_value(link["value"])
    return s


CURVE_COLUMNS = ("tv", "te", "de", "ie", "se")


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    if not args.data:
        raise ConfigError("--data is required")
    d = load_dataset(args.data, cfg)
    curve = threshold_sweep(
        d,
        cfg.roles,
        cfg.sweep_grid,
        alpha=args.alpha,
        strict=cfg.strict_threshold,
        selected_threshold=cfg.selected_threshold,
        cap=args.cap,
    )
    out = _out_dir(args)
    payload = {
        "grid": curve.grid,
        **{k: [round_value(v) for v in curve.values[k]] for k in CURVE_COLUMNS},
        "argmax": curve.argmax,
        "selected_threshold": curve.selected_threshold,
        "strict": curve.strict,
        "x0": curve.x0,
        "x1": curve.x1,
    }
    _write_json(out / "curve.json", payload)
    with open(out / "curve.tsv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(["threshold", *CURVE_COLUMNS])
        for row in curve.rows():
            w.writerow([f"{row['threshold']:g}", *(f"{row[k]:.4f}" for k in CURVE_COLUMNS)])
    for k in CURVE_COLUMNS:
        print(f"argmax {k}: {curve.argmax[k]:g}")
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    spec_path = args.spec or args.config
    if not spec_path:
        raise ConfigError("--spec is required")
    spec = ScmSpec.from_json(_read_json(spec_path, "SCM spec"))
    if args.n is None or args.n < 1:
        raise ConfigError("--n must be at least 1")
    out = _out_dir(args)
    d = sample(spec, args.n, args.seed)
    d.to_csv(out / "data.csv")
    r = spec.roles
    y = r.y_target if r.y_target is not None else spec.variable(r.y).states[-1]
    ledger = ground_truth_ledger(spec, Contrast(r.x0_states[0], r.x1_states[0], y))
    _write_json(
        out / "ground_truth.json",
        {
            "x0": r.x0_states[0],
            "x1": r.x1_states[0],
            "y": y,
            "effects": {
                "tv": ledger.tv,
                "te": ledger.te,
                "se": ledger.se,
                "de": ledger.de,
                "ie": ledger.ie,
                "ie_reversed": ledger.ie_reversed,
            },
            "n": args.n,
            "seed": args.seed,
        },
    )
    print(f"wrote {args.n} rows to {out / 'data.csv'}")
    return EXIT_OK


def _replay_transport(path: str) -> httpx.MockTransport:
    recorded = _read_json(path, "recorded response")
    status = int(recorded.get("status_code", 200)) if isinstance(recorded, dict) else 200
    body = recorded.get("body", recorded) if isinstance(recorded, dict) else recorded
    return httpx.MockTransport(lambda request: httpx.Response(status, json=body))


def cmd_report(args: argparse.Namespace) -> int:
    if not args.bundle:
        raise ConfigError("--bundle is required")
    try:
        text = Path(args.bundle).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read bundle {args.bundle}: {exc.strerror}") from None
    bundle = ReportBundle.from_json(text)
    prompts = assemble_prompts(bundle)
    out = _out_dir(args)
    _write_json(out / "prompts.json", prompts.to_dict())
    if not args.llm:
        print(f"wrote prompts to {out / 'prompts.json'} (llm disabled)")
        return EXIT_OK
    cfg = LlmConfig.load(args.llm)
    transport = _replay_transport(args.replay) if args.replay else None
    if not cfg.enabled and transport is None:
        raise ConfigError("llm config is not enabled; set \"enabled\": true for live calls")
    report = request_report(cfg, prompts, transport=transport)
    if report.structure_violation:
        (out / "report_raw.txt").write_text(report.raw, encoding="utf-8")
        log.warning("reply violates the two-section layout; raw text saved")
        return EXIT_OK
    (out / "report.txt").write_text(report.text_section + "\n", encoding="utf-8")
    (out / "report.tex").write_text(report.latex_section + "\n", encoding="utf-8")
    print(f"wrote {out / 'report.txt'} and {out / 'report.tex'}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="causalfair", description="Causal fairness decomposition of tabular data.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp: argparse.ArgumentParser) -> None:
        sp.add_argument("--data", help="input CSV (headered)")
        sp.add_argument("--config", help="JSON config with roles and binning")
        sp.add_argument("--out", default="out", help="output directory")
        sp.add_argument("--alpha", type=float, default=1.0, help="Laplace pseudo-count (default 1.0)")
        sp.add_argument("--cap", type=int, default=DEFAULT_CAP, help="joint state-space limit")

    a = sub.add_parser("analyze", help="effects, decompositions and report bundle")
    common(a)
    a.add_argument("--stepwise", nargs="?", const="", help="comma-separated ordered X states (default: declared order)")
    a.add_argument("--pairs", action="store_true", help="add pairwise results for every x0 x x1 state pair")
    a.add_argument("--sweep-grid", help="threshold grid for a numeric Y, e.g. 20:60:1 or 20,35,40")
    a.set_defaults(func=cmd_analyze)

    s = sub.add_parser("sweep", help="effects of a binarised numeric target across thresholds")
    common(s)
    s.add_argument("--sweep-grid", help="threshold grid, e.g. 20:60:1 or 20,35,40 (default: observed values)")
    s.set_defaults(func=cmd_sweep)

    m = sub.add_parser("simulate", help="sample a dataset from an SCM spec with its ground truth")
    m.add_argument("--spec", help="SCM spec JSON")
    m.add_argument("--config", help=argparse.SUPPRESS)
    m.add_argument("--n", type=int, default=None, help="number of rows")
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--out", default="out")
    m.set_defaults(func=cmd_simulate)

    r = sub.add_parser("report", help="assemble prompts and optionally request a narrative report")
    r.add_argument("--bundle", help="report.json produced by analyze")
    r.add_argument("--llm", help="llm config JSON; omit for offline prompts only")
    r.add_argument("--replay", help="recorded endpoint response to use instead of the network")
    r.add_argument("--out", default="out")
    r.set_defaults(func=cmd_report)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ReportError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, UnidentifiableCellError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except CardinalityError as exc:
        print(f"cardinality error: {exc}", file=sys.stderr)
        return EXIT_CAP
    except LLMError as exc:
        print(f"reporting endpoint error: {exc}", file=sys.stderr)
        return EXIT_NETWORK
    except FairnessError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IDENTITY


if __name__ == "__main__":
    sys.exit(main())
